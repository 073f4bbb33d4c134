#pragma once

#include <string>

#include "cvae/tensor.hpp"

namespace cvae {

/// Decodes a PNG or JPEG file (sniffed by magic bytes) into [C,H,W] doubles
/// in [0,1]. `channels` selects gray (1) or RGB (3) output.
Tensor read_image(const std::string& path, int channels = 3);

/// Writes an image tensor [C,H,W] (C in {1,3}, values clamped to [0,1]) as an
/// 8-bit PNG.
void write_png(const std::string& path, const Tensor& image);

/// Bilinear resize of [C,H,W] to [C,out_h,out_w].
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

}  // namespace cvae
