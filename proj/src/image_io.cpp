#include "cvae/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>

namespace cvae {

namespace {

Tensor from_rgb8(const std::vector<unsigned char>& rgb, int h, int w, int channels) {
    Tensor out({channels, h, w});
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int64_t i = 0; i < plane; ++i) {
        double r = rgb[static_cast<size_t>(3 * i)] / 255.0;
        double g = rgb[static_cast<size_t>(3 * i + 1)] / 255.0;
        double b = rgb[static_cast<size_t>(3 * i + 2)] / 255.0;
        if (channels == 3) {
            out[i] = r;
            out[plane + i] = g;
            out[2 * plane + i] = b;
        } else {
            out[i] = (r + g + b) / 3.0;
        }
    }
    return out;
}

Tensor read_png_file(const std::string& path, int channels) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("failed to open PNG '" + path + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("failed to decode PNG '" + path + "': " + msg);
    }
    return from_rgb8(buffer, static_cast<int>(image.height),
                     static_cast<int>(image.width), channels);
}

struct JpegErr {
    jpeg_error_mgr mgr;
    jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    longjmp(err->jump, 1);
}

Tensor read_jpeg_file(const std::string& path, int channels) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("failed to open JPEG '" + path + "'");

    jpeg_decompress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    std::vector<unsigned char> rgb;
    int h = 0, w = 0;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(f);
        throw std::runtime_error("failed to decode JPEG '" + path + "': " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = static_cast<int>(cinfo.output_height);
    w = static_cast<int>(cinfo.output_width);
    rgb.resize(static_cast<size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = rgb.data() + static_cast<size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return from_rgb8(rgb, h, w, channels);
}

}  // namespace

Tensor read_image(const std::string& path, int channels) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("read_image: channels must be 1 or 3");
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("missing image file '" + path + "'");
    unsigned char magic[4] = {0, 0, 0, 0};
    size_t got = std::fread(magic, 1, sizeof magic, f);
    std::fclose(f);
    if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
        return read_png_file(path, channels);
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8)
        return read_jpeg_file(path, channels);
    throw std::runtime_error("unsupported image format in '" + path + "'");
}

void write_png(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw std::invalid_argument("write_png: expects [C,H,W] with C in {1,3}");
    int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<unsigned char> bytes(static_cast<size_t>(plane) * c);
    for (int64_t i = 0; i < plane; ++i)
        for (int ch = 0; ch < c; ++ch) {
            double v = std::clamp(image[ch * plane + i], 0.0, 1.0);
            bytes[static_cast<size_t>(i) * c + ch] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }

    png_image out;
    std::memset(&out, 0, sizeof out);
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(w);
    out.height = static_cast<png_uint_32>(h);
    out.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw std::runtime_error("failed to write PNG '" + path + "': " + out.message);
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
    if (image.ndim() != 3) throw std::invalid_argument("resize_bilinear: expects [C,H,W]");
    int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h == out_h && w == out_w) return image;
    Tensor out({c, out_h, out_w});
    double sy = static_cast<double>(h) / out_h;
    double sx = static_cast<double>(w) / out_w;
    for (int ch = 0; ch < c; ++ch) {
        const double* src = image.data() + static_cast<int64_t>(ch) * h * w;
        double* dst = out.data() + static_cast<int64_t>(ch) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            double fy = (i + 0.5) * sy - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            double wy = fy - y0;
            int ya = std::clamp(y0, 0, h - 1), yb = std::clamp(y0 + 1, 0, h - 1);
            for (int j = 0; j < out_w; ++j) {
                double fx = (j + 0.5) * sx - 0.5;
                int x0 = static_cast<int>(std::floor(fx));
                double wx = fx - x0;
                int xa = std::clamp(x0, 0, w - 1), xb = std::clamp(x0 + 1, 0, w - 1);
                double top = src[static_cast<int64_t>(ya) * w + xa] * (1 - wx) +
                             src[static_cast<int64_t>(ya) * w + xb] * wx;
                double bot = src[static_cast<int64_t>(yb) * w + xa] * (1 - wx) +
                             src[static_cast<int64_t>(yb) * w + xb] * wx;
                dst[static_cast<int64_t>(i) * out_w + j] = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace cvae
