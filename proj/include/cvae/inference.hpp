#pragma once

#include <string>
#include <vector>

#include "cvae/models.hpp"

namespace cvae {

/// Deterministic reconstruction: decode the posterior mean. x:[N,C,H,W],
/// y:[N,A] -> [N,C,H,W].
Tensor reconstruct(CvaeModel& model, const Tensor& x, const Tensor& y);

/// Attribute-conditioned sampling. For the flow setting the latent is the
/// label-encoder affine transform mu_p + noise * sigma_p; for the others the
/// raw standard-normal draw is decoded directly. through_flow additionally
/// pulls the transformed latent back through the flow inverse (non-default,
/// density-consistent variant).
Tensor sample_conditional(CvaeModel& model, const Tensor& attrs, uint64_t seed,
                          bool through_flow = false);

/// Same, with the noise supplied by the caller (noise: [N,D]).
Tensor sample_conditional_with_noise(CvaeModel& model, const Tensor& attrs,
                                     const Tensor& noise, bool through_flow = false);

/// Writes a PNG grid with one row per attribute vector and `cols` samples per
/// row; rows follow the input order. Bytes are a pure function of
/// (model, attr_rows, cols, seed).
void sample_grid(CvaeModel& model, const std::vector<Tensor>& attr_rows, int cols,
                 uint64_t seed, const std::string& out_path,
                 bool through_flow = false);

/// Parses one or more attribute vectors, rows separated by ';'. A row is
/// either comma-separated 0/1 digits (length A) or a comma-separated list of
/// attribute names (those set to 1) resolved against `names`.
Tensor parse_attrs(const std::string& text, const std::vector<std::string>& names);

}  // namespace cvae
