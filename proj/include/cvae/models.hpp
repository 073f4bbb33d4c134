#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvae/distributions.hpp"
#include "cvae/flow.hpp"
#include "cvae/nn.hpp"

namespace cvae {

/// The three model settings: unit-variance Gaussian decoder with a standard
/// prior, calibrated decoder variance with a standard prior (latents
/// independent of the labels), and calibrated variance with a flow-estimated
/// conditional prior.
enum class Setting { gaussian, sigma_nonnf, sigma_nf };

std::string setting_name(Setting s);
Setting setting_from_name(const std::string& name);

struct ModelConfig {
    Setting setting = Setting::sigma_nf;
    int latent_dim = 128;
    int attr_dim = 40;
    int channels = 3;
    int height = 86;
    int width = 86;
    std::vector<int> enc_widths = {32, 64, 128, 256};
    std::vector<int> p_widths = {16, 32};
    int flow_depth = 4;
    int flow_hidden = 64;
    int kernel = 4;

    bool q_uses_labels() const { return setting != Setting::sigma_nonnf; }
    bool has_flow() const { return setting == Setting::sigma_nf; }
    bool has_label_encoder() const { return setting == Setting::sigma_nf; }
    int pixel_count() const { return channels * height * width; }

    void validate() const;
};

/// Convolutional image encoder: stride-2 stages followed by one affine head
/// producing mean and log-std of the posterior.
struct EncoderQ {
    std::vector<Conv2dLayer> stages;
    LinearLayer head;
    int in_channels, flat_dim;

    EncoderQ(const ModelConfig& cfg, int in_channels_);
    std::pair<Var, Var> forward(Tape& t, Var x, bool with_grad = true);
    void init(Rng& rng);
    void collect(ParamRefs& out);
};

/// Label encoder: two 1-D convolution stages over the attribute vector plus
/// one affine head producing the conditional base parameters.
struct EncoderP {
    std::vector<Conv2dLayer> stages;  // 1 x k kernels over [N,c,1,A]
    LinearLayer head;
    int attr_dim, flat_dim;

    EncoderP(const ModelConfig& cfg);
    std::pair<Var, Var> forward(Tape& t, Var y, bool with_grad = true);
    void init(Rng& rng);
    void collect(ParamRefs& out);
};

/// Affine lift plus transposed-convolution stages mirroring the encoder's
/// spatial chain exactly; logistic output keeps pixels in [0,1].
struct Decoder {
    LinearLayer lift;
    std::vector<ConvT2dLayer> stages;
    int top_channels, top_h, top_w;

    Decoder(const ModelConfig& cfg);
    Var forward(Tape& t, Var z_and_y, bool with_grad = true);
    void init(Rng& rng);
    void collect(ParamRefs& out);
};

/// Full conditional model for one setting. Holds the batchwise decoder
/// variance estimate as a non-trainable buffer (1.0 until trained).
class CvaeModel {
public:
    explicit CvaeModel(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    void init_params(Rng& rng);

    // Graph builders; x:[N,C,H,W], y:[N,A], z:[N,D].
    std::pair<Var, Var> encode(Tape& t, Var x, Var y, bool with_grad = true);
    std::pair<Var, Var> encode_label(Tape& t, Var y, bool with_grad = true);
    Var decode(Tape& t, Var z, Var y, bool with_grad = true);

    // Value-only batch helpers.
    std::pair<Tensor, Tensor> encode_values(const Tensor& x, const Tensor& y);
    std::pair<Tensor, Tensor> encode_label_values(const Tensor& y);
    Tensor decode_values(const Tensor& z, const Tensor& y);

    // Single-example conveniences built on the batch paths.
    DiagGaussian encode_dist(const Tensor& x, const Tensor& y);
    DiagGaussian encode_label_dist(const Tensor& y);

    FlowStack& flow();
    bool has_flow() const { return flow_.has_value(); }

    ParamRefs params();
    int64_t parameter_count();

    /// Batchwise decoder variance estimate, updated by training for the
    /// calibrated-variance settings; fixed at 1 for the gaussian setting.
    double sigma_sq = 1.0;

private:
    void check_image(const Tensor& shape_owner) const;

    ModelConfig cfg_;
    EncoderQ encoder_q_;
    std::optional<EncoderP> encoder_p_;
    Decoder decoder_;
    std::optional<FlowStack> flow_;
};

}  // namespace cvae
