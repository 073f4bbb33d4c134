#include "cvae/models.hpp"

#include <cmath>
#include <stdexcept>

namespace cvae {

std::string setting_name(Setting s) {
    switch (s) {
        case Setting::gaussian: return "gaussian";
        case Setting::sigma_nonnf: return "sigma_nonnf";
        case Setting::sigma_nf: return "sigma_nf";
    }
    throw std::logic_error("setting_name: bad enum");
}

Setting setting_from_name(const std::string& name) {
    if (name == "gaussian") return Setting::gaussian;
    if (name == "sigma_nonnf" || name == "sigma-nonnf") return Setting::sigma_nonnf;
    if (name == "sigma_nf" || name == "sigma-nf") return Setting::sigma_nf;
    throw std::invalid_argument("unknown setting '" + name +
                                "' (expected gaussian|sigma-nonnf|sigma-nf)");
}

namespace {

int conv_pad(int k) { return (k - 1) / 2; }

// Spatial sizes after each stride-2 stage, starting with the input extent.
std::vector<int> conv_chain(int extent, int stages, int k) {
    int p = conv_pad(k);
    std::vector<int> sizes{extent};
    for (int i = 0; i < stages; ++i) {
        int in = sizes.back();
        if (in + 2 * p - k < 0)
            throw std::invalid_argument("model config: image extent " +
                                        std::to_string(extent) + " too small for " +
                                        std::to_string(stages) + " conv stages");
        int out = (in + 2 * p - k) / 2 + 1;
        if (out < 1) throw std::invalid_argument("model config: conv chain collapses");
        sizes.push_back(out);
    }
    return sizes;
}

// Output padding needed for the transposed stage in -> target to land exactly.
int out_pad_for(int in, int target, int k) {
    int p = conv_pad(k);
    int base = (in - 1) * 2 - 2 * p + k;
    int op = target - base;
    if (op < 0 || op >= 2)
        throw std::invalid_argument("model config: no valid output padding for " +
                                    std::to_string(in) + " -> " + std::to_string(target));
    return op;
}

}  // namespace

void ModelConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("model config: latent_dim must be >= 1");
    if (attr_dim < 1) throw std::invalid_argument("model config: attr_dim must be >= 1");
    if (channels < 1 || height < 1 || width < 1)
        throw std::invalid_argument("model config: bad image shape");
    if (enc_widths.empty()) throw std::invalid_argument("model config: enc_widths empty");
    if (p_widths.empty()) throw std::invalid_argument("model config: p_widths empty");
    if (kernel < 2) throw std::invalid_argument("model config: kernel must be >= 2");
    if (has_flow()) {
        if (latent_dim < 2)
            throw std::invalid_argument("model config: flow needs latent_dim >= 2");
        if (flow_depth < 2)
            throw std::invalid_argument("model config: flow_depth must be >= 2");
    }
    int stages = static_cast<int>(enc_widths.size());
    auto hs = conv_chain(height, stages, kernel);
    auto wsz = conv_chain(width, stages, kernel);
    for (int i = stages; i > 0; --i) {
        out_pad_for(hs[static_cast<size_t>(i)], hs[static_cast<size_t>(i - 1)], kernel);
        out_pad_for(wsz[static_cast<size_t>(i)], wsz[static_cast<size_t>(i - 1)], kernel);
    }
}

// --------------------------------------------------------------- EncoderQ

EncoderQ::EncoderQ(const ModelConfig& cfg, int in_channels_)
    : head("encoder_q.head", 1, 1), in_channels(in_channels_), flat_dim(0) {
    int k = cfg.kernel, p = conv_pad(k);
    int stages_n = static_cast<int>(cfg.enc_widths.size());
    auto hs = conv_chain(cfg.height, stages_n, k);
    auto wsz = conv_chain(cfg.width, stages_n, k);
    int cin = in_channels_;
    for (int i = 0; i < stages_n; ++i) {
        int cout = cfg.enc_widths[static_cast<size_t>(i)];
        stages.push_back(Conv2dLayer::square(
            "encoder_q.conv" + std::to_string(i), cin, cout, k, 2, p));
        cin = cout;
    }
    flat_dim = cin * hs.back() * wsz.back();
    head = LinearLayer("encoder_q.head", flat_dim, 2 * cfg.latent_dim);
}

std::pair<Var, Var> EncoderQ::forward(Tape& t, Var x, bool with_grad) {
    Var cur = x;
    for (auto& conv : stages)
        cur = elu(t, with_grad ? conv(t, cur) : conv.value(t, cur));
    cur = reshape(t, cur, {cur->val.dim(0), flat_dim});
    Var out = with_grad ? head(t, cur) : head.value(t, cur);
    int d = out->val.dim(1) / 2;
    Var mu = slice_cols(t, out, 0, d);
    Var log_std = clamp_log_std(t, slice_cols(t, out, d, d));
    return {mu, log_std};
}

void EncoderQ::init(Rng& rng) {
    for (auto& conv : stages) conv.init_fan_in(rng, std::sqrt(2.0));
    head.init_zero();
}

void EncoderQ::collect(ParamRefs& out) {
    for (auto& conv : stages) conv.collect(out);
    head.collect(out);
}

// --------------------------------------------------------------- EncoderP

EncoderP::EncoderP(const ModelConfig& cfg)
    : head("encoder_p.head", 1, 1), attr_dim(cfg.attr_dim), flat_dim(0) {
    int cin = 1;
    for (size_t i = 0; i < cfg.p_widths.size(); ++i) {
        int cout = cfg.p_widths[i];
        stages.push_back(Conv2dLayer("encoder_p.conv" + std::to_string(i), cin,
                                     cout, 1, 3, 1, 1, 0, 1));
        cin = cout;
    }
    flat_dim = cin * attr_dim;
    head = LinearLayer("encoder_p.head", flat_dim, 2 * cfg.latent_dim);
}

std::pair<Var, Var> EncoderP::forward(Tape& t, Var y, bool with_grad) {
    if (y->val.ndim() != 2 || y->val.dim(1) != attr_dim)
        throw std::invalid_argument("EncoderP: expects attrs [N," +
                                    std::to_string(attr_dim) + "]");
    int n = y->val.dim(0);
    Var cur = reshape(t, y, {n, 1, 1, attr_dim});
    for (auto& conv : stages)
        cur = elu(t, with_grad ? conv(t, cur) : conv.value(t, cur));
    cur = reshape(t, cur, {n, flat_dim});
    Var out = with_grad ? head(t, cur) : head.value(t, cur);
    int d = out->val.dim(1) / 2;
    Var mu = slice_cols(t, out, 0, d);
    Var log_std = clamp_log_std(t, slice_cols(t, out, d, d));
    return {mu, log_std};
}

void EncoderP::init(Rng& rng) {
    for (auto& conv : stages) conv.init_fan_in(rng, std::sqrt(2.0));
    head.init_zero();
}

void EncoderP::collect(ParamRefs& out) {
    for (auto& conv : stages) conv.collect(out);
    head.collect(out);
}

// ---------------------------------------------------------------- Decoder

Decoder::Decoder(const ModelConfig& cfg)
    : lift("decoder.lift", 1, 1), top_channels(cfg.enc_widths.back()) {
    int k = cfg.kernel, p = conv_pad(k);
    int stages_n = static_cast<int>(cfg.enc_widths.size());
    auto hs = conv_chain(cfg.height, stages_n, k);
    auto wsz = conv_chain(cfg.width, stages_n, k);
    top_h = hs.back();
    top_w = wsz.back();
    lift = LinearLayer("decoder.lift", cfg.latent_dim + cfg.attr_dim,
                       top_channels * top_h * top_w);
    int cin = top_channels;
    for (int i = stages_n - 1; i >= 0; --i) {
        int cout = i > 0 ? cfg.enc_widths[static_cast<size_t>(i - 1)] : cfg.channels;
        int oph = out_pad_for(hs[static_cast<size_t>(i + 1)], hs[static_cast<size_t>(i)], k);
        int opw = out_pad_for(wsz[static_cast<size_t>(i + 1)], wsz[static_cast<size_t>(i)], k);
        stages.push_back(ConvT2dLayer("decoder.deconv" + std::to_string(stages_n - 1 - i),
                                      cin, cout, k, 2, p, oph, opw));
        cin = cout;
    }
}

Var Decoder::forward(Tape& t, Var z_and_y, bool with_grad) {
    int n = z_and_y->val.dim(0);
    Var cur = with_grad ? lift(t, z_and_y) : lift.value(t, z_and_y);
    cur = elu(t, reshape(t, cur, {n, top_channels, top_h, top_w}));
    for (size_t i = 0; i < stages.size(); ++i) {
        auto& deconv = stages[i];
        cur = with_grad ? deconv(t, cur) : deconv.value(t, cur);
        cur = i + 1 < stages.size() ? elu(t, cur) : sigmoid(t, cur);
    }
    return cur;
}

void Decoder::init(Rng& rng) {
    lift.init_fan_in(rng, std::sqrt(2.0));
    for (auto& deconv : stages) deconv.init_fan_in(rng, std::sqrt(2.0));
}

void Decoder::collect(ParamRefs& out) {
    lift.collect(out);
    for (auto& deconv : stages) deconv.collect(out);
}

// -------------------------------------------------------------- CvaeModel

namespace {
ModelConfig validated(ModelConfig cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

CvaeModel::CvaeModel(ModelConfig cfg)
    : cfg_(validated(std::move(cfg))),
      encoder_q_(cfg_, cfg_.channels + (cfg_.q_uses_labels() ? cfg_.attr_dim : 0)),
      decoder_(cfg_) {
    if (cfg_.has_label_encoder()) encoder_p_.emplace(cfg_);
    if (cfg_.has_flow())
        flow_.emplace("flow", cfg_.latent_dim, cfg_.flow_depth, cfg_.flow_hidden);
}

void CvaeModel::init_params(Rng& rng) {
    encoder_q_.init(rng);
    if (encoder_p_) encoder_p_->init(rng);
    decoder_.init(rng);
    if (flow_) flow_->init(rng);
}

std::pair<Var, Var> CvaeModel::encode(Tape& t, Var x, Var y, bool with_grad) {
    const auto& xs = x->val.shape();
    if (xs.size() != 4 || xs[1] != cfg_.channels || xs[2] != cfg_.height ||
        xs[3] != cfg_.width)
        throw std::invalid_argument("encode: image shape " + x->val.shape_str() +
                                    " does not match model config");
    if (y->val.ndim() != 2 || y->val.dim(1) != cfg_.attr_dim ||
        y->val.dim(0) != xs[0])
        throw std::invalid_argument("encode: attribute shape mismatch");
    Var input = x;
    if (cfg_.q_uses_labels()) {
        Var planes = broadcast_planes(t, y, cfg_.height, cfg_.width);
        input = concat_channels(t, x, planes);
    }
    return encoder_q_.forward(t, input, with_grad);
}

std::pair<Var, Var> CvaeModel::encode_label(Tape& t, Var y, bool with_grad) {
    if (!encoder_p_)
        throw std::logic_error("encode_label: setting '" + setting_name(cfg_.setting) +
                               "' has no label encoder");
    return encoder_p_->forward(t, y, with_grad);
}

Var CvaeModel::decode(Tape& t, Var z, Var y, bool with_grad) {
    if (z->val.ndim() != 2 || z->val.dim(1) != cfg_.latent_dim)
        throw std::invalid_argument("decode: latent shape mismatch");
    if (y->val.ndim() != 2 || y->val.dim(1) != cfg_.attr_dim ||
        y->val.dim(0) != z->val.dim(0))
        throw std::invalid_argument("decode: attribute shape mismatch");
    return decoder_.forward(t, concat_cols(t, z, y), with_grad);
}

std::pair<Tensor, Tensor> CvaeModel::encode_values(const Tensor& x, const Tensor& y) {
    Tape t;
    auto [mu, ls] = encode(t, t.constant(x), t.constant(y), false);
    return {mu->val, ls->val};
}

std::pair<Tensor, Tensor> CvaeModel::encode_label_values(const Tensor& y) {
    Tape t;
    auto [mu, ls] = encode_label(t, t.constant(y), false);
    return {mu->val, ls->val};
}

Tensor CvaeModel::decode_values(const Tensor& z, const Tensor& y) {
    Tape t;
    return decode(t, t.constant(z), t.constant(y), false)->val;
}

namespace {
DiagGaussian row_to_dist(const Tensor& mu, const Tensor& ls) {
    int d = mu.dim(1);
    Eigen::VectorXd m(d), s(d);
    for (int i = 0; i < d; ++i) {
        m[i] = mu[i];
        s[i] = ls[i];
    }
    return DiagGaussian(std::move(m), std::move(s));
}
}  // namespace

DiagGaussian CvaeModel::encode_dist(const Tensor& x, const Tensor& y) {
    Tensor xb = x.ndim() == 3
                    ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)})
                    : x;
    Tensor yb = y.ndim() == 1 ? y.reshaped({1, y.dim(0)}) : y;
    auto [mu, ls] = encode_values(xb, yb);
    return row_to_dist(mu, ls);
}

DiagGaussian CvaeModel::encode_label_dist(const Tensor& y) {
    Tensor yb = y.ndim() == 1 ? y.reshaped({1, y.dim(0)}) : y;
    auto [mu, ls] = encode_label_values(yb);
    return row_to_dist(mu, ls);
}

FlowStack& CvaeModel::flow() {
    if (!flow_)
        throw std::logic_error("flow: setting '" + setting_name(cfg_.setting) +
                               "' has no flow");
    return *flow_;
}

ParamRefs CvaeModel::params() {
    ParamRefs out;
    encoder_q_.collect(out);
    if (encoder_p_) encoder_p_->collect(out);
    decoder_.collect(out);
    if (flow_) flow_->collect(out);
    return out;
}

int64_t CvaeModel::parameter_count() { return total_param_count(params()); }

}  // namespace cvae
