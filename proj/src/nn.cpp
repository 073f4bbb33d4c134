#include "cvae/nn.hpp"

#include <cmath>

namespace cvae {

namespace {
void fill_fan_in(Tensor& w, int fan_in, double gain, Rng& rng) {
    double std = gain * std::sqrt(1.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
}
}  // namespace

void LinearLayer::init_fan_in(Rng& rng, double gain) {
    fill_fan_in(w.value, in_dim, gain, rng);
    b.value.fill(0.0);
}

void Conv2dLayer::init_fan_in(Rng& rng, double gain) {
    int fan_in = w.value.dim(1) * kh * kw;
    fill_fan_in(w.value, fan_in, gain, rng);
    b.value.fill(0.0);
}

void ConvT2dLayer::init_fan_in(Rng& rng, double gain) {
    int fan_in = w.value.dim(0) * kh * kw;
    fill_fan_in(w.value, fan_in, gain, rng);
    b.value.fill(0.0);
}

int64_t total_param_count(const ParamRefs& params) {
    int64_t n = 0;
    for (const Param* p : params) n += p->value.size();
    return n;
}

void zero_grads(const ParamRefs& params) {
    for (Param* p : params) p->zero_grad();
}

double grad_global_norm(const ParamRefs& params) {
    double s = 0;
    for (const Param* p : params)
        for (int64_t i = 0; i < p->grad.size(); ++i) s += p->grad[i] * p->grad[i];
    return std::sqrt(s);
}

void scale_grads(const ParamRefs& params, double factor) {
    for (Param* p : params)
        for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= factor;
}

}  // namespace cvae
