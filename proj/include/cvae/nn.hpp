#pragma once

#include <string>
#include <vector>

#include "cvae/rng.hpp"
#include "cvae/tape.hpp"

namespace cvae {

using ParamRefs = std::vector<Param*>;

/// Fully-connected layer y = x W^T + b.
struct LinearLayer {
    Param w, b;
    int in_dim, out_dim;

    LinearLayer(const std::string& prefix, int in, int out)
        : w(prefix + ".w", {out, in}), b(prefix + ".b", {out}), in_dim(in), out_dim(out) {}

    Var operator()(Tape& t, Var x) {
        return linear(t, x, t.leaf(w), t.leaf(b));
    }
    Var value(Tape& t, Var x) const {
        return linear(t, x, t.value_leaf(w), t.value_leaf(b));
    }

    void init_fan_in(Rng& rng, double gain);
    void init_zero() { w.value.fill(0.0); b.value.fill(0.0); }
    void collect(ParamRefs& out) { out.push_back(&w); out.push_back(&b); }
};

/// 2-D convolution with rectangular kernels; stride/padding per axis.
struct Conv2dLayer {
    Param w, b;
    int kh, kw, sh, sw, ph, pw;

    Conv2dLayer(const std::string& prefix, int cin, int cout, int kh_, int kw_,
                int sh_, int sw_, int ph_, int pw_)
        : w(prefix + ".w", {cout, cin, kh_, kw_}), b(prefix + ".b", {cout}),
          kh(kh_), kw(kw_), sh(sh_), sw(sw_), ph(ph_), pw(pw_) {}

    static Conv2dLayer square(const std::string& prefix, int cin, int cout,
                              int k, int s, int p) {
        return Conv2dLayer(prefix, cin, cout, k, k, s, s, p, p);
    }

    Var operator()(Tape& t, Var x) {
        return conv2d(t, x, t.leaf(w), t.leaf(b), sh, sw, ph, pw);
    }
    Var value(Tape& t, Var x) const {
        return conv2d(t, x, t.value_leaf(w), t.value_leaf(b), sh, sw, ph, pw);
    }

    static int out_extent(int in, int k, int s, int p) {
        return (in + 2 * p - k) / s + 1;
    }

    void init_fan_in(Rng& rng, double gain);
    void collect(ParamRefs& out) { out.push_back(&w); out.push_back(&b); }
};

/// 2-D transposed convolution; output_padding resolves ambiguous inverses.
struct ConvT2dLayer {
    Param w, b;
    int kh, kw, sh, sw, ph, pw, oph, opw;

    ConvT2dLayer(const std::string& prefix, int cin, int cout, int k, int s,
                 int p, int oph_, int opw_)
        : w(prefix + ".w", {cin, cout, k, k}), b(prefix + ".b", {cout}),
          kh(k), kw(k), sh(s), sw(s), ph(p), pw(p), oph(oph_), opw(opw_) {}

    Var operator()(Tape& t, Var x) {
        return conv_transpose2d(t, x, t.leaf(w), t.leaf(b), sh, sw, ph, pw, oph, opw);
    }
    Var value(Tape& t, Var x) const {
        return conv_transpose2d(t, x, t.value_leaf(w), t.value_leaf(b), sh, sw,
                                ph, pw, oph, opw);
    }

    static int out_extent(int in, int k, int s, int p, int op) {
        return (in - 1) * s - 2 * p + k + op;
    }

    void init_fan_in(Rng& rng, double gain);
    void collect(ParamRefs& out) { out.push_back(&w); out.push_back(&b); }
};

/// Two-hidden-layer perceptron with tanh activations; the final affine layer
/// starts at zero so enclosing transforms begin as the identity.
struct Mlp {
    LinearLayer l1, l2, l3;

    Mlp(const std::string& prefix, int in, int hidden, int out)
        : l1(prefix + ".l1", in, hidden),
          l2(prefix + ".l2", hidden, hidden),
          l3(prefix + ".l3", hidden, out) {}

    Var operator()(Tape& t, Var x, bool with_grad = true) {
        Var h1 = tanh_(t, with_grad ? l1(t, x) : l1.value(t, x));
        Var h2 = tanh_(t, with_grad ? l2(t, h1) : l2.value(t, h1));
        return with_grad ? l3(t, h2) : l3.value(t, h2);
    }

    void init(Rng& rng) {
        l1.init_fan_in(rng, 1.0);
        l2.init_fan_in(rng, 1.0);
        l3.init_zero();
    }
    void collect(ParamRefs& out) { l1.collect(out); l2.collect(out); l3.collect(out); }
};

int64_t total_param_count(const ParamRefs& params);
void zero_grads(const ParamRefs& params);
double grad_global_norm(const ParamRefs& params);
void scale_grads(const ParamRefs& params, double factor);

}  // namespace cvae
