#pragma once

#include <utility>

#include "cvae/distributions.hpp"
#include "cvae/nn.hpp"

namespace cvae {

inline constexpr double kScaleSquash = 5.0;

/// Affine coupling layer over R^D. One contiguous half passes through
/// unchanged; the other is scaled and shifted by networks of the fixed half.
/// The log-scale output is squashed into (-5, 5) before exponentiation so the
/// map stays invertible under any parameter values.
class CouplingLayer {
public:
    CouplingLayer(const std::string& prefix, int dim, bool low_fixed, int hidden);

    /// (g, per-sample log|det J|) for z:[N,D]; log-det is the sum of the
    /// active log-scales.
    std::pair<Var, Var> forward(Tape& t, Var z, bool with_grad = true);

    /// Exact inverse; no gradients.
    Tensor inverse(const Tensor& g);

    int dim() const { return dim_; }
    bool low_fixed() const { return low_fixed_; }
    int fixed_len() const { return fixed_len_; }

    void init(Rng& rng) { s_net_.init(rng); t_net_.init(rng); }
    void collect(ParamRefs& out) { s_net_.collect(out); t_net_.collect(out); }
    Mlp& scale_net() { return s_net_; }
    Mlp& shift_net() { return t_net_; }

private:
    int dim_, fixed_lo_, fixed_len_, moved_lo_, moved_len_;
    bool low_fixed_;
    Mlp s_net_, t_net_;
};

/// A stack of coupling layers with strictly alternating parity, so every
/// coordinate is transformed when depth >= 2. Freshly initialized stacks are
/// the identity map.
class FlowStack {
public:
    FlowStack() = default;
    FlowStack(const std::string& prefix, int dim, int depth, int hidden);

    /// Composition of all layers: (f(z), total log|det|), both on the tape.
    std::pair<Var, Var> forward(Tape& t, Var z, bool with_grad = true);

    /// Value-only forward for z:[N,D].
    std::pair<Tensor, Tensor> forward_values(const Tensor& z);

    /// Layers applied in reverse, each inverted; forward(inverse(e)) == e.
    Tensor inverse(const Tensor& e);

    int dim() const { return dim_; }
    int depth() const { return static_cast<int>(layers_.size()); }
    bool empty() const { return layers_.empty(); }

    void init(Rng& rng);
    void collect(ParamRefs& out);
    std::vector<CouplingLayer>& layers() { return layers_; }

private:
    int dim_ = 0;
    std::vector<CouplingLayer> layers_;
};

/// Log density of the flow-transformed conditional prior evaluated at z:
/// log N(f(z); mu_p, diag(exp(log_std_p))^2) + log|det df/dz|. Inputs are
/// [N,D] rows; result is [N].
Var flow_prior_log_prob_rows(Tape& t, Var z, Var mu_p, Var log_std_p, FlowStack& flow);

/// Scalar convenience for a single point.
double flow_prior_log_prob(const Eigen::VectorXd& z, const DiagGaussian& base,
                           FlowStack& flow);

}  // namespace cvae
