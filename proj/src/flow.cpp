#include "cvae/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace cvae {

namespace {
int half_lo(int dim) {
    if (dim < 2) throw std::invalid_argument("CouplingLayer: dim must be >= 2");
    return dim / 2;
}
}  // namespace

CouplingLayer::CouplingLayer(const std::string& prefix, int dim, bool low_fixed,
                             int hidden)
    : dim_(dim),
      fixed_lo_(low_fixed ? 0 : half_lo(dim)),
      fixed_len_(low_fixed ? half_lo(dim) : dim - half_lo(dim)),
      moved_lo_(low_fixed ? half_lo(dim) : 0),
      moved_len_(low_fixed ? dim - half_lo(dim) : half_lo(dim)),
      low_fixed_(low_fixed),
      s_net_(prefix + ".s", fixed_len_, hidden, moved_len_),
      t_net_(prefix + ".t", fixed_len_, hidden, moved_len_) {}

std::pair<Var, Var> CouplingLayer::forward(Tape& t, Var z, bool with_grad) {
    if (z->val.ndim() != 2 || z->val.dim(1) != dim_)
        throw std::invalid_argument("CouplingLayer::forward: expects [N," +
                                    std::to_string(dim_) + "]");
    Var zf = slice_cols(t, z, fixed_lo_, fixed_len_);
    Var zm = slice_cols(t, z, moved_lo_, moved_len_);
    Var s = scaled_tanh(t, s_net_(t, zf, with_grad), kScaleSquash);
    Var shift = t_net_(t, zf, with_grad);
    Var gm = add(t, mul(t, zm, exp_(t, s)), shift);
    Var g = low_fixed_ ? concat_cols(t, zf, gm) : concat_cols(t, gm, zf);
    Var log_det = sum_cols(t, s);
    return {g, log_det};
}

Tensor CouplingLayer::inverse(const Tensor& g) {
    if (g.ndim() != 2 || g.dim(1) != dim_)
        throw std::invalid_argument("CouplingLayer::inverse: expects [N,D]");
    int n = g.dim(0);
    Tape t;
    Var gv = t.constant(g);
    Var gf = slice_cols(t, gv, fixed_lo_, fixed_len_);
    Var s = scaled_tanh(t, s_net_(t, gf, false), kScaleSquash);
    Var shift = t_net_(t, gf, false);
    Tensor z({n, dim_});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < fixed_len_; ++j)
            z[static_cast<int64_t>(i) * dim_ + fixed_lo_ + j] =
                g[static_cast<int64_t>(i) * dim_ + fixed_lo_ + j];
        for (int j = 0; j < moved_len_; ++j) {
            int64_t gi = static_cast<int64_t>(i) * dim_ + moved_lo_ + j;
            int64_t mi = static_cast<int64_t>(i) * moved_len_ + j;
            z[gi] = (g[gi] - shift->val[mi]) * std::exp(-s->val[mi]);
        }
    }
    return z;
}

FlowStack::FlowStack(const std::string& prefix, int dim, int depth, int hidden)
    : dim_(dim) {
    if (depth < 2) throw std::invalid_argument("FlowStack: depth must be >= 2");
    layers_.reserve(static_cast<size_t>(depth));
    for (int k = 0; k < depth; ++k)
        layers_.emplace_back(prefix + ".layer" + std::to_string(k), dim,
                             /*low_fixed=*/k % 2 == 0, hidden);
}

std::pair<Var, Var> FlowStack::forward(Tape& t, Var z, bool with_grad) {
    Var cur = z;
    Var total = nullptr;
    for (auto& layer : layers_) {
        auto [g, ld] = layer.forward(t, cur, with_grad);
        cur = g;
        total = total ? add(t, total, ld) : ld;
    }
    if (!total) total = t.constant(Tensor({z->val.dim(0)}));
    return {cur, total};
}

std::pair<Tensor, Tensor> FlowStack::forward_values(const Tensor& z) {
    Tape t;
    Var zv = t.constant(z);
    auto [g, ld] = forward(t, zv, false);
    return {g->val, ld->val};
}

Tensor FlowStack::inverse(const Tensor& e) {
    Tensor cur = e;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        cur = it->inverse(cur);
    return cur;
}

void FlowStack::init(Rng& rng) {
    for (auto& layer : layers_) layer.init(rng);
}

void FlowStack::collect(ParamRefs& out) {
    for (auto& layer : layers_) layer.collect(out);
}

Var flow_prior_log_prob_rows(Tape& t, Var z, Var mu_p, Var log_std_p,
                             FlowStack& flow) {
    auto [fz, log_det] = flow.forward(t, z);
    Var base_lp = gaussian_log_prob_rows(t, fz, mu_p, log_std_p);
    return add(t, base_lp, log_det);
}

double flow_prior_log_prob(const Eigen::VectorXd& z, const DiagGaussian& base,
                           FlowStack& flow) {
    int d = static_cast<int>(z.size());
    if (base.dim() != d)
        throw std::invalid_argument("flow_prior_log_prob: dimension mismatch");
    Tensor zt({1, d});
    for (int i = 0; i < d; ++i) zt[i] = z[i];
    auto [fz, ld] = flow.forward_values(zt);
    Eigen::VectorXd fzv(d);
    for (int i = 0; i < d; ++i) fzv[i] = fz[i];
    return base.log_prob(fzv) + ld[0];
}

}  // namespace cvae
