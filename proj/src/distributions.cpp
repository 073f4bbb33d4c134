#include "cvae/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace cvae {

namespace {
void check_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* op) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(op) + ": dimension mismatch");
}
}  // namespace

DiagGaussian::DiagGaussian(Eigen::VectorXd mu, Eigen::VectorXd ls)
    : mean(std::move(mu)), log_std(std::move(ls)) {
    if (mean.size() != log_std.size())
        throw std::invalid_argument("DiagGaussian: mean/log_std dimension mismatch");
    if (!mean.allFinite() || !log_std.allFinite())
        throw std::invalid_argument("DiagGaussian: non-finite parameters");
    log_std = log_std.array().max(kLogStdMin).min(kLogStdMax);
}

double DiagGaussian::log_prob(const Eigen::VectorXd& x) const {
    check_dim(x, mean, "DiagGaussian::log_prob");
    Eigen::ArrayXd z = (x - mean).array() * (-log_std.array()).exp();
    return -log_std.sum() - 0.5 * z.square().sum() -
           0.5 * kLogTwoPi * static_cast<double>(dim());
}

Eigen::VectorXd DiagGaussian::sample_reparam(const Eigen::VectorXd& noise) const {
    check_dim(noise, mean, "DiagGaussian::sample_reparam");
    return mean.array() + log_std.array().exp() * noise.array();
}

double DiagGaussian::kl_to_standard() const {
    Eigen::ArrayXd var = (2.0 * log_std.array()).exp();
    return 0.5 * (var + mean.array().square() - 1.0 - 2.0 * log_std.array()).sum();
}

double optimal_sigma_sq(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
    check_dim(x, x_hat, "optimal_sigma_sq");
    double mse = (x - x_hat).squaredNorm() / static_cast<double>(x.size());
    return std::max(mse, kVarianceFloor);
}

double nll_optimal_sigma(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
    double p = static_cast<double>(x.size());
    return 0.5 * p * std::log(optimal_sigma_sq(x, x_hat));
}

Var gaussian_log_prob_rows(Tape& t, Var x, Var mu, Var log_std) {
    check_same_shape(x->val, mu->val, "gaussian_log_prob_rows");
    check_same_shape(mu->val, log_std->val, "gaussian_log_prob_rows");
    int d = mu->val.dim(1);
    Var diff = sub(t, x, mu);
    Var z = mul(t, diff, exp_(t, neg(t, log_std)));
    Var quad = scale(t, sum_cols(t, square(t, z)), -0.5);
    Var logdet = neg(t, sum_cols(t, log_std));
    return add_scalar(t, add(t, quad, logdet), -0.5 * kLogTwoPi * d);
}

Var kl_standard_rows(Tape& t, Var mu, Var log_std) {
    check_same_shape(mu->val, log_std->val, "kl_standard_rows");
    Var var = exp_(t, scale(t, log_std, 2.0));
    Var inner = sub(t, add(t, var, square(t, mu)), scale(t, log_std, 2.0));
    return scale(t, add_scalar(t, sum_cols(t, inner), -mu->val.dim(1)), 0.5);
}

Var sample_reparam_rows(Tape& t, Var mu, Var log_std, Var noise) {
    check_same_shape(mu->val, noise->val, "sample_reparam_rows");
    return add(t, mu, mul(t, exp_(t, log_std), noise));
}

Var clamp_log_std(Tape& t, Var raw) {
    return clamp(t, raw, kLogStdMin, kLogStdMax);
}

}  // namespace cvae
