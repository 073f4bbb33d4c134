#pragma once

#include <Eigen/Core>

#include "cvae/tape.hpp"

namespace cvae {

inline constexpr double kLogStdMin = -9.210340371976182;  // ln 1e-4
inline constexpr double kLogStdMax = 9.210340371976184;   // ln 1e+4
inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kLogTwoPi = 1.8378770664093453;

/// Diagonal Gaussian over R^D, parameterized by mean and log standard
/// deviation. log_std is clamped to [ln 1e-4, ln 1e4] on construction.
struct DiagGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    DiagGaussian(Eigen::VectorXd mu, Eigen::VectorXd ls);

    static DiagGaussian standard(int d) {
        return DiagGaussian(Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d));
    }

    int dim() const { return static_cast<int>(mean.size()); }
    Eigen::VectorXd std() const { return log_std.array().exp(); }

    /// Exact log density, constants included.
    double log_prob(const Eigen::VectorXd& x) const;

    /// mean + std .* noise; noise is drawn externally.
    Eigen::VectorXd sample_reparam(const Eigen::VectorXd& noise) const;

    /// Closed-form KL(this || N(0, I)).
    double kl_to_standard() const;
};

/// Likelihood-maximizing decoder variance: MSE(x, x_hat) floored at 1e-6.
double optimal_sigma_sq(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat);

/// Reconstruction NLL at the optimal variance, (P/2) ln sigma*^2; the
/// additive constant is dropped here (log_prob keeps full constants).
double nll_optimal_sigma(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat);

// ---- tape-side kernels (used by losses; row-wise over [N,D] batches) ----

/// Per-sample Gaussian log density: x, mu, log_std are [N,D]; result [N].
Var gaussian_log_prob_rows(Tape& t, Var x, Var mu, Var log_std);

/// Per-sample KL(N(mu, exp(log_std)) || N(0,I)): [N,D] inputs, [N] result.
Var kl_standard_rows(Tape& t, Var mu, Var log_std);

/// mu + exp(log_std) .* noise on the tape.
Var sample_reparam_rows(Tape& t, Var mu, Var log_std, Var noise);

/// Clamp a raw head output into the valid log-std range.
Var clamp_log_std(Tape& t, Var raw);

}  // namespace cvae
