#pragma once

#include "cvae/data.hpp"
#include "cvae/models.hpp"

namespace cvae {

/// One objective evaluation. total == recon + kl; sigma_sq_batch is the
/// batchwise decoder-variance estimate in effect (1 for the gaussian setting).
struct LossBreakdown {
    double total = 0;
    double recon = 0;
    double kl = 0;
    double sigma_sq_batch = 1.0;
};

/// Graph handles for one objective evaluation; values() reads the scalars.
struct LossNodes {
    Var total = nullptr;
    Var recon = nullptr;
    Var kl = nullptr;
    double sigma_sq = 1.0;

    LossBreakdown values() const {
        return {total->val.item(), recon->val.item(), kl->val.item(), sigma_sq};
    }
};

/// Unit-variance Gaussian reconstruction loss: (P/2) * batch-mean MSE,
/// additive constant dropped. x_hat, x are [N,P] (or any matching shape).
Var recon_loss_unit_sigma(Tape& t, Var x_hat, Var x);

/// Calibrated-variance reconstruction loss. The batch MSE (floored at 1e-6)
/// is evaluated first and frozen for the backward pass; the node's value is
/// (P/2) ln sigma*^2 while its gradient equals that of (P / 2 sigma*^2) * MSE
/// at the frozen variance. Pass frozen_sigma_sq to pin the variance
/// externally (used by gradient checks and evaluation).
std::pair<Var, double> recon_loss_optimal_sigma(Tape& t, Var x_hat, Var x,
                                                const double* frozen_sigma_sq = nullptr);

/// Batch-mean closed-form KL against the standard-normal prior.
Var kl_loss_standard(Tape& t, Var mu, Var log_std);

/// Per-sample single-draw estimate of KL(q || p) where p is the
/// flow-transformed conditional prior: log q(z) - log p(z) at z ~ q. Full
/// densities on both sides, so the estimator is unbiased. Result [N].
Var kl_loss_nf_rows(Tape& t, Var mu_q, Var log_std_q, Var z, Var mu_p,
                    Var log_std_p, FlowStack& flow);

/// Batch mean of kl_loss_nf_rows.
Var kl_loss_nf(Tape& t, Var mu_q, Var log_std_q, Var z, Var mu_p,
               Var log_std_p, FlowStack& flow);

struct TotalLossOptions {
    /// Pin sigma*^2 instead of estimating it from the batch.
    const double* frozen_sigma_sq = nullptr;
};

/// Builds the full objective for the model's setting. noise:[N,D] drives the
/// reparameterized posterior sample and is drawn externally.
LossNodes total_loss(Tape& t, CvaeModel& model, const LabeledBatch& batch,
                     const Tensor& noise, const TotalLossOptions& opt = {});

}  // namespace cvae
