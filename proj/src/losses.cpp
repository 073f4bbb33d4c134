#include "cvae/losses.hpp"

#include <cmath>

namespace cvae {

Var recon_loss_unit_sigma(Tape& t, Var x_hat, Var x) {
    check_same_shape(x_hat->val, x->val, "recon_loss_unit_sigma");
    int n = x_hat->val.dim(0);
    // (P/2) * mean-over-batch MSE == sum of squares / (2N).
    Var ss = sum_all(t, square(t, sub(t, x_hat, x)));
    return scale(t, ss, 0.5 / static_cast<double>(n));
}

std::pair<Var, double> recon_loss_optimal_sigma(Tape& t, Var x_hat, Var x,
                                                const double* frozen_sigma_sq) {
    check_same_shape(x_hat->val, x->val, "recon_loss_optimal_sigma");
    int64_t total = x_hat->val.size();
    int n = x_hat->val.dim(0);
    if (n == 0) throw std::invalid_argument("recon_loss_optimal_sigma: empty batch");
    double p = static_cast<double>(total) / n;

    Var mse = mean_all(t, square(t, sub(t, x_hat, x)));
    double sigma_sq = frozen_sigma_sq ? *frozen_sigma_sq
                                      : std::max(mse->val.item(), kVarianceFloor);
    // Value (P/2) ln sigma*^2, gradient (P / 2 sigma*^2) * d(MSE): the frozen
    // variance enters only as a constant factor plus a constant offset. With
    // an externally pinned variance the offset must not track the current
    // MSE, so the node behaves as the local surrogate (P/2s^2) MSE + const.
    double anchor = frozen_sigma_sq ? 1.0 : mse->val.item() / sigma_sq;
    double offset = 0.5 * p * (std::log(sigma_sq) - anchor);
    Var grad_path = scale(t, mse, 0.5 * p / sigma_sq);
    Var loss = add(t, grad_path, t.constant_scalar(offset));
    return {loss, sigma_sq};
}

Var kl_loss_standard(Tape& t, Var mu, Var log_std) {
    return mean_all(t, kl_standard_rows(t, mu, log_std));
}

Var kl_loss_nf_rows(Tape& t, Var mu_q, Var log_std_q, Var z, Var mu_p,
                    Var log_std_p, FlowStack& flow) {
    Var log_q = gaussian_log_prob_rows(t, z, mu_q, log_std_q);
    Var log_p = flow_prior_log_prob_rows(t, z, mu_p, log_std_p, flow);
    return sub(t, log_q, log_p);
}

Var kl_loss_nf(Tape& t, Var mu_q, Var log_std_q, Var z, Var mu_p,
               Var log_std_p, FlowStack& flow) {
    return mean_all(t, kl_loss_nf_rows(t, mu_q, log_std_q, z, mu_p, log_std_p, flow));
}

LossNodes total_loss(Tape& t, CvaeModel& model, const LabeledBatch& batch,
                     const Tensor& noise, const TotalLossOptions& opt) {
    batch.validate();
    const ModelConfig& cfg = model.config();
    int n = batch.size();
    if (noise.ndim() != 2 || noise.dim(0) != n || noise.dim(1) != cfg.latent_dim)
        throw std::invalid_argument("total_loss: noise must be [N,latent_dim]");

    Var x = t.constant(batch.images);
    Var y = t.constant(batch.attrs);
    Var eps = t.constant(noise);

    auto [mu_q, log_std_q] = model.encode(t, x, y);
    Var z = sample_reparam_rows(t, mu_q, log_std_q, eps);
    Var x_hat = model.decode(t, z, y);

    Var x_flat = reshape(t, x, {n, cfg.pixel_count()});
    Var x_hat_flat = reshape(t, x_hat, {n, cfg.pixel_count()});

    LossNodes out;
    switch (cfg.setting) {
        case Setting::gaussian: {
            out.recon = recon_loss_unit_sigma(t, x_hat_flat, x_flat);
            out.kl = kl_loss_standard(t, mu_q, log_std_q);
            out.sigma_sq = 1.0;
            break;
        }
        case Setting::sigma_nonnf: {
            auto [recon, ssq] =
                recon_loss_optimal_sigma(t, x_hat_flat, x_flat, opt.frozen_sigma_sq);
            out.recon = recon;
            out.kl = kl_loss_standard(t, mu_q, log_std_q);
            out.sigma_sq = ssq;
            break;
        }
        case Setting::sigma_nf: {
            auto [recon, ssq] =
                recon_loss_optimal_sigma(t, x_hat_flat, x_flat, opt.frozen_sigma_sq);
            auto [mu_p, log_std_p] = model.encode_label(t, y);
            out.recon = recon;
            out.kl = kl_loss_nf(t, mu_q, log_std_q, z, mu_p, log_std_p, model.flow());
            out.sigma_sq = ssq;
            break;
        }
        default:
            throw std::invalid_argument("total_loss: unknown setting");
    }
    out.total = add(t, out.recon, out.kl);
    return out;
}

}  // namespace cvae
