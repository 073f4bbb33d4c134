#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>

#include "cvae/data.hpp"
#include "cvae/models.hpp"

namespace cvae {

/// Gaussian moment fit of a feature set.
struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased, symmetric
    int n = 0;

    int dim() const { return static_cast<int>(mean.size()); }
    /// Fewer samples than dimensions + 1 makes the covariance singular.
    bool singular_fit() const { return n < dim() + 1; }
};

/// Sample mean and unbiased covariance of features (one row per sample).
FeatureStats fit_stats(const Eigen::MatrixXd& features);

/// Principal square root of a symmetric PSD matrix; eigenvalues are clipped
/// at zero, values below -1e-6 (relative) are rejected.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s);

/// Square root of the product A*B of two PSD matrices via the symmetrized
/// form A^1/2 (A^1/2 B A^1/2)^1/2 A^-1/2; requires A nonsingular.
Eigen::MatrixXd sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// ||mu1-mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^1/2); symmetric, >= 0, tiny
/// negative numerical noise is zeroed.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// Maps image batches [N,C,H,W] to feature rows [N,F].
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual int feature_dim(int c, int h, int w) const = 0;
    virtual Eigen::MatrixXd extract(const Tensor& images) const = 0;
};

/// Default extractor: images average-pooled onto a g x g grid per channel and
/// flattened. Deterministic and dependency-free; values are not comparable to
/// scores from pretrained feature networks.
class AvgPoolExtractor final : public FeatureExtractor {
public:
    explicit AvgPoolExtractor(int grid = 8) : grid_(grid) {}
    int feature_dim(int c, int h, int w) const override;
    Eigen::MatrixXd extract(const Tensor& images) const override;

private:
    int grid_;
};

enum class FidMode { recon, sampled };

/// Fréchet distance between feature fits of model outputs and the test set.
/// recon compares reconstructed test images against the originals; sampled
/// compares images sampled with the test set's attribute vectors against the
/// originals.
double fid_protocol(CvaeModel& model, const Dataset& test, FidMode mode,
                    const FeatureExtractor& extractor, uint64_t seed = 0,
                    int batch_size = 64);

/// Plain numeric table: first line "N F", then N rows of F values.
Eigen::MatrixXd load_features(const std::string& path);
void save_features(const std::string& path, const Eigen::MatrixXd& features);

}  // namespace cvae
