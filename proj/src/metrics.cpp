#include "cvae/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "cvae/inference.hpp"

namespace cvae {

FeatureStats fit_stats(const Eigen::MatrixXd& features) {
    int n = static_cast<int>(features.rows());
    if (n < 1) throw std::invalid_argument("fit_stats: no samples");
    FeatureStats st;
    st.n = n;
    st.mean = features.colwise().mean();
    Eigen::MatrixXd centered = features.rowwise() - st.mean.transpose();
    if (n == 1)
        st.cov = Eigen::MatrixXd::Zero(features.cols(), features.cols());
    else
        st.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    st.cov = 0.5 * (st.cov + st.cov.transpose());
    return st;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sqrt_psd: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-6 * scale)
        throw std::runtime_error("sqrt_psd: matrix is not PSD beyond tolerance");
    Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd a_half = sqrt_psd(a);
    Eigen::MatrixXd inner = sqrt_psd(a_half * b * a_half);
    // A^1/2 M^1/2 A^-1/2 squares to A B; similar matrices share the trace.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a_half);
    Eigen::VectorXd ev = es.eigenvalues();
    double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < ev.size(); ++i)
        if (ev[i] < 1e-12 * scale)
            throw std::runtime_error("sqrt_product: first factor is singular");
    Eigen::MatrixXd a_half_inv = es.eigenvectors() *
                                 ev.cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose();
    return a_half * inner * a_half_inv;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("frechet_distance: feature dimensions differ");
    Eigen::MatrixXd a_half = sqrt_psd(a.cov);
    Eigen::MatrixXd inner = sqrt_psd(a_half * b.cov * a_half);
    double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() -
               2.0 * inner.trace();
    if (d < 0) {
        if (d < -1e-6)
            throw std::runtime_error("frechet_distance: negative beyond tolerance");
        d = 0;
    }
    return d;
}

int AvgPoolExtractor::feature_dim(int c, int h, int w) const {
    int gh = std::min(grid_, h), gw = std::min(grid_, w);
    return c * gh * gw;
}

Eigen::MatrixXd AvgPoolExtractor::extract(const Tensor& images) const {
    if (images.ndim() != 4)
        throw std::invalid_argument("AvgPoolExtractor: expects [N,C,H,W]");
    int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    int gh = std::min(grid_, h), gw = std::min(grid_, w);
    Eigen::MatrixXd out(n, c * gh * gw);
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        int col = 0;
        for (int ch = 0; ch < c; ++ch) {
            const double* p = images.data() + (static_cast<int64_t>(i) * c + ch) * plane;
            for (int gi = 0; gi < gh; ++gi) {
                int r0 = gi * h / gh, r1 = std::max(r0 + 1, (gi + 1) * h / gh);
                for (int gj = 0; gj < gw; ++gj) {
                    int c0 = gj * w / gw, c1 = std::max(c0 + 1, (gj + 1) * w / gw);
                    double s = 0;
                    for (int r = r0; r < r1; ++r)
                        for (int cc = c0; cc < c1; ++cc)
                            s += p[static_cast<int64_t>(r) * w + cc];
                    out(i, col++) = s / ((r1 - r0) * (c1 - c0));
                }
            }
        }
    }
    return out;
}

double fid_protocol(CvaeModel& model, const Dataset& test, FidMode mode,
                    const FeatureExtractor& extractor, uint64_t seed,
                    int batch_size) {
    if (test.size() == 0) throw std::invalid_argument("fid_protocol: empty test set");
    const ModelConfig& cfg = model.config();
    int f = extractor.feature_dim(cfg.channels, cfg.height, cfg.width);
    int n = test.size();
    Eigen::MatrixXd real(n, f), generated(n, f);
    Rng seed_stream(seed);
    for (int b = 0; b < n; b += batch_size) {
        int e = std::min(n, b + batch_size);
        LabeledBatch batch = test.batch_range(b, e);
        Eigen::MatrixXd fr = extractor.extract(batch.images);
        if (fr.cols() != f)
            throw std::invalid_argument("fid_protocol: extractor feature dim mismatch");
        real.middleRows(b, e - b) = fr;
        Tensor imgs;
        if (mode == FidMode::recon) {
            imgs = reconstruct(model, batch.images, batch.attrs);
        } else {
            Tensor noise = seed_stream.normal_tensor({e - b, cfg.latent_dim});
            imgs = sample_conditional_with_noise(model, batch.attrs, noise);
        }
        generated.middleRows(b, e - b) = extractor.extract(imgs);
    }
    FeatureStats sr = fit_stats(real), sg = fit_stats(generated);
    if (sr.singular_fit() || sg.singular_fit())
        std::cerr << "warning: feature fit uses n=" << n << " samples for F=" << f
                  << " dims; covariance is singular\n";
    return frechet_distance(sr, sg);
}

Eigen::MatrixXd load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file '" + path + "'");
    int64_t n = 0, f = 0;
    if (!(in >> n >> f) || n < 1 || f < 1)
        throw std::runtime_error("feature file '" + path + "': bad header (want 'N F')");
    Eigen::MatrixXd m(n, f);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < f; ++j)
            if (!(in >> m(i, j)))
                throw std::runtime_error("feature file '" + path + "': truncated at row " +
                                         std::to_string(i));
    return m;
}

void save_features(const std::string& path, const Eigen::MatrixXd& features) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write feature file '" + path + "'");
    out << features.rows() << ' ' << features.cols() << '\n';
    char buf[40];
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", features(i, j));
            out << buf << (j + 1 < features.cols() ? " " : "");
        }
        out << '\n';
    }
}

}  // namespace cvae
