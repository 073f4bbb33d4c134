#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cvae/metrics.hpp"
#include "cvae/rng.hpp"

using namespace cvae;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_psd(int f, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd a(f, f);
    for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) a(i, j) = scale * rng.normal();
    return a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(f, f);
}

FeatureStats stats_of(Eigen::VectorXd mean, Eigen::MatrixXd cov, int n = 100) {
    FeatureStats st;
    st.mean = std::move(mean);
    st.cov = std::move(cov);
    st.n = n;
    return st;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.setting = Setting::sigma_nf;
    cfg.latent_dim = 2;
    cfg.attr_dim = 5;
    cfg.channels = 3;
    cfg.height = 8;
    cfg.width = 8;
    cfg.enc_widths = {3, 4};
    cfg.p_widths = {2, 3};
    cfg.flow_depth = 2;
    cfg.flow_hidden = 4;
    return cfg;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("fit_stats: repeated row, 2-point hand case, symmetry") {
    Eigen::MatrixXd same(4, 3);
    for (int i = 0; i < 4; ++i) same.row(i) << 1.0, 2.0, 3.0;
    FeatureStats st = fit_stats(same);
    CHECK(st.n == 4);
    CHECK(st.mean[1] == doctest::Approx(2.0));
    CHECK(st.cov.norm() == doctest::Approx(0.0));

    Eigen::MatrixXd two(2, 2);
    two << 0, 0, 2, 2;
    FeatureStats st2 = fit_stats(two);
    CHECK(st2.mean[0] == doctest::Approx(1.0));
    // unbiased: sum of squared deviations / (n-1) = (1+1)/1 = 2
    CHECK(st2.cov(0, 0) == doctest::Approx(2.0));
    CHECK(st2.cov(0, 1) == doctest::Approx(2.0));
    CHECK((st2.cov - st2.cov.transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("frechet closed forms") {
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
    FeatureStats a = stats_of(Eigen::Vector2d(0, 0), eye);
    FeatureStats b = stats_of(Eigen::Vector2d(3, 4), eye);
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(frechet_distance(a, b) == doctest::Approx(25.0).epsilon(1e-9));

    // 1-D: same mean, variances 4 and 1 -> (2-1)^2 = 1
    FeatureStats c = stats_of(Eigen::VectorXd::Zero(1),
                              Eigen::MatrixXd::Constant(1, 1, 4.0));
    FeatureStats d = stats_of(Eigen::VectorXd::Zero(1),
                              Eigen::MatrixXd::Constant(1, 1, 1.0));
    CHECK(frechet_distance(c, d) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("frechet 1-D equals (dmu)^2 + (dsigma)^2 exactly") {
    Rng rng(92);
    for (int trial = 0; trial < 30; ++trial) {
        double m1 = rng.normal(), m2 = rng.normal();
        double s1 = 0.2 + rng.uniform(), s2 = 0.2 + rng.uniform();
        FeatureStats a = stats_of(Eigen::VectorXd::Constant(1, m1),
                                  Eigen::MatrixXd::Constant(1, 1, s1 * s1));
        FeatureStats b = stats_of(Eigen::VectorXd::Constant(1, m2),
                                  Eigen::MatrixXd::Constant(1, 1, s2 * s2));
        double expect = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
        CHECK(frechet_distance(a, b) == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("frechet is symmetric and nonnegative on random stats") {
    Rng rng(93);
    for (int f : {2, 5, 9}) {
        Eigen::VectorXd m1(f), m2(f);
        for (int i = 0; i < f; ++i) {
            m1[i] = rng.normal();
            m2[i] = rng.normal();
        }
        FeatureStats a = stats_of(m1, random_psd(f, rng));
        FeatureStats b = stats_of(m2, random_psd(f, rng));
        double dab = frechet_distance(a, b);
        double dba = frechet_distance(b, a);
        CHECK(dab >= 0.0);
        CHECK(dab == doctest::Approx(dba).epsilon(1e-7));
        CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));
    }
}

TEST_CASE("product matrix square root squares back (F up to 32)") {
    Rng rng(94);
    for (int f : {2, 8, 32}) {
        Eigen::MatrixXd a = random_psd(f, rng);
        Eigen::MatrixXd b = random_psd(f, rng);
        Eigen::MatrixXd q = sqrt_product(a, b);
        Eigen::MatrixXd ab = a * b;
        double rel = (q * q - ab).norm() / ab.norm();
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("sqrt_psd rejects clearly non-PSD input") {
    Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(sqrt_psd(neg), std::runtime_error);
    // tiny negative eigenvalue noise is clipped, not fatal
    Eigen::MatrixXd noisy = Eigen::MatrixXd::Identity(2, 2);
    noisy(0, 0) = -1e-9;
    CHECK(sqrt_psd(noisy)(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("avg-pool extractor shape and values") {
    AvgPoolExtractor ex(2);
    Tensor imgs({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) imgs[i] = i;
    Eigen::MatrixXd f = ex.extract(imgs);
    CHECK(f.rows() == 1);
    CHECK(f.cols() == 4);
    // top-left 2x2 block: (0+1+4+5)/4
    CHECK(f(0, 0) == doctest::Approx(2.5));
    CHECK(f(0, 3) == doctest::Approx(12.5));
}

TEST_CASE("fid protocol returns zero when features agree and counts attrs") {
    class ConstExtractor final : public FeatureExtractor {
    public:
        mutable int rows_seen = 0;
        int feature_dim(int, int, int) const override { return 3; }
        Eigen::MatrixXd extract(const Tensor& images) const override {
            rows_seen += images.dim(0);
            Eigen::MatrixXd f(images.dim(0), 3);
            for (int i = 0; i < images.dim(0); ++i) f.row(i) << 1.0, 2.0, 3.0;
            return f;
        }
    };
    CvaeModel m(tiny_config());
    Rng rng(95);
    m.init_params(rng);
    DatasetSpec spec;
    spec.height = 8;
    spec.width = 8;
    spec.synthetic_seed = 96;
    Dataset test = Dataset::make_synthetic(10, spec);

    ConstExtractor ex;
    CHECK(fid_protocol(m, test, FidMode::recon, ex) == doctest::Approx(0.0));
    int after_recon = ex.rows_seen;
    CHECK(after_recon == 20);  // 10 real + 10 reconstructed
    CHECK(fid_protocol(m, test, FidMode::sampled, ex, 7) == doctest::Approx(0.0));
    CHECK(ex.rows_seen - after_recon == 20);  // 10 real + 10 sampled (one per attr row)
}

TEST_CASE("frechet grows with added pixel noise (noise-sweep oracle)") {
    DatasetSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.synthetic_seed = 97;
    Dataset d = Dataset::make_synthetic(200, spec);
    LabeledBatch b = d.batch_range(0, 200);
    AvgPoolExtractor ex(4);
    Eigen::MatrixXd clean = ex.extract(b.images);

    Rng rng(98);
    auto noisy_distance = [&](double sigma) {
        Tensor noisy = b.images;
        for (int64_t i = 0; i < noisy.size(); ++i)
            noisy[i] = std::clamp(noisy[i] + sigma * rng.normal(), 0.0, 1.0);
        return frechet_distance(fit_stats(clean), fit_stats(ex.extract(noisy)));
    };
    double d1 = noisy_distance(0.05);
    double d2 = noisy_distance(0.15);
    double d3 = noisy_distance(0.40);
    CHECK(d1 < d2);
    CHECK(d2 < d3);
}

TEST_CASE("singular fit detection") {
    Eigen::MatrixXd few(3, 8);
    few.setRandom();
    CHECK(fit_stats(few).singular_fit());
    Eigen::MatrixXd enough(9, 8);
    enough.setRandom();
    CHECK(!fit_stats(enough).singular_fit());
}

TEST_CASE("feature file round trip") {
    Rng rng(99);
    Eigen::MatrixXd f(5, 3);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) f(i, j) = rng.normal();
    fs::path p = fs::temp_directory_path() / "cvae_features.txt";
    save_features(p.string(), f);
    Eigen::MatrixXd g = load_features(p.string());
    REQUIRE(g.rows() == 5);
    REQUIRE(g.cols() == 3);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) CHECK(g(i, j) == f(i, j));  // %.17g exact
    fs::remove(p);
    CHECK_THROWS_AS(load_features("/nonexistent/features.txt"), std::runtime_error);
}

}  // TEST_SUITE
