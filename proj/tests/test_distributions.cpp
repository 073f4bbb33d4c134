#include <doctest.h>

#include <cmath>

#include "cvae/distributions.hpp"
#include "cvae/rng.hpp"
#include "oracles.hpp"

using namespace cvae;
using Eigen::VectorXd;

namespace {
VectorXd vec(std::initializer_list<double> v) {
    VectorXd x(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double d : v) x[i++] = d;
    return x;
}
}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("log_prob closed-form values") {
    DiagGaussian std1 = DiagGaussian::standard(1);
    CHECK(std1.log_prob(vec({0.0})) == doctest::Approx(-0.9189385).epsilon(1e-6));

    DiagGaussian std2 = DiagGaussian::standard(2);
    CHECK(std2.log_prob(vec({0.0, 0.0})) == doctest::Approx(-1.8378771).epsilon(1e-6));

    DiagGaussian g(vec({1.0}), vec({std::log(2.0)}));
    CHECK(g.log_prob(vec({1.0})) == doctest::Approx(-1.6120857).epsilon(1e-6));

    CHECK_THROWS_AS(std1.log_prob(vec({0.0, 0.0})), std::invalid_argument);
}

TEST_CASE("log_prob integrates to one (trapezoid quadrature)") {
    for (auto [mu, sigma] : {std::pair{0.0, 1.0}, {1.3, 0.5}, {-2.0, 3.0}}) {
        DiagGaussian g(vec({mu}), vec({std::log(sigma)}));
        double mass = oracles::trapezoid(
            [&](double x) { return std::exp(g.log_prob(vec({x}))); },
            mu - 8 * sigma, mu + 8 * sigma, 4000);
        CHECK(mass > 0.999);
        CHECK(mass < 1.001);
    }
}

TEST_CASE("sample_reparam") {
    DiagGaussian g(vec({2.0}), vec({std::log(3.0)}));
    CHECK(g.sample_reparam(vec({0.0}))[0] == doctest::Approx(2.0));
    CHECK(g.sample_reparam(vec({1.0}))[0] == doctest::Approx(5.0));
    DiagGaussian s = DiagGaussian::standard(3);
    VectorXd n = vec({0.3, -0.7, 2.0});
    CHECK((s.sample_reparam(n) - n).norm() == doctest::Approx(0.0));
    CHECK_THROWS_AS(s.sample_reparam(vec({1.0})), std::invalid_argument);
}

TEST_CASE("kl_to_standard closed-form values") {
    CHECK(DiagGaussian::standard(4).kl_to_standard() == doctest::Approx(0.0).epsilon(1e-12));
    DiagGaussian g1(vec({1.0}), vec({0.0}));
    CHECK(g1.kl_to_standard() == doctest::Approx(0.5).epsilon(1e-12));
    DiagGaussian g2(vec({0.0}), vec({std::log(2.0)}));
    CHECK(g2.kl_to_standard() == doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("kl_to_standard is nonnegative, zero only at the standard normal") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        int d = 1 + rng.uniform_int(6);
        VectorXd mu(d), ls(d);
        for (int i = 0; i < d; ++i) {
            mu[i] = 2.0 * rng.normal();
            ls[i] = 0.8 * rng.normal();
        }
        DiagGaussian g(mu, ls);
        double kl = g.kl_to_standard();
        CHECK(kl >= 0.0);
        if (mu.cwiseAbs().maxCoeff() > 1e-3 || ls.cwiseAbs().maxCoeff() > 1e-3)
            CHECK(kl > 1e-7);
    }
    DiagGaussian exact = DiagGaussian::standard(5);
    CHECK(std::abs(exact.kl_to_standard()) < 1e-12);
}

TEST_CASE("optimal_sigma_sq values and clamp") {
    VectorXd x = vec({1.0, 2.0, 3.0});
    CHECK(optimal_sigma_sq(x, x) == doctest::Approx(1e-6));
    CHECK(optimal_sigma_sq(vec({0.0, 0.0}), vec({1.0, 1.0})) == doctest::Approx(1.0));
    CHECK(optimal_sigma_sq(x, vec({1.0, 2.0, 5.0})) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("nll_optimal_sigma values") {
    CHECK(nll_optimal_sigma(vec({0.0, 0.0}), vec({1.0, 1.0})) == doctest::Approx(0.0));
    double e = std::exp(1.0);
    CHECK(nll_optimal_sigma(vec({0.0, 0.0}), vec({e, e})) == doctest::Approx(2.0).epsilon(1e-9));
    VectorXd x4 = vec({1.0, 2.0, 3.0, 4.0});
    CHECK(nll_optimal_sigma(x4, x4) == doctest::Approx(2.0 * std::log(1e-6)).epsilon(1e-9));
}

TEST_CASE("optimal sigma maximizes the likelihood (grid-search oracle)") {
    Rng rng(22);
    const int points = 1000;
    const double lo = 1e-3, hi = 10.0;
    double cell = std::log(hi / lo) / (points - 1);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 16;
        VectorXd x(p), xh(p);
        for (int i = 0; i < p; ++i) {
            x[i] = rng.normal();
            xh[i] = rng.normal();
        }
        auto loglik = [&](double sigma) {
            DiagGaussian g(xh, VectorXd::Constant(p, std::log(sigma)));
            return g.log_prob(x);
        };
        double best = oracles::grid_argmax(loglik, lo, hi, points);
        double analytic = std::sqrt(optimal_sigma_sq(x, xh));
        CHECK(std::abs(std::log(best) - std::log(analytic)) <= cell + 1e-12);
    }
}

TEST_CASE("log_prob gradients match central finite differences") {
    Rng rng(23);
    const int d = 5;
    Param mu("mu", {1, d}), ls("ls", {1, d}), xv("x", {1, d});
    for (int i = 0; i < d; ++i) {
        mu.value[i] = rng.normal();
        ls.value[i] = 0.5 * rng.normal();
        xv.value[i] = rng.normal();
    }
    Tape t;
    Var lp = gaussian_log_prob_rows(t, t.constant(xv.value), t.leaf(mu), t.leaf(ls));
    Var loss = sum_all(t, lp);
    mu.zero_grad();
    ls.zero_grad();
    t.backward(loss);

    auto numeric = [&](Param& p, int i, double h) {
        double orig = p.value[i];
        auto eval = [&] {
            Eigen::VectorXd m(d), s(d), x(d);
            for (int k = 0; k < d; ++k) {
                m[k] = mu.value[k];
                s[k] = ls.value[k];
                x[k] = xv.value[k];
            }
            return DiagGaussian(m, s).log_prob(x);
        };
        p.value[i] = orig + h;
        double fp = eval();
        p.value[i] = orig - h;
        double fm = eval();
        p.value[i] = orig;
        return (fp - fm) / (2 * h);
    };
    for (int i = 0; i < d; ++i) {
        double fd_mu = numeric(mu, i, 1e-5);
        double fd_ls = numeric(ls, i, 1e-5);
        CHECK(std::abs(fd_mu - mu.grad[i]) / std::max(std::abs(fd_mu), 1e-8) < 1e-6);
        CHECK(std::abs(fd_ls - ls.grad[i]) / std::max(std::abs(fd_ls), 1e-8) < 1e-6);
    }
}

TEST_CASE("construction invariants") {
    CHECK_THROWS_AS(DiagGaussian(vec({0.0}), vec({0.0, 0.0})), std::invalid_argument);
    DiagGaussian clamped(vec({0.0}), vec({100.0}));
    CHECK(clamped.log_std[0] == doctest::Approx(kLogStdMax));
    DiagGaussian clamped_lo(vec({0.0}), vec({-100.0}));
    CHECK(clamped_lo.log_std[0] == doctest::Approx(kLogStdMin));
    VectorXd bad(1);
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(DiagGaussian(bad, vec({0.0})), std::invalid_argument);
}

}  // TEST_SUITE
