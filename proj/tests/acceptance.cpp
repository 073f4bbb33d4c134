// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <string>
#include <vector>

#include "cvae/config_json.hpp"
#include "cvae/data.hpp"
#include "cvae/distributions.hpp"
#include "cvae/flow.hpp"
#include "cvae/inference.hpp"
#include "cvae/losses.hpp"
#include "cvae/metrics.hpp"
#include "cvae/parallel.hpp"
#include "cvae/training.hpp"
#include "oracles.hpp"

using namespace cvae;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool pass, const std::string& detail,
            double secs) {
    std::printf("%s: criterion %2d (%s) [%.1fs] %s\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), secs, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void randomize(ParamRefs params, Rng& rng, double scale) {
    for (Param* p : params)
        for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = scale * rng.normal();
}

FlowStack random_stack(int dim, int depth, uint64_t seed, double scale = 0.5) {
    FlowStack flow("flow", dim, depth, 16);
    Rng rng(seed);
    ParamRefs ps;
    flow.collect(ps);
    randomize(ps, rng, scale);
    return flow;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------- criteria

void criterion1_invertibility() {
    Timer timer;
    double worst = 0;
    for (int dim : {2, 8, 32}) {
        FlowStack flow = random_stack(dim, 4, 100 + static_cast<uint64_t>(dim));
        Rng rng(200 + static_cast<uint64_t>(dim));
        Tensor z({100, dim});
        rng.fill_normal(z);
        auto [fz, ld] = flow.forward_values(z);
        Tensor back = flow.inverse(fz);
        for (int64_t i = 0; i < z.size(); ++i)
            worst = std::max(worst, std::abs(back[i] - z[i]));
    }
    double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof buf, "max |f^-1(f(z)) - z| = %.3g over 100 z, D in {2,8,32}",
                  worst);
    report(1, "flow invertibility", worst < 1e-5 && secs < 5.0, buf, secs);
}

void criterion2_jacobian() {
    Timer timer;
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        int dim = 2 + trial % 7;  // D in [2, 8]
        FlowStack flow = random_stack(dim, 4, 300 + static_cast<uint64_t>(trial));
        Rng rng(400 + static_cast<uint64_t>(trial));
        Eigen::VectorXd z0(dim);
        for (int i = 0; i < dim; ++i) z0[i] = rng.normal();
        auto map = [&](const Eigen::VectorXd& z) {
            Tensor zt({1, dim});
            for (int i = 0; i < dim; ++i) zt[i] = z[i];
            auto [g, ld] = flow.forward_values(zt);
            Eigen::VectorXd out(dim);
            for (int i = 0; i < dim; ++i) out[i] = g[i];
            return out;
        };
        Eigen::MatrixXd jac = oracles::fd_jacobian(map, z0, 1e-5);
        double fd = std::log(std::abs(jac.determinant()));
        Tensor zt({1, dim});
        for (int i = 0; i < dim; ++i) zt[i] = z0[i];
        auto [g, ld] = flow.forward_values(zt);
        worst = std::max(worst, std::abs(ld[0] - fd));
    }
    double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max |analytic - finite-difference| log-det = %.3g over 20 stacks", worst);
    report(2, "analytic log-determinant", worst < 1e-4 && secs < 30.0, buf, secs);
}

void criterion3_optimal_sigma() {
    Timer timer;
    Rng rng(500);
    const int points = 1000;
    const double lo = 1e-3, hi = 10.0;
    double cell = std::log(hi / lo) / (points - 1);
    double worst_cells = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 16;
        Eigen::VectorXd x(p), xh(p);
        for (int i = 0; i < p; ++i) {
            x[i] = rng.normal();
            xh[i] = rng.normal();
        }
        auto loglik = [&](double sigma) {
            DiagGaussian g(xh, Eigen::VectorXd::Constant(p, std::log(sigma)));
            return g.log_prob(x);
        };
        double best = oracles::grid_argmax(loglik, lo, hi, points);
        double analytic = std::sqrt(optimal_sigma_sq(x, xh));
        worst_cells = std::max(worst_cells,
                               std::abs(std::log(best) - std::log(analytic)) / cell);
    }
    double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "grid argmax within %.2f cells of sqrt(MSE) over 50 trials", worst_cells);
    report(3, "optimal decoder variance", worst_cells <= 1.0 + 1e-9 && secs < 5.0, buf, secs);
}

void criterion4_kl_estimator() {
    Timer timer;
    bool ok = true;
    double worst_z = 0;
    Rng qrng(600);
    FlowStack flow("flow", 4, 2, 8);
    Rng init(601);
    flow.init(init);  // identity
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 4, n = 10000;
        Eigen::VectorXd mu(d), ls(d);
        for (int i = 0; i < d; ++i) {
            mu[i] = qrng.normal();
            ls[i] = 0.5 * qrng.normal();
        }
        double closed = DiagGaussian(mu, ls).kl_to_standard();

        Tensor mu_t({n, d}), ls_t({n, d}), zero({n, d}), noise({n, d});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                mu_t[static_cast<int64_t>(i) * d + j] = mu[j];
                ls_t[static_cast<int64_t>(i) * d + j] = ls[j];
            }
        Rng nrng(700 + static_cast<uint64_t>(trial));
        nrng.fill_normal(noise);
        Tape t;
        Var z = sample_reparam_rows(t, t.constant(mu_t), t.constant(ls_t),
                                    t.constant(noise));
        Var rows = kl_loss_nf_rows(t, t.constant(mu_t), t.constant(ls_t), z,
                                   t.constant(zero), t.constant(zero), flow);
        double mean = 0, sq = 0;
        for (int i = 0; i < n; ++i) {
            mean += rows->val[i];
            sq += rows->val[i] * rows->val[i];
        }
        mean /= n;
        double se = std::sqrt((sq / n - mean * mean) / (n - 1.0));
        double zscore = std::abs(mean - closed) / se;
        worst_z = std::max(worst_z, zscore);
        if (zscore > 3.0) ok = false;
    }
    double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "MC mean vs closed form: worst |z| = %.2f std errors over 10 posteriors",
                  worst_z);
    report(4, "KL estimator unbiasedness", ok && secs < 10.0, buf, secs);
}

void criterion5_gradient_check() {
    Timer timer;
    double worst = 0;
    for (Setting s : {Setting::gaussian, Setting::sigma_nonnf, Setting::sigma_nf}) {
        ModelConfig mc;
        mc.setting = s;
        mc.latent_dim = 2;
        mc.attr_dim = 2;
        mc.channels = 1;
        mc.height = 4;
        mc.width = 4;
        mc.enc_widths = {2, 3};
        mc.p_widths = {2, 3};
        mc.flow_depth = 2;
        mc.flow_hidden = 4;
        CvaeModel m(mc);
        Rng init(800);
        m.init_params(init);
        Rng rng(801);
        for (Param* p : m.params())
            for (int64_t i = 0; i < p->value.size(); ++i)
                p->value[i] += 0.15 * rng.normal();

        LabeledBatch b;
        b.images = Tensor({2, 1, 4, 4});
        b.attrs = Tensor({2, 2});
        for (int64_t i = 0; i < b.images.size(); ++i) b.images[i] = rng.uniform();
        for (int64_t i = 0; i < b.attrs.size(); ++i) b.attrs[i] = rng.uniform() < 0.5;
        Tensor noise({2, 2});
        rng.fill_normal(noise);

        Tape t;
        LossNodes nodes = total_loss(t, m, b, noise);
        double frozen = nodes.sigma_sq;
        zero_grads(m.params());
        t.backward(nodes.total);

        TotalLossOptions opt;
        opt.frozen_sigma_sq = &frozen;
        const double h = 1e-5;
        for (Param* p : m.params())
            for (int64_t i = 0; i < p->value.size(); ++i) {
                double orig = p->value[i];
                p->value[i] = orig + h;
                Tape tp;
                double fp = total_loss(tp, m, b, noise, opt).total->val.item();
                p->value[i] = orig - h;
                Tape tm;
                double fm = total_loss(tm, m, b, noise, opt).total->val.item();
                p->value[i] = orig;
                double fd = (fp - fm) / (2 * h);
                double ad = p->grad[i];
                worst = std::max(worst, std::abs(fd - ad) /
                                            std::max({std::abs(fd), std::abs(ad), 1e-6}));
            }
    }
    double secs = timer.seconds();
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max relative gradient error %.3g across all three settings", worst);
    report(5, "full-model gradient check", worst < 1e-3 && secs < 120.0, buf, secs);
}

struct DeskRun {
    Setting setting;
    uint64_t seed;
    double best_nll;
    double fid_sampled;
    CvaeModel model;
};

// Shared training runs for criteria 6-8: the desk-scale protocol.
std::vector<DeskRun> desk_runs(double* out_secs) {
    Timer timer;
    DatasetSpec spec;
    spec.height = 32;
    spec.width = 32;
    spec.synthetic_seed = 20;
    Dataset all = Dataset::make_synthetic(6000, spec);
    auto [train_ds, test_ds] = split(all, 5.0 / 6.0, 0);  // 5000 / 1000

    AvgPoolExtractor extractor;
    std::vector<DeskRun> runs;
    for (Setting s : {Setting::gaussian, Setting::sigma_nonnf, Setting::sigma_nf}) {
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            ModelConfig mc;
            mc.setting = s;
            mc.latent_dim = 32;
            mc.attr_dim = 5;
            mc.channels = 3;
            mc.height = 32;
            mc.width = 32;
            mc.enc_widths = {16, 32, 64, 128};
            mc.p_widths = {16, 32};
            mc.flow_depth = 4;
            mc.flow_hidden = 64;
            TrainConfig tc;
            tc.batch_size = 64;
            tc.learning_rate = 1e-3;
            tc.max_epochs = 20;
            tc.patience = 5;
            tc.seed = seed;
            FitResult r = fit(tc, mc, train_ds, test_ds);
            double fid = fid_protocol(r.state.model, test_ds, FidMode::sampled,
                                      extractor, 900 + seed);
            std::printf("  run %s seed %llu: best NLL %.2f (step %lld), FID(sampled) %.3f\n",
                        setting_name(s).c_str(), static_cast<unsigned long long>(seed),
                        r.state.best_test_nll,
                        static_cast<long long>(r.state.best_step), fid);
            std::fflush(stdout);
            runs.push_back(DeskRun{s, seed, r.state.best_test_nll, fid,
                                   std::move(r.state.model)});
        }
    }
    *out_secs = timer.seconds();
    return runs;
}

void criterion6_nll_ordering(std::vector<DeskRun>& runs, double protocol_secs) {
    std::vector<double> g, nn, nf;
    for (const DeskRun& r : runs) {
        if (r.setting == Setting::gaussian) g.push_back(r.best_nll);
        if (r.setting == Setting::sigma_nonnf) nn.push_back(r.best_nll);
        if (r.setting == Setting::sigma_nf) nf.push_back(r.best_nll);
    }
    double mg = median(g), mnn = median(nn), mnf = median(nf);
    bool pass = (mnn <= mg - 1.0) && (mnf <= mnn + 0.5) && protocol_secs < 7200.0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "median NLL: gaussian %.2f, calibrated %.2f, flow-prior %.2f "
                  "(need calibrated <= gaussian - 1.0 and flow <= calibrated + 0.5)",
                  mg, mnn, mnf);
    report(6, "test-NLL ordering at desk scale", pass, buf, protocol_secs);
}

void criterion7_fid_ordering(std::vector<DeskRun>& runs) {
    Timer timer;
    bool pass = true;
    std::string detail = "FID(sampled) per seed (flow vs gaussian):";
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        double fg = -1, fnf = -1;
        for (const DeskRun& r : runs) {
            if (r.seed != seed) continue;
            if (r.setting == Setting::gaussian) fg = r.fid_sampled;
            if (r.setting == Setting::sigma_nf) fnf = r.fid_sampled;
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, " [%.3f vs %.3f]", fnf, fg);
        detail += buf;
        if (!(fnf <= fg)) pass = false;
    }
    report(7, "FID(sampled) ordering", pass, detail, timer.seconds());
}

void criterion8_conditioning(std::vector<DeskRun>& runs) {
    Timer timer;
    // median-NLL flow-prior model
    std::vector<std::pair<double, DeskRun*>> nf;
    for (DeskRun& r : runs)
        if (r.setting == Setting::sigma_nf) nf.emplace_back(r.best_nll, &r);
    std::sort(nf.begin(), nf.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    CvaeModel& model = nf[nf.size() / 2].second->model;

    Rng arng(1000);
    double means[2] = {0, 0};
    for (int is_red : {0, 1}) {
        Tensor attrs({64, 5});
        for (int i = 0; i < 64; ++i) {
            for (int j = 0; j < 5; ++j)
                attrs[static_cast<int64_t>(i) * 5 + j] = arng.uniform() < 0.5;
            attrs[static_cast<int64_t>(i) * 5 + 2] = is_red;
        }
        Tensor imgs = sample_conditional(model, attrs, 1001);
        int64_t sz = static_cast<int64_t>(3) * 32 * 32;
        double m = 0;
        for (int i = 0; i < 64; ++i) {
            Tensor one({3, 32, 32});
            std::copy_n(imgs.data() + i * sz, sz, one.data());
            m += SyntheticProbe::foreground_red_mean(one);
        }
        means[is_red] = m / 64;
    }
    double margin = means[1] - means[0];
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "foreground red mean %.3f (red) vs %.3f (not red), margin %.3f > 0.1",
                  means[1], means[0], margin);
    report(8, "conditioning efficacy", margin > 0.1, buf, timer.seconds());
}

void criterion9_frechet_closed_forms() {
    Timer timer;
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
    FeatureStats a{Eigen::Vector2d(0, 0), eye, 100};
    FeatureStats b{Eigen::Vector2d(3, 4), eye, 100};
    double same = frechet_distance(a, a);
    double shift = frechet_distance(a, b);
    FeatureStats c{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0), 100};
    FeatureStats d{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0), 100};
    double oneD = frechet_distance(c, d);
    bool pass = same == 0.0 && std::abs(shift - 25.0) <= 1e-9 &&
                std::abs(oneD - 1.0) <= 1e-9;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "identical=%.3g, mean-shift(3,4)=%.12g, 1-D var(4,1)=%.12g", same,
                  shift, oneD);
    report(9, "Frechet closed forms", pass, buf, timer.seconds());
}

void criterion10_reproducibility() {
    Timer timer;
    fs::path tmp = fs::temp_directory_path() /
                   ("cvae_accept_" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    nlohmann::json cfg = {{"setting", "sigma_nf"},
                          {"seed", 11},
                          {"batch_size", 16},
                          {"learning_rate", 0.001},
                          {"max_epochs", 2},
                          {"patience", 5},
                          {"latent_dim", 4},
                          {"channels", 3},
                          {"image_height", 16},
                          {"image_width", 16},
                          {"enc_widths", {4, 8}},
                          {"p_widths", {4, 8}},
                          {"flow_depth", 2},
                          {"flow_hidden", 8},
                          {"data_source", "synthetic"},
                          {"synthetic_n", 128},
                          {"synthetic_seed", 3},
                          {"train_fraction", 0.75},
                          {"threads", 2},
                          {"out_dir", (tmp / "a").string()}};
    std::ofstream(tmp / "run.json") << cfg.dump(2);

    auto run = [&](const fs::path& config) {
        std::string cmd = std::string(CVAE_CLI_PATH) + " train --config " +
                          config.string() + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };

    bool ok = run(tmp / "run.json");
    std::string first;
    if (ok) {
        first = slurp(tmp / "a" / "history.jsonl");
        // re-run from the echoed config into a fresh directory
        nlohmann::json echoed =
            nlohmann::json::parse(slurp(tmp / "a" / "config.json"));
        echoed["out_dir"] = (tmp / "b").string();
        std::ofstream(tmp / "echoed.json") << echoed.dump(2);
        ok = run(tmp / "echoed.json");
    }
    bool pass = false;
    if (ok) {
        std::string second = slurp(tmp / "b" / "history.jsonl");
        pass = !first.empty() && first == second;
    }
    fs::remove_all(tmp);
    report(10, "bitwise reproducibility from echoed config", pass,
           pass ? "history logs byte-identical across reruns"
                : "history logs differ or a run failed",
           timer.seconds());
}

}  // namespace

int main() {
    set_num_threads(2);
    std::printf("acceptance suite: %d worker threads\n", num_threads());

    criterion1_invertibility();
    criterion2_jacobian();
    criterion3_optimal_sigma();
    criterion4_kl_estimator();
    criterion5_gradient_check();
    criterion9_frechet_closed_forms();
    criterion10_reproducibility();

    std::printf("running desk-scale training protocol (9 runs)...\n");
    std::fflush(stdout);
    double protocol_secs = 0;
    std::vector<DeskRun> runs = desk_runs(&protocol_secs);
    criterion6_nll_ordering(runs, protocol_secs);
    criterion7_fid_ordering(runs);
    criterion8_conditioning(runs);

    std::printf("%s: %d criterion(s) failed\n", g_failures ? "FAIL" : "OK", g_failures);
    return g_failures ? 1 : 0;
}
