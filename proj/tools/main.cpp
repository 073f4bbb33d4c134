#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "cvae/config_json.hpp"
#include "cvae/image_io.hpp"
#include "cvae/inference.hpp"
#include "cvae/metrics.hpp"
#include "cvae/parallel.hpp"
#include "cvae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
    std::optional<std::string> setting;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    std::optional<int> synthetic_n;
    std::optional<uint64_t> synthetic_seed;
};

cvae::RunConfig resolve_config(const std::string& config_path, const Overrides& ov,
                               bool dataset_only = false) {
    json j = json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw std::runtime_error("config '" + config_path +
                                     "' is not valid JSON: " + e.what());
        }
    }
    if (ov.setting) j["setting"] = *ov.setting;
    if (ov.seed) j["seed"] = *ov.seed;
    if (ov.out_dir) j["out_dir"] = *ov.out_dir;
    if (ov.threads) j["threads"] = *ov.threads;
    if (ov.synthetic_n) j["synthetic_n"] = *ov.synthetic_n;
    if (ov.synthetic_seed) j["synthetic_seed"] = *ov.synthetic_seed;
    return cvae::run_config_from_json(j, dataset_only);
}

std::vector<std::string> attr_names_for(const cvae::RunConfig& cfg) {
    if (cfg.data.source == cvae::DataSource::synthetic)
        return cvae::synthetic_attr_names();
    std::ifstream in(cfg.data.attr_table);
    if (!in)
        throw std::runtime_error("cannot open attribute table '" + cfg.data.attr_table + "'");
    std::string line;
    std::getline(in, line);
    if (!std::getline(in, line))
        throw std::runtime_error("attribute table has no name line");
    std::vector<std::string> names;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) names.push_back(tok);
    return names;
}

int cmd_make_synth(const std::string& config_path, const Overrides& ov) {
    cvae::RunConfig cfg = resolve_config(config_path, ov, /*dataset_only=*/true);
    fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir / "images");

    cvae::Dataset ds = cvae::Dataset::make_synthetic(cfg.data.synthetic_n, cfg.data);
    int n = ds.size(), a = ds.attr_dim();
    cvae::Tensor attrs = ds.all_attrs();

    std::ofstream table(out_dir / "list_attr.txt");
    table << n << "\n";
    for (int j = 0; j < a; ++j)
        table << ds.attr_names()[static_cast<size_t>(j)] << (j + 1 < a ? " " : "\n");
    char name[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(name, sizeof name, "img%06d.png", i);
        cvae::LabeledBatch one = ds.batch_range(i, i + 1);
        cvae::Tensor img = one.images.reshaped({ds.channels(), ds.height(), ds.width()});
        cvae::write_png((out_dir / "images" / name).string(), img);
        table << name;
        for (int j = 0; j < a; ++j)
            table << ' ' << (attrs[static_cast<int64_t>(i) * a + j] > 0.5 ? "1" : "-1");
        table << "\n";
    }
    table.close();

    cvae::write_run_config((out_dir / "dataset.json").string(), cfg);
    json summary = {{"images", n},
                    {"attrs", a},
                    {"out_dir", cfg.out_dir},
                    {"attr_table", (out_dir / "list_attr.txt").string()}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const Overrides& ov) {
    cvae::RunConfig cfg = resolve_config(config_path, ov);
    cvae::set_num_threads(cfg.threads);
    fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    cvae::write_run_config((out_dir / "config.json").string(), cfg);

    auto [train_ds, test_ds] = cvae::build_datasets(cfg);

    std::ofstream history(out_dir / "history.jsonl");
    if (!history) throw std::runtime_error("cannot write history log");
    auto on_eval = [&history](const cvae::HistoryRow& row) {
        history << row.json_line() << "\n";
        history.flush();
    };

    cvae::FitResult result =
        cvae::fit(cfg.train, cfg.model, train_ds, test_ds, cfg.data.augment, on_eval);

    std::string ckpt_path = (out_dir / "checkpoint.bin").string();
    cvae::save_checkpoint(ckpt_path, result.state, cvae::run_config_to_json(cfg));

    json summary = {{"checkpoint", ckpt_path},
                    {"best_test_nll", result.state.best_test_nll},
                    {"best_step", result.state.best_step},
                    {"steps", result.state.step},
                    {"evals", result.history.size()},
                    {"setting", cvae::setting_name(cfg.model.setting)},
                    {"seed", cfg.train.seed}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& out_dir_flag,
             std::optional<uint64_t> seed_flag, int threads,
             const std::vector<std::string>& feature_files,
             const std::string& export_dir) {
    cvae::set_num_threads(threads);

    if (!feature_files.empty()) {
        if (feature_files.size() != 2)
            throw std::runtime_error("--features-file must be given exactly twice "
                                     "(two tables to compare)");
        Eigen::MatrixXd a = cvae::load_features(feature_files[0]);
        Eigen::MatrixXd b = cvae::load_features(feature_files[1]);
        double d = cvae::frechet_distance(cvae::fit_stats(a), cvae::fit_stats(b));
        json out = {{"frechet", d},
                    {"features_a", feature_files[0]},
                    {"features_b", feature_files[1]}};
        std::cout << out.dump() << "\n";
        return 0;
    }

    cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(ckpt_path);
    cvae::RunConfig cfg = cvae::run_config_from_json(loaded.config_echo);
    auto [train_ds, test_ds] = cvae::build_datasets(cfg);
    uint64_t seed = seed_flag.value_or(cfg.train.seed);

    cvae::CvaeModel& model = loaded.state.model;
    double nll = cvae::evaluate_nll(model, test_ds, cfg.train.batch_size);
    cvae::AvgPoolExtractor extractor;
    double fid_recon = cvae::fid_protocol(model, test_ds, cvae::FidMode::recon,
                                          extractor, seed, cfg.train.batch_size);
    double fid_sampled = cvae::fid_protocol(model, test_ds, cvae::FidMode::sampled,
                                            extractor, seed, cfg.train.batch_size);

    if (!export_dir.empty()) {
        fs::create_directories(export_dir);
        int n = test_ds.size();
        Eigen::MatrixXd real(n, extractor.feature_dim(cfg.model.channels,
                                                      cfg.model.height, cfg.model.width));
        Eigen::MatrixXd recon(real.rows(), real.cols());
        Eigen::MatrixXd sampled(real.rows(), real.cols());
        cvae::Rng noise_stream(seed);
        for (int b = 0; b < n; b += cfg.train.batch_size) {
            int e = std::min(n, b + cfg.train.batch_size);
            cvae::LabeledBatch batch = test_ds.batch_range(b, e);
            real.middleRows(b, e - b) = extractor.extract(batch.images);
            recon.middleRows(b, e - b) =
                extractor.extract(cvae::reconstruct(model, batch.images, batch.attrs));
            cvae::Tensor noise =
                noise_stream.normal_tensor({e - b, cfg.model.latent_dim});
            sampled.middleRows(b, e - b) = extractor.extract(
                cvae::sample_conditional_with_noise(model, batch.attrs, noise));
        }
        cvae::save_features((fs::path(export_dir) / "real.features.txt").string(), real);
        cvae::save_features((fs::path(export_dir) / "recon.features.txt").string(), recon);
        cvae::save_features((fs::path(export_dir) / "sampled.features.txt").string(), sampled);
    }

    json report = {{"test_nll", nll},
                   {"fid_recon", fid_recon},
                   {"fid_sampled", fid_sampled},
                   {"setting", cvae::setting_name(cfg.model.setting)},
                   {"seed", seed}};
    std::string out_dir =
        out_dir_flag.empty() ? fs::path(ckpt_path).parent_path().string() : out_dir_flag;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream mf(fs::path(out_dir) / "metrics.json");
        mf << report.dump(2) << "\n";
    }
    std::cout << report.dump() << "\n";
    return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& attrs_text,
               uint64_t seed, const std::string& out_path, int cols,
               bool through_flow, int threads) {
    cvae::set_num_threads(threads);
    cvae::LoadedCheckpoint loaded = cvae::load_checkpoint(ckpt_path);
    cvae::RunConfig cfg = cvae::run_config_from_json(loaded.config_echo);

    cvae::Tensor rows = cvae::parse_attrs(attrs_text, attr_names_for(cfg));
    std::vector<cvae::Tensor> attr_rows;
    for (int i = 0; i < rows.dim(0); ++i) {
        cvae::Tensor row({rows.dim(1)});
        for (int j = 0; j < rows.dim(1); ++j)
            row[j] = rows[static_cast<int64_t>(i) * rows.dim(1) + j];
        attr_rows.push_back(std::move(row));
    }
    if (auto parent = fs::path(out_path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    cvae::sample_grid(loaded.state.model, attr_rows, cols, seed, out_path, through_flow);
    json summary = {{"out", out_path},
                    {"rows", attr_rows.size()},
                    {"cols", cols},
                    {"seed", seed},
                    {"through_flow", through_flow}};
    std::cout << summary.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional VAE toolkit: train, evaluate, and sample "
                 "attribute-conditioned image models"};
    app.require_subcommand(1);

    Overrides ov;
    std::string config_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run config (flat keys)");
        cmd->add_option_function<std::string>(
            "--setting", [&](const std::string& v) { ov.setting = v; },
            "gaussian|sigma-nonnf|sigma-nf");
        cmd->add_option_function<uint64_t>(
            "--seed", [&](uint64_t v) { ov.seed = v; }, "training seed");
        cmd->add_option_function<std::string>(
            "--out-dir", [&](const std::string& v) { ov.out_dir = v; }, "output directory");
        cmd->add_option_function<int>(
            "--threads", [&](int v) { ov.threads = v; }, "worker threads");
    };

    CLI::App* make_synth = app.add_subcommand(
        "make-synth", "Write a synthetic shape dataset as PNG files + attribute table");
    add_common(make_synth);
    make_synth->add_option_function<int>(
        "--n", [&](int v) { ov.synthetic_n = v; }, "number of images");
    make_synth->add_option_function<uint64_t>(
        "--synthetic-seed", [&](uint64_t v) { ov.synthetic_seed = v; },
        "generator seed");

    CLI::App* train = app.add_subcommand("train", "Train a model from a run config");
    add_common(train);

    CLI::App* eval = app.add_subcommand("eval", "Test NLL and Fréchet scores of a checkpoint");
    std::string ckpt, eval_out_dir, export_dir;
    std::vector<std::string> feature_files;
    std::optional<uint64_t> eval_seed;
    int eval_threads = 1;
    eval->add_option("--checkpoint", ckpt, "checkpoint file");
    eval->add_option("--out-dir", eval_out_dir, "where to write metrics.json");
    eval->add_option_function<uint64_t>(
        "--seed", [&](uint64_t v) { eval_seed = v; }, "sampling seed for FID");
    eval->add_option("--threads", eval_threads, "worker threads");
    eval->add_option("--features-file", feature_files,
                     "numeric feature table; give twice to compare two tables directly");
    eval->add_option("--export-features", export_dir,
                     "export real/recon/sampled feature tables to this directory");

    CLI::App* sample = app.add_subcommand("sample", "Render an attribute-conditioned PNG grid");
    std::string sample_ckpt, attrs_text, sample_out = "samples.png";
    uint64_t sample_seed = 0;
    int cols = 8, sample_threads = 1;
    bool through_flow = false;
    sample->add_option("--checkpoint", sample_ckpt, "checkpoint file")->required();
    sample->add_option("--attrs", attrs_text,
                       "rows 'v1,..,vA' of 0/1 or attribute names, ';' separated")
        ->required();
    sample->add_option("--seed", sample_seed, "noise seed");
    sample->add_option("--out", sample_out, "output PNG path");
    sample->add_option("--cols", cols, "samples per row");
    sample->add_flag("--through-flow", through_flow,
                     "pull latents back through the flow inverse");
    sample->add_option("--threads", sample_threads, "worker threads");

    try {
        app.parse(argc, argv);
        if (make_synth->parsed()) return cmd_make_synth(config_path, ov);
        if (train->parsed()) return cmd_train(config_path, ov);
        if (eval->parsed()) {
            if (ckpt.empty() && feature_files.empty())
                throw std::runtime_error("eval needs --checkpoint or two --features-file");
            return cmd_eval(ckpt, eval_out_dir, eval_seed, eval_threads, feature_files,
                            export_dir);
        }
        if (sample->parsed())
            return cmd_sample(sample_ckpt, attrs_text, sample_seed, sample_out, cols,
                              through_flow, sample_threads);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
