#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvae/data.hpp"
#include "cvae/losses.hpp"
#include "cvae/models.hpp"

namespace cvae {

enum class OptimizerKind { sgd, adam };

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 1e-3;
    int max_epochs = 20;
    int patience = 3;
    int eval_every = 0;  // steps between test evaluations; 0 = once per epoch
    uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double grad_clip = 10.0;

    void validate() const;
};

/// SGD or Adam over a fixed parameter ordering. Adam state is lazily sized on
/// the first step and serialized into checkpoints.
class Optimizer {
public:
    Optimizer() = default;
    static Optimizer sgd(double lr);
    static Optimizer adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                          double eps = 1e-8);
    static Optimizer from_config(const TrainConfig& cfg);

    void step(const ParamRefs& params);

    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<Tensor> m, v;
};

struct TrainState {
    TrainConfig config;
    CvaeModel model;
    Optimizer opt;
    Rng rng;
    int64_t step = 0;
    double best_test_nll = std::numeric_limits<double>::infinity();
    int evals_since_best = 0;
    int64_t best_step = -1;

    TrainState(TrainConfig tc, CvaeModel m)
        : config(std::move(tc)), model(std::move(m)), rng(config.seed) {}
};

/// Fresh state: seeded RNG, parameters initialized from it, optimizer from
/// the config.
TrainState make_train_state(const TrainConfig& tc, const ModelConfig& mc);

/// One gradient step on the model's objective. Deterministic given
/// (state, batch); throws with a term-level diagnostic if the loss is
/// non-finite.
LossBreakdown train_step(TrainState& state, const LabeledBatch& batch);

/// Mean per-image NLL of the decoder at the posterior mean, full constants
/// included; uses the model's current variance buffer (1 for gaussian).
double evaluate_nll(CvaeModel& model, const Dataset& test, int batch_size = 64);

struct HistoryRow {
    int64_t step = 0;
    double total = 0, recon = 0, kl = 0, sigma_sq = 1, test_nll = 0;

    std::string json_line() const;
};

struct FitResult {
    TrainState state;  // best-NLL parameters restored
    std::vector<HistoryRow> history;
};

/// Minibatch training with test-NLL early stopping. Stops when the test NLL
/// has not improved for `patience` consecutive evaluations or after
/// max_epochs; returns the best-NLL parameters, not the last.
FitResult fit(const TrainConfig& tc, const ModelConfig& mc, const Dataset& train,
              const Dataset& test, const AugmentFlags& aug = {},
              const std::function<void(const HistoryRow&)>& on_eval = {});

// ---- checkpoints ----

/// Self-describing binary container: JSON header (config echo, scalar state,
/// RNG stream, tensor directory) followed by raw float64 payloads.
void save_checkpoint(const std::string& path, TrainState& state,
                     const nlohmann::json& config_echo);

struct LoadedCheckpoint {
    TrainState state;
    nlohmann::json config_echo;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cvae
