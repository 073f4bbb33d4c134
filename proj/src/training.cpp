#include "cvae/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cvae/config_json.hpp"

namespace cvae {

using nlohmann::json;

std::string optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_name(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam" || name == "adaptive-moment") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd|adam)");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (learning_rate < 0) throw std::invalid_argument("train config: learning_rate must be >= 0");
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("train config: eval_every must be >= 0");
    if (grad_clip < 0) throw std::invalid_argument("train config: grad_clip must be >= 0");
}

Optimizer Optimizer::sgd(double lr_) {
    Optimizer o;
    o.kind = OptimizerKind::sgd;
    o.lr = lr_;
    return o;
}

Optimizer Optimizer::adam(double lr_, double b1, double b2, double eps_) {
    Optimizer o;
    o.kind = OptimizerKind::adam;
    o.lr = lr_;
    o.beta1 = b1;
    o.beta2 = b2;
    o.eps = eps_;
    return o;
}

Optimizer Optimizer::from_config(const TrainConfig& cfg) {
    return cfg.optimizer == OptimizerKind::sgd ? sgd(cfg.learning_rate)
                                               : adam(cfg.learning_rate);
}

void Optimizer::step(const ParamRefs& params) {
    if (kind == OptimizerKind::sgd) {
        for (Param* p : params)
            for (int64_t i = 0; i < p->value.size(); ++i)
                p->value[i] -= lr * p->grad[i];
        ++t;
        return;
    }
    if (m.empty()) {
        for (const Param* p : params) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
    }
    if (m.size() != params.size())
        throw std::logic_error("Optimizer::step: parameter set changed");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t k = 0; k < params.size(); ++k) {
        Param* p = params[k];
        Tensor& mk = m[k];
        Tensor& vk = v[k];
        for (int64_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad[i];
            mk[i] = beta1 * mk[i] + (1 - beta1) * g;
            vk[i] = beta2 * vk[i] + (1 - beta2) * g * g;
            double mhat = mk[i] / bc1, vhat = vk[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

TrainState make_train_state(const TrainConfig& tc, const ModelConfig& mc) {
    tc.validate();
    TrainState st(tc, CvaeModel(mc));
    st.model.init_params(st.rng);
    st.opt = Optimizer::from_config(tc);
    return st;
}

LossBreakdown train_step(TrainState& state, const LabeledBatch& batch) {
    Tensor noise = state.rng.normal_tensor({batch.size(), state.model.config().latent_dim});
    Tape tape;
    LossNodes nodes = total_loss(tape, state.model, batch, noise);
    LossBreakdown b = nodes.values();
    if (!std::isfinite(b.total)) {
        const char* term = !std::isfinite(b.recon) ? "reconstruction"
                           : !std::isfinite(b.kl)  ? "kl"
                                                   : "total";
        throw std::runtime_error("training aborted at step " +
                                 std::to_string(state.step + 1) + ": " + term +
                                 " loss is non-finite");
    }
    ParamRefs params = state.model.params();
    zero_grads(params);
    tape.backward(nodes.total);
    if (state.config.grad_clip > 0) {
        double norm = grad_global_norm(params);
        if (norm > state.config.grad_clip)
            scale_grads(params, state.config.grad_clip / norm);
    }
    state.opt.step(params);
    ++state.step;
    state.model.sigma_sq = b.sigma_sq_batch;
    return b;
}

double evaluate_nll(CvaeModel& model, const Dataset& test, int batch_size) {
    if (test.size() == 0) throw std::invalid_argument("evaluate_nll: empty test set");
    const ModelConfig& cfg = model.config();
    double p = cfg.pixel_count();
    double sigma_sq = model.sigma_sq;
    double per_image_const = 0.5 * p * (std::log(sigma_sq) + kLogTwoPi);
    double total = 0;
    for (int b = 0; b < test.size(); b += batch_size) {
        int e = std::min(test.size(), b + batch_size);
        LabeledBatch batch = test.batch_range(b, e);
        auto [mu, ls] = model.encode_values(batch.images, batch.attrs);
        Tensor x_hat = model.decode_values(mu, batch.attrs);
        int n = e - b;
        int64_t img = static_cast<int64_t>(cfg.pixel_count());
        for (int i = 0; i < n; ++i) {
            double ss = 0;
            const double* xr = batch.images.data() + i * img;
            const double* hr = x_hat.data() + i * img;
            for (int64_t k = 0; k < img; ++k) {
                double d = xr[k] - hr[k];
                ss += d * d;
            }
            total += ss / (2.0 * sigma_sq) + per_image_const;
        }
    }
    return total / test.size();
}

std::string HistoryRow::json_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "{\"step\":%lld,\"total\":%.17g,\"recon\":%.17g,\"kl\":%.17g,"
                  "\"sigma_sq\":%.17g,\"test_nll\":%.17g}",
                  static_cast<long long>(step), total, recon, kl, sigma_sq, test_nll);
    return buf;
}

FitResult fit(const TrainConfig& tc, const ModelConfig& mc, const Dataset& train,
              const Dataset& test, const AugmentFlags& aug,
              const std::function<void(const HistoryRow&)>& on_eval) {
    TrainState st = make_train_state(tc, mc);
    int n = train.size();
    if (n == 0) throw std::invalid_argument("fit: empty training set");
    int steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
    int eval_every = tc.eval_every > 0 ? tc.eval_every : steps_per_epoch;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<Tensor> best_params;
    double best_sigma_sq = 1.0;
    std::vector<HistoryRow> history;
    bool use_aug = aug.hflip || aug.rotate_deg > 0;
    bool stop = false;

    for (int epoch = 0; epoch < tc.max_epochs && !stop; ++epoch) {
        st.rng.shuffle(order);
        for (int b = 0; b < n && !stop; b += tc.batch_size) {
            int e = std::min(n, b + tc.batch_size);
            std::vector<int> idx(order.begin() + b, order.begin() + e);
            LabeledBatch batch = train.batch(idx);
            if (use_aug) batch = augment(batch, aug, st.rng);
            LossBreakdown lb = train_step(st, batch);

            if (st.step % eval_every == 0) {
                double nll = evaluate_nll(st.model, test, tc.batch_size);
                HistoryRow row{st.step, lb.total, lb.recon, lb.kl,
                               lb.sigma_sq_batch, nll};
                history.push_back(row);
                if (on_eval) on_eval(row);
                if (nll < st.best_test_nll) {
                    st.best_test_nll = nll;
                    st.evals_since_best = 0;
                    st.best_step = st.step;
                    best_params.clear();
                    for (Param* p : st.model.params()) best_params.push_back(p->value);
                    best_sigma_sq = st.model.sigma_sq;
                } else if (++st.evals_since_best >= tc.patience) {
                    stop = true;
                }
            }
        }
    }

    if (!best_params.empty()) {
        ParamRefs ps = st.model.params();
        for (size_t i = 0; i < ps.size(); ++i) ps[i]->value = best_params[i];
        st.model.sigma_sq = best_sigma_sq;
    }
    return {std::move(st), std::move(history)};
}

// ------------------------------------------------------------- checkpoints

namespace {
constexpr char kMagic[8] = {'C', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void append_tensor(json& dir, std::vector<const Tensor*>& payload,
                   const std::string& name, const Tensor& t, int64_t& offset) {
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset},
                   {"count", t.size()}});
    payload.push_back(&t);
    offset += t.size();
}
}  // namespace

void save_checkpoint(const std::string& path, TrainState& state,
                     const json& config_echo) {
    json header;
    header["format"] = "cvae-checkpoint";
    header["version"] = kVersion;
    header["config"] = config_echo;
    header["step"] = state.step;
    header["best_step"] = state.best_step;
    header["best_test_nll"] = state.best_test_nll;
    header["evals_since_best"] = state.evals_since_best;
    header["sigma_sq"] = state.model.sigma_sq;
    header["rng"] = state.rng.serialize();
    header["optimizer"] = {{"kind", optimizer_name(state.opt.kind)},
                           {"lr", state.opt.lr},
                           {"beta1", state.opt.beta1},
                           {"beta2", state.opt.beta2},
                           {"eps", state.opt.eps},
                           {"t", state.opt.t}};

    json dir = json::array();
    std::vector<const Tensor*> payload;
    int64_t offset = 0;
    ParamRefs params = state.model.params();
    for (const Param* p : params)
        append_tensor(dir, payload, p->name, p->value, offset);
    for (size_t i = 0; i < state.opt.m.size(); ++i) {
        append_tensor(dir, payload, "opt.m." + params[i]->name, state.opt.m[i], offset);
        append_tensor(dir, payload, "opt.v." + params[i]->name, state.opt.v[i], offset);
    }
    header["tensors"] = dir;

    std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof kMagic);
    uint32_t ver = kVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof ver);
    uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : payload)
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("'" + path + "' is not a checkpoint file");
    uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    if (ver != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(ver));
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw std::runtime_error("truncated checkpoint header in '" + path + "'");
    json header = json::parse(hs);

    RunConfig cfg = run_config_from_json(header.at("config"));
    TrainState state(cfg.train, CvaeModel(cfg.model));
    state.step = header.at("step").get<int64_t>();
    state.best_step = header.at("best_step").get<int64_t>();
    state.best_test_nll = header.at("best_test_nll").get<double>();
    state.evals_since_best = header.at("evals_since_best").get<int>();
    state.model.sigma_sq = header.at("sigma_sq").get<double>();
    state.rng = Rng::deserialize(header.at("rng").get<std::string>());

    const json& oj = header.at("optimizer");
    state.opt.kind = optimizer_from_name(oj.at("kind").get<std::string>());
    state.opt.lr = oj.at("lr").get<double>();
    state.opt.beta1 = oj.at("beta1").get<double>();
    state.opt.beta2 = oj.at("beta2").get<double>();
    state.opt.eps = oj.at("eps").get<double>();
    state.opt.t = oj.at("t").get<int64_t>();

    // Read the payload into a name -> tensor map.
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const json& e : header.at("tensors")) {
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint payload in '" + path + "'");
        tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    auto find = [&tensors](const std::string& name) -> Tensor* {
        for (auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    };

    ParamRefs params = state.model.params();
    for (Param* p : params) {
        Tensor* t = find(p->name);
        if (!t) throw std::runtime_error("checkpoint missing tensor '" + p->name + "'");
        if (t->shape() != p->value.shape())
            throw std::runtime_error("checkpoint tensor '" + p->name + "' shape mismatch");
        p->value = std::move(*t);
    }
    if (find("opt.m." + params.front()->name)) {
        for (Param* p : params) {
            Tensor* mt = find("opt.m." + p->name);
            Tensor* vt = find("opt.v." + p->name);
            if (!mt || !vt)
                throw std::runtime_error("checkpoint optimizer state incomplete");
            state.opt.m.push_back(std::move(*mt));
            state.opt.v.push_back(std::move(*vt));
        }
    }
    return {std::move(state), header.at("config")};
}

}  // namespace cvae
