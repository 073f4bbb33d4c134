#include "cvae/config_json.hpp"

#include <fstream>
#include <set>

namespace cvae {

using nlohmann::json;

void RunConfig::validate() const {
    train.validate();
    model.validate();
    data.validate();
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
    if (data.source == DataSource::synthetic &&
        model.attr_dim != static_cast<int>(synthetic_attr_names().size()))
        throw std::invalid_argument("config: synthetic data fixes attr_dim to " +
                                    std::to_string(synthetic_attr_names().size()));
    if (data.source == DataSource::folder && (data.root.empty() || data.attr_table.empty()))
        throw std::invalid_argument("config: folder source needs data_root and attr_table");
}

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "setting", "seed", "batch_size", "learning_rate", "max_epochs",
        "patience", "eval_every", "optimizer", "grad_clip", "threads",
        "latent_dim", "attr_dim", "channels", "image_height", "image_width",
        "enc_widths", "p_widths", "flow_depth", "flow_hidden", "kernel",
        "data_source", "synthetic_n", "synthetic_seed", "data_root",
        "attr_table", "train_fraction", "split_seed", "hflip", "rotate_deg",
        "out_dir"};
    return keys;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: bad value for key '" + key + "'");
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j, bool dataset_only) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known_keys().count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "'");

    RunConfig cfg;
    cfg.model.setting = setting_from_name(get_or<std::string>(j, "setting", "sigma_nf"));
    cfg.train.seed = get_or<uint64_t>(j, "seed", 0);
    cfg.train.batch_size = get_or<int>(j, "batch_size", 64);
    cfg.train.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
    cfg.train.max_epochs = get_or<int>(j, "max_epochs", 20);
    cfg.train.patience = get_or<int>(j, "patience", 3);
    cfg.train.eval_every = get_or<int>(j, "eval_every", 0);
    cfg.train.optimizer =
        optimizer_from_name(get_or<std::string>(j, "optimizer", "adam"));
    cfg.train.grad_clip = get_or<double>(j, "grad_clip", 10.0);
    cfg.threads = get_or<int>(j, "threads", 1);

    cfg.model.latent_dim = get_or<int>(j, "latent_dim", 128);
    cfg.model.attr_dim = get_or<int>(j, "attr_dim", 40);
    cfg.model.channels = get_or<int>(j, "channels", 3);
    cfg.model.height = get_or<int>(j, "image_height", 86);
    cfg.model.width = get_or<int>(j, "image_width", 86);
    cfg.model.enc_widths =
        get_or<std::vector<int>>(j, "enc_widths", {32, 64, 128, 256});
    cfg.model.p_widths = get_or<std::vector<int>>(j, "p_widths", {16, 32});
    cfg.model.flow_depth = get_or<int>(j, "flow_depth", 4);
    cfg.model.flow_hidden = get_or<int>(j, "flow_hidden", 64);
    cfg.model.kernel = get_or<int>(j, "kernel", 4);

    std::string source = get_or<std::string>(j, "data_source", "synthetic");
    if (source == "synthetic") cfg.data.source = DataSource::synthetic;
    else if (source == "folder") cfg.data.source = DataSource::folder;
    else throw std::invalid_argument("config: data_source must be synthetic|folder");

    cfg.data.synthetic_n = get_or<int>(j, "synthetic_n", 1024);
    cfg.data.synthetic_seed = get_or<uint64_t>(j, "synthetic_seed", 0);
    cfg.data.root = get_or<std::string>(j, "data_root", "");
    cfg.data.attr_table = get_or<std::string>(j, "attr_table", "");
    cfg.data.train_fraction = get_or<double>(j, "train_fraction", 0.8);
    cfg.data.split_seed = get_or<uint64_t>(j, "split_seed", 0);
    cfg.data.augment.hflip = get_or<bool>(j, "hflip", false);
    cfg.data.augment.rotate_deg = get_or<double>(j, "rotate_deg", 0.0);
    cfg.data.channels = cfg.model.channels;
    cfg.data.height = cfg.model.height;
    cfg.data.width = cfg.model.width;

    if (cfg.data.source == DataSource::synthetic) {
        cfg.data.attr_names = synthetic_attr_names();
        cfg.model.attr_dim = static_cast<int>(cfg.data.attr_names.size());
        if (j.contains("attr_dim") && j["attr_dim"].get<int>() != cfg.model.attr_dim)
            throw std::invalid_argument("config: synthetic data fixes attr_dim to " +
                                        std::to_string(cfg.model.attr_dim));
    }

    cfg.out_dir = get_or<std::string>(j, "out_dir", "out");
    if (dataset_only) cfg.data.validate();
    else cfg.validate();
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["setting"] = setting_name(cfg.model.setting);
    j["seed"] = cfg.train.seed;
    j["batch_size"] = cfg.train.batch_size;
    j["learning_rate"] = cfg.train.learning_rate;
    j["max_epochs"] = cfg.train.max_epochs;
    j["patience"] = cfg.train.patience;
    j["eval_every"] = cfg.train.eval_every;
    j["optimizer"] = optimizer_name(cfg.train.optimizer);
    j["grad_clip"] = cfg.train.grad_clip;
    j["threads"] = cfg.threads;
    j["latent_dim"] = cfg.model.latent_dim;
    j["attr_dim"] = cfg.model.attr_dim;
    j["channels"] = cfg.model.channels;
    j["image_height"] = cfg.model.height;
    j["image_width"] = cfg.model.width;
    j["enc_widths"] = cfg.model.enc_widths;
    j["p_widths"] = cfg.model.p_widths;
    j["flow_depth"] = cfg.model.flow_depth;
    j["flow_hidden"] = cfg.model.flow_hidden;
    j["kernel"] = cfg.model.kernel;
    j["data_source"] = cfg.data.source == DataSource::synthetic ? "synthetic" : "folder";
    j["synthetic_n"] = cfg.data.synthetic_n;
    j["synthetic_seed"] = cfg.data.synthetic_seed;
    j["data_root"] = cfg.data.root;
    j["attr_table"] = cfg.data.attr_table;
    j["train_fraction"] = cfg.data.train_fraction;
    j["split_seed"] = cfg.data.split_seed;
    j["hflip"] = cfg.data.augment.hflip;
    j["rotate_deg"] = cfg.data.augment.rotate_deg;
    j["out_dir"] = cfg.out_dir;
    return j;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config '" + path + "'");
    out << run_config_to_json(cfg).dump(2) << "\n";
}

std::pair<Dataset, Dataset> build_datasets(const RunConfig& cfg) {
    Dataset all = cfg.data.source == DataSource::synthetic
                      ? Dataset::make_synthetic(cfg.data.synthetic_n, cfg.data)
                      : Dataset::load_folder(cfg.data.root, cfg.data.attr_table, cfg.data);
    if (all.attr_dim() != cfg.model.attr_dim)
        throw std::runtime_error("dataset has " + std::to_string(all.attr_dim()) +
                                 " attributes but the model expects " +
                                 std::to_string(cfg.model.attr_dim));
    return split(all, cfg.data.train_fraction, cfg.data.split_seed);
}

}  // namespace cvae
