#include "filet/config.hpp"

#include "filet/csv.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace filet {

namespace {

std::string trim(const std::string& s) {
    size_t begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    size_t end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: bad value '" + value + "' for " + key);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) bad_value(key, value);
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, value);
    } catch (const std::out_of_range&) {
        bad_value(key, value);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) bad_value(key, value);
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, value);
    } catch (const std::out_of_range&) {
        bad_value(key, value);
    }
}

Index parse_count(const std::string& key, const std::string& value) {
    return static_cast<Index>(parse_u64(key, value));
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream stream(value);
    while (std::getline(stream, item, ',')) parts.push_back(trim(item));
    return parts;
}

void expect_one_of(const std::string& key, const std::string& value,
                   std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (value == a) return;
    }
    bad_value(key, value);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap map;
    std::istringstream stream(text);
    std::string line;
    int line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
        }
        map[key] = value;
    }
    return map;
}

ConfigMap load_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        throw std::runtime_error("config: cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

RunConfig make_run_config(const ConfigMap& map) {
    RunConfig cfg;
    for (const auto& [key, value] : map) {
        if (key == "seed") {
            cfg.seed = parse_u64(key, value);
        } else if (key == "model.hidden") {
            cfg.hidden.clear();
            if (!value.empty()) {
                for (const std::string& part : split_list(value)) {
                    cfg.hidden.push_back(parse_count(key, part));
                }
            }
        } else if (key == "model.activation") {
            expect_one_of(key, value, {"relu", "tanh", "none"});
            cfg.activation = value;
        } else if (key == "model.loss") {
            expect_one_of(key, value, {"ce", "mse"});
            cfg.loss = value;
        } else if (key == "model.tapped") {
            cfg.tapped = value;
        } else if (key == "dataset.kind") {
            expect_one_of(key, value, {"blobs", "linear"});
            cfg.dataset_kind = value;
        } else if (key == "dataset.features") {
            cfg.features = parse_count(key, value);
        } else if (key == "dataset.classes") {
            cfg.classes = parse_count(key, value);
        } else if (key == "dataset.train") {
            cfg.train_samples = parse_count(key, value);
        } else if (key == "dataset.eval") {
            cfg.eval_samples = parse_count(key, value);
        } else if (key == "dataset.noise") {
            cfg.noise = parse_double(key, value);
        } else if (key == "dataset.separation") {
            cfg.separation = parse_double(key, value);
        } else if (key == "pretrain.steps") {
            cfg.pretrain_steps = parse_count(key, value);
        } else if (key == "pretrain.lr") {
            cfg.pretrain_lr = parse_double(key, value);
        } else if (key == "fisher.minibatch_count") {
            cfg.minibatch_count = parse_count(key, value);
        } else if (key == "fisher.minibatch_size") {
            cfg.minibatch_size = parse_count(key, value);
        } else if (key == "fisher.alg1_literal") {
            cfg.alg1_literal = parse_bool(key, value);
        } else if (key == "init.rank") {
            cfg.rank = parse_count(key, value);
        } else if (key == "init.alpha") {
            cfg.alpha = parse_double(key, value);
        } else if (key == "init.criterion") {
            expect_one_of(key, value, {"min", "max", "random"});
            cfg.criterion = value;
        } else if (key == "init.scaling") {
            expect_one_of(key, value, {"fisher", "svd-sigma"});
            cfg.scaling = value;
        } else if (key == "init.basis") {
            expect_one_of(key, value, {"surrogate", "exact-svd"});
            cfg.basis = value;
        } else if (key == "init.rng_seed") {
            cfg.rng_seed = parse_u64(key, value);
        } else if (key == "init.normalize_sigma") {
            cfg.normalize_sigma = parse_bool(key, value);
        } else if (key == "init.raw_alpha") {
            cfg.raw_alpha = parse_bool(key, value);
        } else if (key == "train.steps") {
            cfg.train_steps = parse_count(key, value);
        } else if (key == "train.lr") {
            cfg.train_lr = parse_double(key, value);
        } else if (key == "train.trainable") {
            expect_one_of(key, value, {"adapters", "full"});
            cfg.trainable = value;
        } else if (key == "train.batch") {
            cfg.train_batch = parse_count(key, value);
        } else if (key == "probe.layer") {
            cfg.probe_layer = parse_count(key, value);
        } else if (key == "probe.directions") {
            cfg.probe_directions = parse_count(key, value);
        } else if (key == "probe.gammas") {
            cfg.gammas.clear();
            for (const std::string& part : split_list(value)) {
                cfg.gammas.push_back(parse_double(key, part));
            }
        } else if (key == "preliminary.groups") {
            cfg.preliminary_groups = parse_count(key, value);
        } else if (key == "preliminary.rank") {
            cfg.preliminary_rank = parse_count(key, value);
        } else if (key == "preliminary.layer") {
            cfg.preliminary_layer = parse_count(key, value);
        } else if (key == "ablate.seeds") {
            cfg.ablate_seeds = parse_count(key, value);
        } else if (key == "group.aggregate") {
            expect_one_of(key, value, {"sum", "mean"});
            cfg.group_aggregate = value;
        } else {
            throw std::invalid_argument("config: unknown key " + key);
        }
    }

    if (cfg.rank < 1) throw std::invalid_argument("config: init.rank must be >= 1");
    if (cfg.minibatch_size < 1) throw std::invalid_argument("config: fisher.minibatch_size must be >= 1");
    if (cfg.minibatch_count < 1) throw std::invalid_argument("config: fisher.minibatch_count must be >= 1");
    if (cfg.features < 1 || cfg.classes < 1) throw std::invalid_argument("config: dataset dims must be >= 1");
    if (cfg.train_samples < 1 || cfg.eval_samples < 1) throw std::invalid_argument("config: dataset sizes must be >= 1");
    if (cfg.train_batch < 1) throw std::invalid_argument("config: train.batch must be >= 1");
    for (Index h : cfg.hidden) {
        if (h < 1) throw std::invalid_argument("config: model.hidden dims must be >= 1");
    }
    if (cfg.noise < 0.0) throw std::invalid_argument("config: dataset.noise must be >= 0");
    if (cfg.gammas.empty()) throw std::invalid_argument("config: probe.gammas must be non-empty");
    for (double g : cfg.gammas) {
        if (!(g > 0.0)) throw std::invalid_argument("config: probe.gammas must be positive");
    }
    if (cfg.preliminary_groups < 1 || cfg.preliminary_rank < 1) {
        throw std::invalid_argument("config: preliminary groups and rank must be >= 1");
    }
    if (cfg.ablate_seeds < 1) throw std::invalid_argument("config: ablate.seeds must be >= 1");
    if (cfg.dataset_kind == "linear" && cfg.loss == "ce") {
        throw std::invalid_argument("config: linear dataset needs model.loss = mse");
    }
    return cfg;
}

ConfigMap echo_config(const RunConfig& cfg) {
    ConfigMap map;
    map["seed"] = std::to_string(cfg.seed);
    {
        std::string joined;
        for (size_t i = 0; i < cfg.hidden.size(); ++i) {
            if (i) joined += ",";
            joined += std::to_string(cfg.hidden[i]);
        }
        map["model.hidden"] = joined;
    }
    map["model.activation"] = cfg.activation;
    map["model.loss"] = cfg.loss;
    map["model.tapped"] = cfg.tapped;
    map["dataset.kind"] = cfg.dataset_kind;
    map["dataset.features"] = std::to_string(cfg.features);
    map["dataset.classes"] = std::to_string(cfg.classes);
    map["dataset.train"] = std::to_string(cfg.train_samples);
    map["dataset.eval"] = std::to_string(cfg.eval_samples);
    map["dataset.noise"] = format_double(cfg.noise);
    map["dataset.separation"] = format_double(cfg.separation);
    map["pretrain.steps"] = std::to_string(cfg.pretrain_steps);
    map["pretrain.lr"] = format_double(cfg.pretrain_lr);
    map["fisher.minibatch_count"] = std::to_string(cfg.minibatch_count);
    map["fisher.minibatch_size"] = std::to_string(cfg.minibatch_size);
    map["fisher.alg1_literal"] = cfg.alg1_literal ? "true" : "false";
    map["init.rank"] = std::to_string(cfg.rank);
    map["init.alpha"] = format_double(cfg.alpha);
    map["init.criterion"] = cfg.criterion;
    map["init.scaling"] = cfg.scaling;
    map["init.basis"] = cfg.basis;
    map["init.rng_seed"] = std::to_string(cfg.rng_seed);
    map["init.normalize_sigma"] = cfg.normalize_sigma ? "true" : "false";
    map["init.raw_alpha"] = cfg.raw_alpha ? "true" : "false";
    map["train.steps"] = std::to_string(cfg.train_steps);
    map["train.lr"] = format_double(cfg.train_lr);
    map["train.trainable"] = cfg.trainable;
    map["train.batch"] = std::to_string(cfg.train_batch);
    map["probe.layer"] = std::to_string(cfg.probe_layer);
    map["probe.directions"] = std::to_string(cfg.probe_directions);
    {
        std::string joined;
        for (size_t i = 0; i < cfg.gammas.size(); ++i) {
            if (i) joined += ",";
            joined += format_double(cfg.gammas[i]);
        }
        map["probe.gammas"] = joined;
    }
    map["preliminary.groups"] = std::to_string(cfg.preliminary_groups);
    map["preliminary.rank"] = std::to_string(cfg.preliminary_rank);
    map["preliminary.layer"] = std::to_string(cfg.preliminary_layer);
    map["ablate.seeds"] = std::to_string(cfg.ablate_seeds);
    map["group.aggregate"] = cfg.group_aggregate;
    return map;
}

}  // namespace filet
