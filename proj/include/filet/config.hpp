#pragma once

#include "filet/dense.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace filet {

// Flat `key = value` text with `#` comments and dotted section prefixes.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config(const std::string& path);

struct RunConfig {
    std::uint64_t seed = 1;

    // model
    std::vector<Index> hidden = {16};
    std::string activation = "relu";  // relu | tanh | none
    std::string loss = "ce";          // ce | mse
    std::string tapped = "all";       // all | comma list of layer indices

    // dataset
    std::string dataset_kind = "blobs";  // blobs | linear
    Index features = 8;
    Index classes = 4;  // output dimension for linear
    Index train_samples = 1024;
    Index eval_samples = 512;
    double noise = 1.0;
    double separation = 1.0;

    // pretraining of the base weights on the task
    Index pretrain_steps = 800;
    double pretrain_lr = 0.5;

    // fisher statistics pass
    Index minibatch_count = 10;
    Index minibatch_size = 32;
    bool alg1_literal = false;

    // adapter construction
    Index rank = 4;
    double alpha = 4.0;
    std::string criterion = "min";    // min | max | random
    std::string scaling = "fisher";   // fisher | svd-sigma
    std::string basis = "surrogate";  // surrogate | exact-svd
    std::uint64_t rng_seed = 0;       // 0 → derived from seed
    bool normalize_sigma = true;
    bool raw_alpha = false;

    // adapter training
    Index train_steps = 400;
    double train_lr = 0.3;
    std::string trainable = "adapters";  // adapters | full
    Index train_batch = 16;

    // probe
    Index probe_layer = 0;
    Index probe_directions = 16;
    std::vector<double> gammas = {1e-1, 1e-2, 1e-3};

    // preliminary ranking study
    Index preliminary_groups = 8;
    Index preliminary_rank = 1;
    Index preliminary_layer = 0;

    // ablation grid
    Index ablate_seeds = 10;

    std::string group_aggregate = "sum";  // sum | mean
};

/// Applies map entries over the defaults; unknown keys and malformed values
/// are rejected with the offending key named.
RunConfig make_run_config(const ConfigMap& map);

/// The resolved configuration as a flat map (for manifests).
ConfigMap echo_config(const RunConfig& config);

}  // namespace filet
