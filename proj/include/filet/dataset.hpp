#pragma once

#include "filet/config.hpp"
#include "filet/dense.hpp"
#include "filet/micrograd.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace filet {

// Fixed synthetic dataset, regenerated deterministically from (config, seed).
// Columns are samples. For blobs the targets matrix holds one-hot columns;
// for linear it holds the regression targets.
struct Dataset {
    Matrix train_x;
    std::vector<int> train_labels;
    Matrix train_targets;
    Matrix eval_x;
    std::vector<int> eval_labels;
    Matrix eval_targets;
    bool classification = true;
};

Dataset make_dataset(const RunConfig& cfg);

// Fresh model with seeded N(0, 1/fan_in) weights, activations between
// linear layers, and taps set per cfg.tapped ("all" or a comma list of
// linear-layer ids).
Model make_model(const RunConfig& cfg);

Batch full_train_batch(const Dataset& data);
Batch full_eval_batch(const Dataset& data);

// Minibatch of `count` training columns drawn with replacement.
Batch sample_batch(const Dataset& data, Index count, std::mt19937_64& rng);

}  // namespace filet
