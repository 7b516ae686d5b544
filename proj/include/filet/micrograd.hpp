#pragma once

#include "filet/dense.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace filet {

enum class Activation { relu, tanh, none };
enum class LossKind { softmax_cross_entropy, mean_squared_error };

struct LinearLayer {
    Matrix weight;  // m x n
    bool tapped = false;
};

// A model is an ordered chain of linear layers and pointwise activations.
using ModelItem = std::variant<LinearLayer, Activation>;

struct Model {
    std::vector<ModelItem> items;
    LossKind loss_kind = LossKind::mean_squared_error;

    Index linear_count() const;
    LinearLayer& linear(Index k);
    const LinearLayer& linear(Index k) const;
};

struct Batch {
    Matrix inputs;                    // n x l, columns are samples
    std::vector<int> class_targets;   // length l, softmax-CE only
    Matrix target_matrix;             // m x l, MSE only
};

struct LayerTap {
    Index layer_id;  // position among the linear layers
    Matrix X;        // n x l input activations
    Matrix G;        // m x l gradient w.r.t. the layer output Y = WX
};

struct ForwardCache {
    std::vector<Matrix> item_inputs;  // input seen by every item, in order
    Matrix output;                    // final network output, m x l
    Matrix loss_grad;                 // dLoss/dOutput, mean reduction baked in
    double loss = 0.0;
    std::uint64_t digest = 0;         // weight digest at forward time
};

struct BackwardResult {
    std::vector<Matrix> grads;   // one per linear layer, weight-shaped
    std::vector<LayerTap> taps;  // tapped layers only, model order
};

/// FNV-1a over all weight bytes in layer order; used to reject stale caches.
std::uint64_t weight_digest(const Model& model);

/// Mean loss over the batch columns plus everything backward needs.
ForwardCache forward(const Model& model, const Batch& batch);

/// Reverse-mode gradients. The cache must come from a forward on the same
/// weights; a mutated model is rejected.
BackwardResult backward(const Model& model, const ForwardCache& cache);

/// Central-difference gradient per scalar weight, forward passes only.
std::vector<Matrix> finite_diff_grad(const Model& model, const Batch& batch, double eps = 1e-5);

/// One SGD step on the layers flagged trainable. Returns the pre-step loss.
double train_step(Model& model, const Batch& batch, const std::vector<bool>& trainable_mask,
                  double lr);

}  // namespace filet
