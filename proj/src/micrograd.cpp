#include "filet/micrograd.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace filet {

namespace {

std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix apply_activation(Activation act, const Matrix& x) {
    switch (act) {
        case Activation::relu:
            return x.cwiseMax(0.0);
        case Activation::tanh:
            return x.array().tanh().matrix();
        case Activation::none:
            return x;
    }
    throw std::invalid_argument("unknown activation marker");
}

Matrix activation_derivative(Activation act, const Matrix& x) {
    switch (act) {
        case Activation::relu:
            return (x.array() > 0.0).cast<double>().matrix();
        case Activation::tanh:
            return (1.0 - x.array().tanh().square()).matrix();
        case Activation::none:
            return Matrix::Ones(x.rows(), x.cols());
    }
    throw std::invalid_argument("unknown activation marker");
}

Matrix softmax_columns(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Index j = 0; j < logits.cols(); ++j) {
        const double mx = logits.col(j).maxCoeff();
        Eigen::ArrayXd e = (logits.col(j).array() - mx).exp();
        p.col(j) = (e / e.sum()).matrix();
    }
    return p;
}

// Loss gradient w.r.t. the network output, mean reduction baked in.
Matrix loss_gradient(const Model& model, const Batch& batch, const Matrix& output) {
    const double l = static_cast<double>(output.cols());
    if (model.loss_kind == LossKind::mean_squared_error) {
        return (output - batch.target_matrix) / l;
    }
    Matrix g = softmax_columns(output);
    for (Index j = 0; j < output.cols(); ++j) {
        g(batch.class_targets[static_cast<size_t>(j)], j) -= 1.0;
    }
    return g / l;
}

void validate_batch(const Model& model, const Batch& batch, const Matrix& output) {
    const Index l = batch.inputs.cols();
    if (model.loss_kind == LossKind::mean_squared_error) {
        if (batch.target_matrix.rows() != output.rows() || batch.target_matrix.cols() != l) {
            throw std::invalid_argument("forward: MSE targets are " + dims(batch.target_matrix) +
                                        ", expected " + dims(output));
        }
    } else {
        if (static_cast<Index>(batch.class_targets.size()) != l) {
            throw std::invalid_argument("forward: " +
                                        std::to_string(batch.class_targets.size()) +
                                        " class targets for " + std::to_string(l) + " samples");
        }
        for (int t : batch.class_targets) {
            if (t < 0 || t >= output.rows()) {
                throw std::invalid_argument("forward: class target " + std::to_string(t) +
                                            " out of range for " + std::to_string(output.rows()) +
                                            " outputs");
            }
        }
    }
}

}  // namespace

Index Model::linear_count() const {
    Index n = 0;
    for (const auto& item : items) {
        if (std::holds_alternative<LinearLayer>(item)) ++n;
    }
    return n;
}

LinearLayer& Model::linear(Index k) {
    Index seen = 0;
    for (auto& item : items) {
        if (auto* layer = std::get_if<LinearLayer>(&item)) {
            if (seen == k) return *layer;
            ++seen;
        }
    }
    throw std::invalid_argument("model has no linear layer " + std::to_string(k));
}

const LinearLayer& Model::linear(Index k) const {
    return const_cast<Model*>(this)->linear(k);
}

std::uint64_t weight_digest(const Model& model) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& item : model.items) {
        if (const auto* layer = std::get_if<LinearLayer>(&item)) {
            mix(layer->weight.data(), sizeof(double) * static_cast<size_t>(layer->weight.size()));
        }
    }
    return h;
}

ForwardCache forward(const Model& model, const Batch& batch) {
    if (batch.inputs.cols() < 1) {
        throw std::invalid_argument("forward: empty batch");
    }
    require_finite(batch.inputs, "forward inputs");

    ForwardCache cache;
    cache.item_inputs.reserve(model.items.size());
    Matrix cur = batch.inputs;
    for (size_t i = 0; i < model.items.size(); ++i) {
        cache.item_inputs.push_back(cur);
        if (const auto* layer = std::get_if<LinearLayer>(&model.items[i])) {
            if (layer->weight.cols() != cur.rows()) {
                throw std::invalid_argument("forward: item " + std::to_string(i) + " weight is " +
                                            dims(layer->weight) + " but activations are " +
                                            dims(cur));
            }
            cur = layer->weight * cur;
        } else {
            cur = apply_activation(std::get<Activation>(model.items[i]), cur);
        }
        if (!cur.allFinite()) {
            throw std::runtime_error("forward: non-finite activations after item " +
                                     std::to_string(i));
        }
    }

    validate_batch(model, batch, cur);
    const Index l = cur.cols();
    double loss = 0.0;
    if (model.loss_kind == LossKind::mean_squared_error) {
        loss = 0.5 * (cur - batch.target_matrix).squaredNorm() / static_cast<double>(l);
    } else {
        for (Index j = 0; j < l; ++j) {
            const double mx = cur.col(j).maxCoeff();
            const double logsum = mx + std::log((cur.col(j).array() - mx).exp().sum());
            loss += logsum - cur(batch.class_targets[static_cast<size_t>(j)], j);
        }
        loss /= static_cast<double>(l);
    }
    if (!std::isfinite(loss)) {
        throw std::runtime_error("forward: non-finite loss");
    }
    cache.output = cur;
    cache.loss_grad = loss_gradient(model, batch, cur);
    cache.loss = loss;
    cache.digest = weight_digest(model);
    return cache;
}

BackwardResult backward(const Model& model, const ForwardCache& cache) {
    if (cache.item_inputs.size() != model.items.size()) {
        throw std::invalid_argument("backward: cache records " +
                                    std::to_string(cache.item_inputs.size()) +
                                    " items, model has " + std::to_string(model.items.size()));
    }
    if (cache.digest != weight_digest(model)) {
        throw std::invalid_argument("backward: cache is stale, weights changed since forward");
    }

    BackwardResult out;
    out.grads.resize(static_cast<size_t>(model.linear_count()));

    Matrix g = cache.loss_grad;
    Index layer_id = model.linear_count();
    std::vector<LayerTap> taps_reversed;
    for (size_t i = model.items.size(); i-- > 0;) {
        const Matrix& x = cache.item_inputs[i];
        if (const auto* layer = std::get_if<LinearLayer>(&model.items[i])) {
            --layer_id;
            out.grads[static_cast<size_t>(layer_id)] = g * x.transpose();
            if (layer->tapped) {
                taps_reversed.push_back(LayerTap{layer_id, x, g});
            }
            g = layer->weight.transpose() * g;
        } else {
            g = g.cwiseProduct(activation_derivative(std::get<Activation>(model.items[i]), x));
        }
    }
    out.taps.assign(taps_reversed.rbegin(), taps_reversed.rend());
    for (const Matrix& grad : out.grads) {
        require_finite(grad, "backward gradient");
    }
    return out;
}

std::vector<Matrix> finite_diff_grad(const Model& model, const Batch& batch, double eps) {
    if (!(eps > 0.0)) {
        throw std::invalid_argument("finite_diff_grad: eps must be positive");
    }
    Model probe = model;
    std::vector<Matrix> grads;
    const Index layers = model.linear_count();
    grads.reserve(static_cast<size_t>(layers));
    for (Index k = 0; k < layers; ++k) {
        LinearLayer& layer = probe.linear(k);
        Matrix g(layer.weight.rows(), layer.weight.cols());
        for (Index i = 0; i < layer.weight.rows(); ++i) {
            for (Index j = 0; j < layer.weight.cols(); ++j) {
                const double saved = layer.weight(i, j);
                layer.weight(i, j) = saved + eps;
                const double up = forward(probe, batch).loss;
                layer.weight(i, j) = saved - eps;
                const double down = forward(probe, batch).loss;
                layer.weight(i, j) = saved;
                g(i, j) = (up - down) / (2.0 * eps);
            }
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

double train_step(Model& model, const Batch& batch, const std::vector<bool>& trainable_mask,
                  double lr) {
    if (lr < 0.0) {
        throw std::invalid_argument("train_step: negative learning rate");
    }
    if (static_cast<Index>(trainable_mask.size()) != model.linear_count()) {
        throw std::invalid_argument("train_step: mask covers " +
                                    std::to_string(trainable_mask.size()) + " layers, model has " +
                                    std::to_string(model.linear_count()));
    }
    ForwardCache cache = forward(model, batch);
    BackwardResult back = backward(model, cache);
    Index k = 0;
    for (auto& item : model.items) {
        if (auto* layer = std::get_if<LinearLayer>(&item)) {
            if (trainable_mask[static_cast<size_t>(k)] && lr > 0.0) {
                layer->weight -= lr * back.grads[static_cast<size_t>(k)];
            }
            ++k;
        }
    }
    return cache.loss;
}

}  // namespace filet
