#include "filet/dataset.hpp"

#include "filet/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace filet {

namespace {

Matrix one_hot(const std::vector<int>& labels, Index classes) {
    Matrix targets = Matrix::Zero(classes, static_cast<Index>(labels.size()));
    for (size_t i = 0; i < labels.size(); ++i) {
        targets(labels[i], static_cast<Index>(i)) = 1.0;
    }
    return targets;
}

void fill_blob_split(Matrix& x, std::vector<int>& labels, Matrix& targets,
                     const Matrix& means, Index samples, double noise,
                     Index classes, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    x.resize(means.rows(), samples);
    labels.resize(static_cast<size_t>(samples));
    for (Index i = 0; i < samples; ++i) {
        const int label = static_cast<int>(i % classes);
        labels[static_cast<size_t>(i)] = label;
        for (Index f = 0; f < means.rows(); ++f) {
            x(f, i) = means(f, label) + noise * gauss(rng);
        }
    }
    targets = one_hot(labels, classes);
}

void fill_linear_split(Matrix& x, std::vector<int>& labels, Matrix& targets,
                       const Matrix& w_true, Index samples, double noise,
                       std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Index features = w_true.cols();
    const Index outputs = w_true.rows();
    x.resize(features, samples);
    for (Index i = 0; i < samples; ++i) {
        for (Index f = 0; f < features; ++f) x(f, i) = gauss(rng);
    }
    targets = w_true * x;
    for (Index i = 0; i < samples; ++i) {
        for (Index o = 0; o < outputs; ++o) targets(o, i) += noise * gauss(rng);
    }
    labels.assign(static_cast<size_t>(samples), 0);
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "none") return Activation::none;
    throw std::invalid_argument("unknown activation " + name);
}

std::vector<bool> tap_flags(const std::string& spec, size_t linear_count) {
    std::vector<bool> flags(linear_count, false);
    if (spec == "all") {
        flags.assign(linear_count, true);
        return flags;
    }
    std::istringstream stream(spec);
    std::string item;
    while (std::getline(stream, item, ',')) {
        size_t used = 0;
        unsigned long id = std::stoul(item, &used);
        if (used != item.size() || id >= linear_count) {
            throw std::invalid_argument("model.tapped: bad layer id '" + item + "'");
        }
        flags[id] = true;
    }
    return flags;
}

}  // namespace

Dataset make_dataset(const RunConfig& cfg) {
    Dataset data;
    std::mt19937_64 rng(mix_seed(cfg.seed, kTagDataset));
    std::normal_distribution<double> gauss(0.0, 1.0);

    if (cfg.dataset_kind == "blobs") {
        data.classification = true;
        Matrix means(cfg.features, cfg.classes);
        for (Index c = 0; c < cfg.classes; ++c) {
            for (Index f = 0; f < cfg.features; ++f) {
                means(f, c) = cfg.separation * gauss(rng);
            }
        }
        fill_blob_split(data.train_x, data.train_labels, data.train_targets,
                        means, cfg.train_samples, cfg.noise, cfg.classes, rng);
        fill_blob_split(data.eval_x, data.eval_labels, data.eval_targets,
                        means, cfg.eval_samples, cfg.noise, cfg.classes, rng);
    } else if (cfg.dataset_kind == "linear") {
        data.classification = false;
        Matrix w_true(cfg.classes, cfg.features);
        for (Index o = 0; o < cfg.classes; ++o) {
            for (Index f = 0; f < cfg.features; ++f) w_true(o, f) = gauss(rng);
        }
        fill_linear_split(data.train_x, data.train_labels, data.train_targets,
                          w_true, cfg.train_samples, cfg.noise, rng);
        fill_linear_split(data.eval_x, data.eval_labels, data.eval_targets,
                          w_true, cfg.eval_samples, cfg.noise, rng);
    } else {
        throw std::invalid_argument("unknown dataset kind " + cfg.dataset_kind);
    }
    return data;
}

Model make_model(const RunConfig& cfg) {
    std::vector<Index> dims;
    dims.push_back(cfg.features);
    for (Index h : cfg.hidden) dims.push_back(h);
    dims.push_back(cfg.classes);

    const size_t linear_count = dims.size() - 1;
    const std::vector<bool> taps = tap_flags(cfg.tapped, linear_count);
    const Activation act = activation_from_name(cfg.activation);

    std::mt19937_64 rng(mix_seed(cfg.seed, kTagModel));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Model model;
    model.loss_kind = (cfg.loss == "ce") ? LossKind::softmax_cross_entropy
                                         : LossKind::mean_squared_error;
    for (size_t k = 0; k < linear_count; ++k) {
        const Index fan_in = dims[k];
        const Index fan_out = dims[k + 1];
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (Index i = 0; i < fan_out; ++i) {
            for (Index j = 0; j < fan_in; ++j) w(i, j) = std_dev * gauss(rng);
        }
        model.items.emplace_back(LinearLayer{std::move(w), taps[k]});
        if (k + 1 < linear_count && act != Activation::none) {
            model.items.emplace_back(act);
        }
    }
    return model;
}

Batch full_train_batch(const Dataset& data) {
    return Batch{data.train_x, data.train_labels, data.train_targets};
}

Batch full_eval_batch(const Dataset& data) {
    return Batch{data.eval_x, data.eval_labels, data.eval_targets};
}

Batch sample_batch(const Dataset& data, Index count, std::mt19937_64& rng) {
    if (count < 1) throw std::invalid_argument("sample_batch: count must be >= 1");
    const Index pool = data.train_x.cols();
    Batch batch;
    batch.inputs.resize(data.train_x.rows(), count);
    batch.target_matrix.resize(data.train_targets.rows(), count);
    batch.class_targets.resize(static_cast<size_t>(count));
    for (Index i = 0; i < count; ++i) {
        const Index pick = static_cast<Index>(bounded_draw(rng, static_cast<std::uint64_t>(pool)));
        batch.inputs.col(i) = data.train_x.col(pick);
        batch.target_matrix.col(i) = data.train_targets.col(pick);
        batch.class_targets[static_cast<size_t>(i)] = data.train_labels[static_cast<size_t>(pick)];
    }
    return batch;
}

}  // namespace filet
