#include "filet/harness.hpp"

#include "filet/checkpoint.hpp"
#include "filet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace filet {

namespace {

SelectionStrategy strategy_from_config(const RunConfig& cfg, Index layer_id) {
    SelectionStrategy s;
    if (cfg.criterion == "min") {
        s.criterion = SelectionCriterion::min_energy;
    } else if (cfg.criterion == "max") {
        s.criterion = SelectionCriterion::max_energy;
    } else {
        s.criterion = SelectionCriterion::random;
    }
    s.scaling = cfg.scaling == "fisher" ? ScalingMode::fisher : ScalingMode::svd_sigma;
    s.basis = cfg.basis == "surrogate" ? BasisKind::surrogate : BasisKind::exact_svd;
    s.rng_seed = cfg.rng_seed != 0
                     ? cfg.rng_seed
                     : mix_seed(mix_seed(cfg.seed, kTagSelect),
                                static_cast<std::uint64_t>(layer_id) + 1);
    return s;
}

}  // namespace

Workspace build_workspace(const RunConfig& cfg) {
    Workspace ws;
    ws.cfg = cfg;
    ws.data = make_dataset(cfg);
    ws.model = make_model(cfg);

    const Batch full = full_train_batch(ws.data);
    const std::vector<bool> mask(static_cast<size_t>(ws.model.linear_count()), true);
    for (Index step = 0; step < cfg.pretrain_steps; ++step) {
        train_step(ws.model, full, mask, cfg.pretrain_lr);
    }
    const double loss = forward(ws.model, full).loss;
    if (!std::isfinite(loss) || loss > kDivergenceCeiling) {
        throw std::runtime_error("pretraining diverged: loss " + format_double(loss));
    }
    return ws;
}

std::vector<LayerStats> collect_stats(const Workspace& ws) {
    std::vector<LayerStats> stats;
    for (Index k = 0; k < ws.model.linear_count(); ++k) {
        const LinearLayer& layer = ws.model.linear(k);
        if (!layer.tapped) continue;
        LayerStats ls;
        ls.layer_id = k;
        ls.running = make_factors(k, layer.weight.cols(), layer.weight.rows(),
                                  ws.cfg.alg1_literal);
        stats.push_back(std::move(ls));
    }

    std::mt19937_64 rng(mix_seed(ws.cfg.seed, kTagStats));
    for (Index b = 0; b < ws.cfg.minibatch_count; ++b) {
        const Batch batch = sample_batch(ws.data, ws.cfg.minibatch_size, rng);
        ForwardCache cache = forward(ws.model, batch);
        if (!std::isfinite(cache.loss)) {
            throw std::runtime_error("stats minibatch " + std::to_string(b) +
                                     ": non-finite loss");
        }
        BackwardResult back = backward(ws.model, cache);
        for (const LayerTap& tap : back.taps) {
            for (LayerStats& ls : stats) {
                if (ls.layer_id != tap.layer_id) continue;
                accumulate(ls.running, tap);
                ls.taps.push_back(tap);
            }
        }
    }
    for (LayerStats& ls : stats) {
        ls.finalized = finalize(ls.running);
    }
    return stats;
}

LayerInit build_layer_init(const Matrix& w0, Index layer_id, const FinalizedFactors& fin,
                           const RunConfig& cfg) {
    const SelectionStrategy strategy = strategy_from_config(cfg, layer_id);
    validate(strategy);

    LayerInit out;
    Matrix u_all;
    Matrix v_all;
    Vector sigma_all;
    if (strategy.basis == BasisKind::surrogate) {
        const SurrogateBasis basis = surrogate_basis(w0);
        out.spectrum = project_energies(basis, fin.s_x, fin.s_y);
        u_all = basis.u_hat;
        v_all = basis.v_hat;
    } else {
        const SvdResult svd = exact_svd_basis(w0);
        const Index h = std::min(w0.rows(), w0.cols());
        out.spectrum = project_energies(svd, fin.s_x, fin.s_y);
        u_all = svd.u.leftCols(h);
        v_all = svd.v.leftCols(h);
        sigma_all = svd.sigma;
    }
    out.candidate_count = v_all.cols();

    std::vector<Index> indices = select(out.spectrum, cfg.rank, strategy);
    Matrix u_sel(u_all.rows(), cfg.rank);
    Matrix v_sel(v_all.rows(), cfg.rank);
    Vector sigma_sel(cfg.rank);
    for (Index i = 0; i < cfg.rank; ++i) {
        u_sel.col(i) = u_all.col(indices[static_cast<size_t>(i)]);
        v_sel.col(i) = v_all.col(indices[static_cast<size_t>(i)]);
        sigma_sel(i) = strategy.scaling == ScalingMode::fisher
                           ? out.spectrum.energies(indices[static_cast<size_t>(i)])
                           : sigma_all(indices[static_cast<size_t>(i)]);
    }
    out.init = build_factors(u_sel, v_sel, sigma_sel, cfg.alpha, cfg.raw_alpha,
                             cfg.normalize_sigma);
    out.init.layer_id = layer_id;
    out.init.indices = std::move(indices);
    decompose(w0, out.init);
    return out;
}

EvalMetrics evaluate(const Model& model, const Batch& batch, bool classification) {
    const ForwardCache cache = forward(model, batch);
    EvalMetrics m;
    m.loss = cache.loss;
    if (!classification) {
        m.accuracy = std::numeric_limits<double>::quiet_NaN();
        return m;
    }
    Index hits = 0;
    for (Index j = 0; j < cache.output.cols(); ++j) {
        Index top = 0;
        cache.output.col(j).maxCoeff(&top);
        if (static_cast<int>(top) == batch.class_targets[static_cast<size_t>(j)]) ++hits;
    }
    m.accuracy = static_cast<double>(hits) / static_cast<double>(cache.output.cols());
    return m;
}

TrainResult train_adapters(const Workspace& ws, std::vector<LoraInit>& inits, Index steps,
                           double lr, Index batch_size, bool full_model,
                           std::uint64_t train_seed) {
    if (lr < 0.0) throw std::invalid_argument("train_adapters: negative lr");
    if (steps < 0) throw std::invalid_argument("train_adapters: negative step count");

    Model model = ws.model;
    for (const LoraInit& init : inits) {
        if (init.layer_id < 0 || init.layer_id >= model.linear_count()) {
            throw std::invalid_argument("train_adapters: init targets layer " +
                                        std::to_string(init.layer_id) + " of " +
                                        std::to_string(model.linear_count()));
        }
        model.linear(init.layer_id).weight = init.w_res + init.scale * (init.b * init.a);
    }

    const Batch train_full = full_train_batch(ws.data);
    const Batch eval_full = full_eval_batch(ws.data);
    const std::vector<bool> mask(static_cast<size_t>(model.linear_count()), true);

    TrainResult res;
    res.metrics.header = {"step", "train_loss", "eval_loss", "eval_accuracy"};
    auto push_row = [&](Index step) {
        const EvalMetrics train_m = evaluate(model, train_full, ws.data.classification);
        const EvalMetrics eval_m = evaluate(model, eval_full, ws.data.classification);
        res.metrics.rows.push_back({std::to_string(step), format_double(train_m.loss),
                                    format_double(eval_m.loss),
                                    format_double(eval_m.accuracy)});
        res.final_train_loss = train_m.loss;
        res.final_eval_loss = eval_m.loss;
        res.final_eval_accuracy = eval_m.accuracy;
        return train_m.loss;
    };

    if (push_row(0) > kDivergenceCeiling) {
        res.diverged_at_step = 0;
        return res;
    }

    std::mt19937_64 rng(train_seed);
    for (Index step = 1; step <= steps; ++step) {
        bool blew_up = false;
        try {
            const Batch batch = sample_batch(ws.data, batch_size, rng);
            if (full_model) {
                train_step(model, batch, mask, lr);
            } else {
                const ForwardCache cache = forward(model, batch);
                const BackwardResult back = backward(model, cache);
                for (LoraInit& init : inits) {
                    const Matrix& gw = back.grads[static_cast<size_t>(init.layer_id)];
                    const Matrix ga = init.scale * (init.b.transpose() * gw);
                    const Matrix gb = init.scale * (gw * init.a.transpose());
                    init.a -= lr * ga;
                    init.b -= lr * gb;
                }
                for (const LoraInit& init : inits) {
                    model.linear(init.layer_id).weight =
                        init.w_res + init.scale * (init.b * init.a);
                }
            }
            const double loss = push_row(step);
            if (!std::isfinite(loss) || loss > kDivergenceCeiling) blew_up = true;
        } catch (const std::runtime_error&) {
            blew_up = true;  // non-finite activations upstream of the loss check
        }
        if (blew_up) {
            res.diverged_at_step = step;
            break;
        }
    }
    return res;
}

std::vector<PreliminaryCell> preliminary_study(const RunConfig& cfg) {
    const Workspace ws = build_workspace(cfg);
    const std::vector<LayerStats> stats = collect_stats(ws);

    const Index layer = cfg.preliminary_layer;
    const LayerStats* ls = nullptr;
    for (const LayerStats& s : stats) {
        if (s.layer_id == layer) ls = &s;
    }
    if (ls == nullptr) {
        throw std::invalid_argument("preliminary: layer " + std::to_string(layer) +
                                    " is not tapped");
    }

    const Matrix& w0 = ws.model.linear(layer).weight;
    const SvdResult svd = exact_svd_basis(w0);
    const EnergySpectrum spectrum = project_energies(svd, ls->finalized.s_x, ls->finalized.s_y);
    const Index h = svd.sigma.size();
    if (cfg.preliminary_groups * cfg.preliminary_rank > h) {
        throw std::invalid_argument(
            "preliminary: layer " + std::to_string(layer) + " supports at most " +
            std::to_string(h / cfg.preliminary_rank) + " groups of rank " +
            std::to_string(cfg.preliminary_rank));
    }
    const GroupAggregate agg =
        cfg.group_aggregate == "mean" ? GroupAggregate::mean : GroupAggregate::sum;
    const std::uint64_t train_seed = mix_seed(cfg.seed, kTagTrain);

    std::vector<PreliminaryCell> cells;
    for (const SigmaMode mode : {SigmaMode::min, SigmaMode::max}) {
        for (Index g = 0; g < cfg.preliminary_groups; ++g) {
            LoraInit init = preliminary_init(svd, w0, g, cfg.preliminary_groups,
                                             cfg.preliminary_rank, mode, cfg.alpha,
                                             cfg.raw_alpha);
            init.layer_id = layer;

            PreliminaryCell cell;
            cell.group = g;
            cell.start_index = init.indices.front();
            cell.mode = mode;
            cell.group_energy = group_energy(spectrum, init.indices, agg);

            std::vector<LoraInit> one;
            one.push_back(std::move(init));
            const TrainResult tr = train_adapters(ws, one, cfg.train_steps, cfg.train_lr,
                                                  cfg.train_batch, false, train_seed);
            cell.final_train_loss = tr.final_train_loss;
            cell.final_eval_loss = tr.final_eval_loss;
            cell.final_eval_accuracy = tr.final_eval_accuracy;
            cell.diverged_at_step = tr.diverged_at_step;
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

std::vector<AblateCell> ablate_study(const RunConfig& cfg) {
    static const char* kCriteria[] = {"max", "random", "min"};
    static const char* kScalings[] = {"fisher", "svd-sigma"};

    std::vector<AblateCell> cells;
    for (Index i = 0; i < cfg.ablate_seeds; ++i) {
        RunConfig seed_cfg = cfg;
        seed_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
        const Workspace ws = build_workspace(seed_cfg);
        const std::vector<LayerStats> stats = collect_stats(ws);
        const std::uint64_t train_seed = mix_seed(seed_cfg.seed, kTagTrain);

        for (const char* scaling : kScalings) {
            for (const char* criterion : kCriteria) {
                RunConfig cell_cfg = seed_cfg;
                cell_cfg.criterion = criterion;
                cell_cfg.scaling = scaling;
                if (cell_cfg.scaling == "svd-sigma") cell_cfg.basis = "exact-svd";

                std::vector<LoraInit> inits;
                for (const LayerStats& ls : stats) {
                    inits.push_back(build_layer_init(ws.model.linear(ls.layer_id).weight,
                                                     ls.layer_id, ls.finalized, cell_cfg)
                                        .init);
                }
                const TrainResult tr = train_adapters(ws, inits, cfg.train_steps,
                                                      cfg.train_lr, cfg.train_batch, false,
                                                      train_seed);
                AblateCell cell;
                cell.seed = seed_cfg.seed;
                cell.criterion = criterion;
                cell.scaling = scaling;
                cell.final_train_loss = tr.final_train_loss;
                cell.final_eval_loss = tr.final_eval_loss;
                cell.final_eval_accuracy = tr.final_eval_accuracy;
                cell.diverged_at_step = tr.diverged_at_step;
                cells.push_back(std::move(cell));
            }
        }
    }
    return cells;
}

void write_selection(const std::string& path, const SelectionSet& sel) {
    const size_t layers = sel.layer_ids.size();
    if (sel.indices.size() != layers || sel.candidate_counts.size() != layers) {
        throw std::invalid_argument("write_selection: per-layer field sizes disagree");
    }
    std::vector<Tensor> tensors;
    tensors.push_back(tensor_scalar("rank", static_cast<double>(sel.rank)));
    tensors.push_back(tensor_from_indices("layer_ids", sel.layer_ids));
    for (size_t k = 0; k < layers; ++k) {
        const std::string suffix = std::to_string(sel.layer_ids[k]);
        tensors.push_back(tensor_from_indices("indices_layer" + suffix, sel.indices[k]));
        tensors.push_back(tensor_scalar("candidates_layer" + suffix,
                                        static_cast<double>(sel.candidate_counts[k])));
    }
    write_checkpoint(path, tensors);
}

SelectionSet read_selection(const std::string& path) {
    const std::vector<Tensor> tensors = read_checkpoint(path);
    SelectionSet sel;
    sel.rank = static_cast<Index>(scalar_from_tensor(find_tensor(tensors, "rank")));
    sel.layer_ids = indices_from_tensor(find_tensor(tensors, "layer_ids"));
    for (const Index id : sel.layer_ids) {
        const std::string suffix = std::to_string(id);
        std::vector<Index> idx =
            indices_from_tensor(find_tensor(tensors, "indices_layer" + suffix));
        const Index candidates = static_cast<Index>(
            scalar_from_tensor(find_tensor(tensors, "candidates_layer" + suffix)));
        if (static_cast<Index>(idx.size()) != sel.rank) {
            throw std::runtime_error(path + ": layer " + suffix + " carries " +
                                     std::to_string(idx.size()) + " indices, rank is " +
                                     std::to_string(sel.rank));
        }
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= candidates) {
                throw std::runtime_error(path + ": layer " + suffix + " index " +
                                         std::to_string(idx[i]) + " outside " +
                                         std::to_string(candidates) + " candidates");
            }
            if (i > 0 && idx[i] <= idx[i - 1]) {
                throw std::runtime_error(path + ": layer " + suffix +
                                         " indices not strictly ascending");
            }
        }
        sel.indices.push_back(std::move(idx));
        sel.candidate_counts.push_back(candidates);
    }
    return sel;
}

Matrix overlap_matrix(const std::vector<SelectionSet>& tasks) {
    const Index t = static_cast<Index>(tasks.size());
    if (t < 1) throw std::invalid_argument("overlap_matrix: no tasks");
    const SelectionSet& first = tasks.front();
    if (first.layer_ids.empty()) throw std::invalid_argument("overlap_matrix: no layers");
    for (const SelectionSet& task : tasks) {
        if (task.rank != first.rank || task.layer_ids != first.layer_ids ||
            task.candidate_counts != first.candidate_counts) {
            throw std::invalid_argument("overlap_matrix: selections come from different "
                                        "model specs");
        }
    }

    Matrix out = Matrix::Constant(t, t, 100.0);
    for (Index a = 0; a < t; ++a) {
        for (Index b = a + 1; b < t; ++b) {
            double acc = 0.0;
            for (size_t k = 0; k < first.layer_ids.size(); ++k) {
                std::vector<Index> common;
                std::set_intersection(tasks[a].indices[k].begin(), tasks[a].indices[k].end(),
                                      tasks[b].indices[k].begin(), tasks[b].indices[k].end(),
                                      std::back_inserter(common));
                acc += 100.0 * static_cast<double>(common.size()) /
                       static_cast<double>(first.rank);
            }
            const double pct = acc / static_cast<double>(first.layer_ids.size());
            out(a, b) = pct;
            out(b, a) = pct;
        }
    }
    return out;
}

}  // namespace filet
