#include "filet/checkpoint.hpp"
#include "filet/harness.hpp"
#include "filet/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <type_traits>

namespace filet {

namespace {

using Clock = std::chrono::steady_clock;

class PhaseTimer {
  public:
    explicit PhaseTimer(std::map<std::string, double>& sink) : sink_(sink) {}

    template <typename F>
    decltype(auto) run(const std::string& name, F&& fn) {
        const auto start = Clock::now();
        if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
            fn();
            record(name, start);
        } else {
            decltype(auto) result = fn();
            record(name, start);
            return result;
        }
    }

  private:
    void record(const std::string& name, Clock::time_point start) {
        const std::chrono::duration<double, std::milli> ms = Clock::now() - start;
        sink_[name] += ms.count();
    }

    std::map<std::string, double>& sink_;
};

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

Tensor tensor_from_vector(const std::string& name, const Vector& v) {
    Tensor t;
    t.name = name;
    t.dims = {static_cast<std::uint64_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

Vector vector_from_tensor(const Tensor& t) {
    if (t.dims.size() != 1) {
        throw std::runtime_error("tensor " + t.name + " is not 1-d");
    }
    Vector v(static_cast<Index>(t.data.size()));
    for (size_t i = 0; i < t.data.size(); ++i) v(static_cast<Index>(i)) = t.data[i];
    return v;
}

std::string stats_name(Index layer_id) {
    return "stats_layer" + std::to_string(layer_id) + ".filt";
}

std::string init_name(Index layer_id) {
    return "init_layer" + std::to_string(layer_id) + ".filt";
}

void write_stats_file(const std::string& path, const LayerStats& ls) {
    std::vector<Tensor> tensors;
    tensors.push_back(tensor_from_matrix("S_X", ls.finalized.s_x));
    tensors.push_back(tensor_from_matrix("S_Y", ls.finalized.s_y));
    tensors.push_back(tensor_scalar("layer_id", static_cast<double>(ls.layer_id)));
    tensors.push_back(tensor_scalar("batches_seen", static_cast<double>(ls.running.batches_seen)));
    tensors.push_back(tensor_scalar("columns_seen", static_cast<double>(ls.running.columns_seen)));
    tensors.push_back(tensor_scalar("alg1_literal", ls.running.alg1_literal ? 1.0 : 0.0));
    write_checkpoint(path, tensors);
}

FinalizedFactors read_stats_file(const std::string& path, const Matrix& weight) {
    const std::vector<Tensor> tensors = read_checkpoint(path);
    FinalizedFactors fin;
    fin.s_x = matrix_from_tensor(find_tensor(tensors, "S_X"));
    fin.s_y = matrix_from_tensor(find_tensor(tensors, "S_Y"));
    if (fin.s_x.rows() != weight.cols() || fin.s_x.cols() != weight.cols() ||
        fin.s_y.rows() != weight.rows() || fin.s_y.cols() != weight.rows()) {
        throw std::invalid_argument(path + ": factor shapes " +
                                    std::to_string(fin.s_x.rows()) + "x" +
                                    std::to_string(fin.s_x.cols()) + " / " +
                                    std::to_string(fin.s_y.rows()) + "x" +
                                    std::to_string(fin.s_y.cols()) +
                                    " do not match a " + std::to_string(weight.rows()) +
                                    "x" + std::to_string(weight.cols()) + " layer");
    }
    return fin;
}

void write_init_file(const std::string& path, const LoraInit& init) {
    std::vector<Tensor> tensors;
    tensors.push_back(tensor_from_matrix("A", init.a));
    tensors.push_back(tensor_from_matrix("B", init.b));
    tensors.push_back(tensor_from_matrix("W_res", init.w_res));
    tensors.push_back(tensor_from_vector("sigma", init.sigma_sel));
    tensors.push_back(tensor_from_indices("indices", init.indices));
    tensors.push_back(tensor_scalar("alpha", init.alpha));
    tensors.push_back(tensor_scalar("rank", static_cast<double>(init.rank)));
    tensors.push_back(tensor_scalar("scale", init.scale));
    tensors.push_back(tensor_scalar("layer_id", static_cast<double>(init.layer_id)));
    write_checkpoint(path, tensors);
}

LoraInit read_init_file(const std::string& path, const Matrix& weight) {
    const std::vector<Tensor> tensors = read_checkpoint(path);
    LoraInit init;
    init.a = matrix_from_tensor(find_tensor(tensors, "A"));
    init.b = matrix_from_tensor(find_tensor(tensors, "B"));
    init.w_res = matrix_from_tensor(find_tensor(tensors, "W_res"));
    init.sigma_sel = vector_from_tensor(find_tensor(tensors, "sigma"));
    init.indices = indices_from_tensor(find_tensor(tensors, "indices"));
    init.alpha = scalar_from_tensor(find_tensor(tensors, "alpha"));
    init.rank = static_cast<Index>(scalar_from_tensor(find_tensor(tensors, "rank")));
    init.scale = scalar_from_tensor(find_tensor(tensors, "scale"));
    init.layer_id = static_cast<Index>(scalar_from_tensor(find_tensor(tensors, "layer_id")));
    if (init.w_res.rows() != weight.rows() || init.w_res.cols() != weight.cols() ||
        init.a.cols() != weight.cols() || init.b.rows() != weight.rows() ||
        init.a.rows() != init.rank || init.b.cols() != init.rank) {
        throw std::invalid_argument(path + ": adapter shapes do not match a " +
                                    std::to_string(weight.rows()) + "x" +
                                    std::to_string(weight.cols()) + " layer of rank " +
                                    std::to_string(init.rank));
    }
    return init;
}

std::vector<Index> tapped_layers(const Model& model) {
    std::vector<Index> ids;
    for (Index k = 0; k < model.linear_count(); ++k) {
        if (model.linear(k).tapped) ids.push_back(k);
    }
    return ids;
}

CsvTable energies_table(const EnergySpectrum& spectrum) {
    CsvTable table;
    table.header = {"index", "energy", "dead"};
    for (Index j = 0; j < spectrum.energies.size(); ++j) {
        table.rows.push_back({std::to_string(j), format_double(spectrum.energies(j)),
                              spectrum.dead_mask[static_cast<size_t>(j)] ? "1" : "0"});
    }
    return table;
}

// EMA along the given row order, factor 0.3 on the newest value.
std::vector<double> ema_03(const std::vector<double>& xs) {
    std::vector<double> out(xs.size());
    double acc = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        acc = i == 0 ? xs[i] : 0.3 * xs[i] + 0.7 * acc;
        out[i] = acc;
    }
    return out;
}

const char* sigma_mode_name(SigmaMode mode) {
    return mode == SigmaMode::min ? "min" : "max";
}

CsvTable preliminary_table(const std::vector<PreliminaryCell>& cells,
                           const std::vector<size_t>& order) {
    CsvTable table;
    table.header = {"group",           "start_index",
                    "sigma_mode",      "group_energy",
                    "final_train_loss", "final_eval_loss",
                    "final_eval_accuracy", "diverged_at_step",
                    "ema0.3_final_train_loss", "ema0.3_final_eval_loss"};

    // EMA restarts at each sigma-mode block.
    std::vector<double> ema_train(order.size());
    std::vector<double> ema_eval(order.size());
    size_t block_start = 0;
    for (size_t i = 0; i <= order.size(); ++i) {
        const bool boundary =
            i == order.size() || (i > block_start && cells[order[i]].mode != cells[order[block_start]].mode);
        if (!boundary) continue;
        std::vector<double> train_vals;
        std::vector<double> eval_vals;
        for (size_t j = block_start; j < i; ++j) {
            train_vals.push_back(cells[order[j]].final_train_loss);
            eval_vals.push_back(cells[order[j]].final_eval_loss);
        }
        const std::vector<double> train_ema = ema_03(train_vals);
        const std::vector<double> eval_ema = ema_03(eval_vals);
        for (size_t j = block_start; j < i; ++j) {
            ema_train[j] = train_ema[j - block_start];
            ema_eval[j] = eval_ema[j - block_start];
        }
        block_start = i;
    }

    for (size_t i = 0; i < order.size(); ++i) {
        const PreliminaryCell& c = cells[order[i]];
        table.rows.push_back({std::to_string(c.group), std::to_string(c.start_index),
                              sigma_mode_name(c.mode), format_double(c.group_energy),
                              format_double(c.final_train_loss),
                              format_double(c.final_eval_loss),
                              format_double(c.final_eval_accuracy),
                              std::to_string(c.diverged_at_step),
                              format_double(ema_train[i]), format_double(ema_eval[i])});
    }
    return table;
}

}  // namespace

void write_manifest(const std::string& path, const RunConfig& cfg, const CommandOutput& out,
                    const std::map<std::string, std::int64_t>& extras) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["config_echo"] = echo_config(cfg);
    j["phase_timings_ms"] = out.phase_ms;
    j["artifact_paths"] = out.artifacts;
    j["tool_version"] = kToolVersion;
    for (const auto& [key, value] : extras) j[key] = value;

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path);
    file << j.dump(2) << "\n";
    if (!file) throw std::runtime_error("write failed on " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        file >> j;
    } catch (const nlohmann::json::parse_error& err) {
        throw std::runtime_error(path + ": " + err.what());
    }
    for (const char* key :
         {"seed", "config_echo", "phase_timings_ms", "artifact_paths", "tool_version"}) {
        if (!j.contains(key)) {
            throw std::runtime_error(path + ": manifest missing key " + key);
        }
    }
    Manifest m;
    m.seed = j["seed"].get<std::uint64_t>();
    m.config_echo = j["config_echo"].get<std::map<std::string, std::string>>();
    m.phase_timings_ms = j["phase_timings_ms"].get<std::map<std::string, double>>();
    m.artifact_paths = j["artifact_paths"].get<std::vector<std::string>>();
    m.tool_version = j["tool_version"].get<std::string>();
    for (const auto& [key, value] : j.items()) {
        if (key == "seed" || key == "config_echo" || key == "phase_timings_ms" ||
            key == "artifact_paths" || key == "tool_version") {
            continue;
        }
        if (value.is_number_integer()) m.extras[key] = value.get<std::int64_t>();
    }
    return m;
}

CommandOutput run_stats(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const Workspace ws = timer.run("workspace", [&] { return build_workspace(cfg); });
    const std::vector<LayerStats> stats =
        timer.run("stats", [&] { return collect_stats(ws); });
    timer.run("write", [&] {
        for (const LayerStats& ls : stats) {
            const std::string name = stats_name(ls.layer_id);
            write_stats_file(join(out_dir, name), ls);
            out.artifacts.push_back(name);
        }
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_init(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& stats_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const Workspace ws = timer.run("workspace", [&] { return build_workspace(cfg); });

    std::vector<std::pair<Index, FinalizedFactors>> factors;
    if (stats_dir.empty()) {
        const std::vector<LayerStats> stats =
            timer.run("stats", [&] { return collect_stats(ws); });
        for (const LayerStats& ls : stats) factors.emplace_back(ls.layer_id, ls.finalized);
    } else {
        timer.run("read_stats", [&] {
            for (const Index id : tapped_layers(ws.model)) {
                factors.emplace_back(id, read_stats_file(join(stats_dir, stats_name(id)),
                                                         ws.model.linear(id).weight));
            }
        });
    }

    SelectionSet selection;
    selection.rank = cfg.rank;
    timer.run("init", [&] {
        for (const auto& [layer_id, fin] : factors) {
            const LayerInit li =
                build_layer_init(ws.model.linear(layer_id).weight, layer_id, fin, cfg);

            const std::string csv_name = "energies_layer" + std::to_string(layer_id) + ".csv";
            write_csv(join(out_dir, csv_name), energies_table(li.spectrum));
            out.artifacts.push_back(csv_name);

            const std::string filt = init_name(layer_id);
            write_init_file(join(out_dir, filt), li.init);
            out.artifacts.push_back(filt);

            selection.layer_ids.push_back(layer_id);
            selection.indices.push_back(li.init.indices);
            selection.candidate_counts.push_back(li.candidate_count);
        }
    });
    timer.run("write", [&] {
        if (!selection.layer_ids.empty()) {
            write_selection(join(out_dir, "selection.filt"), selection);
            out.artifacts.push_back("selection.filt");
        }
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_train(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& init_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const Workspace ws = timer.run("workspace", [&] { return build_workspace(cfg); });

    std::vector<LoraInit> inits;
    if (init_dir.empty()) {
        const std::vector<LayerStats> stats =
            timer.run("stats", [&] { return collect_stats(ws); });
        timer.run("init", [&] {
            for (const LayerStats& ls : stats) {
                inits.push_back(build_layer_init(ws.model.linear(ls.layer_id).weight,
                                                 ls.layer_id, ls.finalized, cfg)
                                    .init);
            }
        });
    } else {
        timer.run("read_init", [&] {
            for (const Index id : tapped_layers(ws.model)) {
                inits.push_back(read_init_file(join(init_dir, init_name(id)),
                                               ws.model.linear(id).weight));
            }
        });
    }

    const TrainResult tr = timer.run("train", [&] {
        return train_adapters(ws, inits, cfg.train_steps, cfg.train_lr, cfg.train_batch,
                              cfg.trainable == "full", mix_seed(cfg.seed, kTagTrain));
    });
    timer.run("write", [&] {
        write_csv(join(out_dir, "metrics.csv"), tr.metrics);
        out.artifacts.push_back("metrics.csv");
    });

    std::map<std::string, std::int64_t> extras;
    if (tr.diverged_at_step >= 0) extras["diverged_at_step"] = tr.diverged_at_step;
    write_manifest(join(out_dir, "manifest.json"), cfg, out, extras);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_probe(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& init_path) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const Workspace ws = timer.run("workspace", [&] { return build_workspace(cfg); });
    const std::vector<LayerStats> stats =
        timer.run("stats", [&] { return collect_stats(ws); });

    const Index layer = cfg.probe_layer;
    const LayerStats* ls = nullptr;
    for (const LayerStats& s : stats) {
        if (s.layer_id == layer) ls = &s;
    }
    if (ls == nullptr) {
        throw std::invalid_argument("probe: layer " + std::to_string(layer) +
                                    " is not tapped");
    }
    const Matrix& w0 = ws.model.linear(layer).weight;

    // Candidate directions from the configured basis; an init file narrows
    // them to its selected indices.
    Matrix u_all;
    Matrix v_all;
    EnergySpectrum spectrum;
    if (cfg.basis == "surrogate") {
        const SurrogateBasis basis = surrogate_basis(w0);
        spectrum = project_energies(basis, ls->finalized.s_x, ls->finalized.s_y);
        u_all = basis.u_hat;
        v_all = basis.v_hat;
    } else {
        const SvdResult svd = exact_svd_basis(w0);
        const Index h = std::min(w0.rows(), w0.cols());
        spectrum = project_energies(svd, ls->finalized.s_x, ls->finalized.s_y);
        u_all = svd.u.leftCols(h);
        v_all = svd.v.leftCols(h);
    }

    std::vector<Index> picked;
    if (init_path.empty()) {
        for (Index j = 0; j < v_all.cols() && static_cast<Index>(picked.size()) < cfg.probe_directions; ++j) {
            if (!spectrum.dead_mask[static_cast<size_t>(j)]) picked.push_back(j);
        }
    } else {
        const LoraInit init = read_init_file(init_path, w0);
        picked = init.indices;
        for (const Index j : picked) {
            if (j < 0 || j >= v_all.cols()) {
                throw std::invalid_argument(init_path + ": index " + std::to_string(j) +
                                            " outside " + std::to_string(v_all.cols()) +
                                            " candidates");
            }
        }
    }
    if (picked.empty()) throw std::invalid_argument("probe: no live directions to probe");

    std::vector<Direction> directions;
    for (const Index j : picked) directions.push_back({u_all.col(j), v_all.col(j)});

    const Batch train_full = full_train_batch(ws.data);
    const LossEval loss_eval = [&](const Matrix& w) {
        Model probe_model = ws.model;
        probe_model.linear(layer).weight = w;
        return forward(probe_model, train_full).loss;
    };

    const TaylorReport report = timer.run("probe", [&] {
        return taylor_report(loss_eval, w0, directions, cfg.gammas, ls->finalized.s_x,
                             ls->finalized.s_y);
    });

    const bool with_exact = w0.rows() * w0.cols() <= kFullFisherGuard;
    std::vector<double> half_exact;
    if (with_exact) {
        timer.run("exact_fisher", [&] {
            const FullFisher ff = full_fisher(ls->taps);
            for (const Direction& d : directions) {
                half_exact.push_back(0.5 * fisher_energy_exact(ff, d.u, d.v));
            }
        });
    }

    timer.run("write", [&] {
        CsvTable table;
        table.header = {"direction", "candidate_index", "gamma", "probe_over_gamma_sq",
                        "half_factored_energy"};
        if (with_exact) table.header.push_back("half_exact_energy");
        for (const TaylorRow& row : report.rows) {
            std::vector<std::string> cells = {
                std::to_string(row.direction),
                std::to_string(picked[static_cast<size_t>(row.direction)]),
                format_double(row.gamma), format_double(row.probe_over_gamma_sq),
                format_double(row.half_factored_energy)};
            if (with_exact) {
                cells.push_back(format_double(half_exact[static_cast<size_t>(row.direction)]));
            }
            table.rows.push_back(std::move(cells));
        }
        write_csv(join(out_dir, "taylor.csv"), table);
        out.artifacts.push_back("taylor.csv");

        CsvTable summary;
        summary.header = {"spearman_factored"};
        std::vector<std::string> row = {format_double(report.spearman)};
        if (with_exact) {
            summary.header.push_back("spearman_exact");
            double rho = 0.0;
            if (directions.size() >= 2) {
                const double gamma_min =
                    *std::min_element(cfg.gammas.begin(), cfg.gammas.end());
                std::vector<double> probes(directions.size(), 0.0);
                for (const TaylorRow& r : report.rows) {
                    if (r.gamma == gamma_min) {
                        probes[static_cast<size_t>(r.direction)] = r.probe_over_gamma_sq;
                    }
                }
                rho = spearman(probes, half_exact);
            }
            row.push_back(format_double(rho));
        }
        summary.rows.push_back(std::move(row));
        write_csv(join(out_dir, "probe_summary.csv"), summary);
        out.artifacts.push_back("probe_summary.csv");
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_preliminary(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const std::vector<PreliminaryCell> cells =
        timer.run("study", [&] { return preliminary_study(cfg); });

    timer.run("write", [&] {
        std::vector<size_t> by_sigma(cells.size());
        for (size_t i = 0; i < cells.size(); ++i) by_sigma[i] = i;
        std::stable_sort(by_sigma.begin(), by_sigma.end(), [&](size_t a, size_t b) {
            if (cells[a].mode != cells[b].mode) {
                return cells[a].mode == SigmaMode::min;
            }
            return cells[a].start_index < cells[b].start_index;
        });
        write_csv(join(out_dir, "preliminary_by_sigma.csv"),
                  preliminary_table(cells, by_sigma));
        out.artifacts.push_back("preliminary_by_sigma.csv");

        std::vector<size_t> by_energy = by_sigma;
        std::stable_sort(by_energy.begin(), by_energy.end(), [&](size_t a, size_t b) {
            if (cells[a].mode != cells[b].mode) {
                return cells[a].mode == SigmaMode::min;
            }
            if (cells[a].group_energy != cells[b].group_energy) {
                return cells[a].group_energy < cells[b].group_energy;
            }
            return cells[a].group < cells[b].group;
        });
        write_csv(join(out_dir, "preliminary_by_energy.csv"),
                  preliminary_table(cells, by_energy));
        out.artifacts.push_back("preliminary_by_energy.csv");
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_ablate(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const std::vector<AblateCell> cells =
        timer.run("study", [&] { return ablate_study(cfg); });

    timer.run("write", [&] {
        CsvTable table;
        table.header = {"seed",          "criterion",       "scaling",
                        "final_train_loss", "final_eval_loss", "final_eval_accuracy",
                        "diverged_at_step"};
        for (const AblateCell& c : cells) {
            table.rows.push_back({std::to_string(c.seed), c.criterion, c.scaling,
                                  format_double(c.final_train_loss),
                                  format_double(c.final_eval_loss),
                                  format_double(c.final_eval_accuracy),
                                  std::to_string(c.diverged_at_step)});
        }
        write_csv(join(out_dir, "ablate.csv"), table);
        out.artifacts.push_back("ablate.csv");

        // Seed-aggregate summary per grid cell, differenced against min/fisher.
        static const std::pair<const char*, const char*> kCells[] = {
            {"max", "fisher"},      {"random", "fisher"},    {"min", "fisher"},
            {"max", "svd-sigma"},   {"random", "svd-sigma"}, {"min", "svd-sigma"}};
        auto cell_stats = [&](const std::string& criterion, const std::string& scaling) {
            std::vector<double> vals;
            for (const AblateCell& c : cells) {
                if (c.criterion == criterion && c.scaling == scaling) {
                    vals.push_back(c.final_eval_loss);
                }
            }
            double mean = 0.0;
            for (const double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (const double v : vals) var += (v - mean) * (v - mean);
            const double se = vals.size() > 1
                                  ? std::sqrt(var / static_cast<double>(vals.size() - 1)) /
                                        std::sqrt(static_cast<double>(vals.size()))
                                  : 0.0;
            return std::pair<double, double>(mean, se);
        };
        const double min_fisher_mean = cell_stats("min", "fisher").first;

        CsvTable summary;
        summary.header = {"criterion",    "scaling",           "mean_eval_loss",
                          "se_eval_loss", "diff_vs_min_fisher", "sign"};
        for (const auto& [criterion, scaling] : kCells) {
            const auto [mean, se] = cell_stats(criterion, scaling);
            const double diff = mean - min_fisher_mean;
            const int sign = diff > 0.0 ? 1 : diff < 0.0 ? -1 : 0;
            summary.rows.push_back({criterion, scaling, format_double(mean),
                                    format_double(se), format_double(diff),
                                    std::to_string(sign)});
        }
        write_csv(join(out_dir, "ablate_summary.csv"), summary);
        out.artifacts.push_back("ablate_summary.csv");
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_overlap(const std::vector<std::pair<std::string, std::string>>& tasks,
                          const RunConfig& cfg, const std::string& out_dir) {
    if (tasks.size() < 2) {
        throw std::invalid_argument("overlap: need at least two name=path tasks");
    }
    for (const auto& [name, path] : tasks) {
        if (name.empty()) throw std::invalid_argument("overlap: empty task name");
        for (const char c : name) {
            const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                            (c >= '0' && c <= '9') || c == '_' || c == '-';
            if (!ok) {
                throw std::invalid_argument("overlap: task name '" + name +
                                            "' outside [A-Za-z0-9_-]");
            }
        }
    }

    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const std::vector<SelectionSet> sets = timer.run("read", [&] {
        std::vector<SelectionSet> loaded;
        for (const auto& [name, path] : tasks) loaded.push_back(read_selection(path));
        return loaded;
    });
    const Matrix overlap = timer.run("overlap", [&] { return overlap_matrix(sets); });

    timer.run("write", [&] {
        CsvTable table;
        table.header = {"task"};
        for (const auto& [name, path] : tasks) table.header.push_back(name);
        for (Index i = 0; i < overlap.rows(); ++i) {
            std::vector<std::string> row = {tasks[static_cast<size_t>(i)].first};
            for (Index j = 0; j < overlap.cols(); ++j) {
                row.push_back(format_double(overlap(i, j)));
            }
            table.rows.push_back(std::move(row));
        }
        write_csv(join(out_dir, "overlap.csv"), table);
        out.artifacts.push_back("overlap.csv");
    });

    write_manifest(join(out_dir, "manifest.json"), cfg, out);
    out.artifacts.push_back("manifest.json");
    return out;
}

CommandOutput run_timing(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    CommandOutput out;
    PhaseTimer timer(out.phase_ms);

    const Workspace ws = timer.run("workspace", [&] { return build_workspace(cfg); });
    const std::vector<LayerStats> stats =
        timer.run("stats", [&] { return collect_stats(ws); });

    // The init pipeline with every phase timed separately. Retained payloads
    // are tallied analytically: 8 bytes per held double.
    std::int64_t peak_doubles = 0;
    peak_doubles += ws.data.train_x.size() + ws.data.train_targets.size() +
                    ws.data.eval_x.size() + ws.data.eval_targets.size();
    for (Index k = 0; k < ws.model.linear_count(); ++k) {
        peak_doubles += ws.model.linear(k).weight.size();
    }
    for (const LayerStats& ls : stats) {
        peak_doubles += ls.running.s_x.size() + ls.running.s_y.size() +
                        ls.finalized.s_x.size() + ls.finalized.s_y.size();
        for (const LayerTap& tap : ls.taps) peak_doubles += tap.X.size() + tap.G.size();
    }

    for (const LayerStats& ls : stats) {
        const Matrix& w0 = ws.model.linear(ls.layer_id).weight;
        const SelectionStrategy strategy = [&] {
            SelectionStrategy s;
            s.criterion = cfg.criterion == "min"   ? SelectionCriterion::min_energy
                          : cfg.criterion == "max" ? SelectionCriterion::max_energy
                                                   : SelectionCriterion::random;
            s.scaling = cfg.scaling == "fisher" ? ScalingMode::fisher : ScalingMode::svd_sigma;
            s.basis = cfg.basis == "surrogate" ? BasisKind::surrogate : BasisKind::exact_svd;
            s.rng_seed = cfg.rng_seed != 0
                             ? cfg.rng_seed
                             : mix_seed(mix_seed(cfg.seed, kTagSelect),
                                        static_cast<std::uint64_t>(ls.layer_id) + 1);
            return s;
        }();
        validate(strategy);

        Matrix u_all;
        Matrix v_all;
        Vector sigma_all;
        EnergySpectrum spectrum;
        if (strategy.basis == BasisKind::surrogate) {
            const SurrogateBasis basis = timer.run("basis", [&] { return surrogate_basis(w0); });
            u_all = basis.u_hat;
            v_all = basis.v_hat;
            spectrum = timer.run("energies", [&] {
                return project_energies(basis, ls.finalized.s_x, ls.finalized.s_y);
            });
        } else {
            const SvdResult svd = timer.run("basis", [&] { return exact_svd_basis(w0); });
            const Index h = std::min(w0.rows(), w0.cols());
            u_all = svd.u.leftCols(h);
            v_all = svd.v.leftCols(h);
            sigma_all = svd.sigma;
            spectrum = timer.run("energies", [&] {
                return project_energies(svd, ls.finalized.s_x, ls.finalized.s_y);
            });
        }
        peak_doubles += u_all.size() + v_all.size() + sigma_all.size() + spectrum.energies.size();

        const std::vector<Index> indices =
            timer.run("selection", [&] { return select(spectrum, cfg.rank, strategy); });

        const LoraInit init = timer.run("factor_build", [&] {
            Matrix u_sel(u_all.rows(), cfg.rank);
            Matrix v_sel(v_all.rows(), cfg.rank);
            Vector sigma_sel(cfg.rank);
            for (Index i = 0; i < cfg.rank; ++i) {
                u_sel.col(i) = u_all.col(indices[static_cast<size_t>(i)]);
                v_sel.col(i) = v_all.col(indices[static_cast<size_t>(i)]);
                sigma_sel(i) = strategy.scaling == ScalingMode::fisher
                                   ? spectrum.energies(indices[static_cast<size_t>(i)])
                                   : sigma_all(indices[static_cast<size_t>(i)]);
            }
            LoraInit built = build_factors(u_sel, v_sel, sigma_sel, cfg.alpha, cfg.raw_alpha,
                                           cfg.normalize_sigma);
            built.layer_id = ls.layer_id;
            built.indices = indices;
            decompose(w0, built);
            return built;
        });
        peak_doubles += init.a.size() + init.b.size() + init.w_res.size() +
                        init.sigma_sel.size();
    }

    const std::map<std::string, std::int64_t> extras = {
        {"peak_matrix_bytes", peak_doubles * static_cast<std::int64_t>(sizeof(double))}};
    out.artifacts.push_back("timing.json");
    write_manifest(join(out_dir, "timing.json"), cfg, out, extras);
    return out;
}

}  // namespace filet
