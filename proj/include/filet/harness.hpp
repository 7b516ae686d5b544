#pragma once

#include "filet/config.hpp"
#include "filet/csv.hpp"
#include "filet/dataset.hpp"
#include "filet/fisher_stats.hpp"
#include "filet/lora_build.hpp"
#include "filet/micrograd.hpp"
#include "filet/subspace_select.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace filet {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr double kDivergenceCeiling = 1e6;

// Dataset plus the pretrained model, both pure functions of (cfg, cfg.seed).
struct Workspace {
    RunConfig cfg;
    Dataset data;
    Model model;
};

Workspace build_workspace(const RunConfig& cfg);

struct LayerStats {
    Index layer_id = 0;
    FisherFactors running;
    FinalizedFactors finalized;
    std::vector<LayerTap> taps;  // one per minibatch, kept for exact-Fisher probes
};

/// Minibatch forward/backward sweeps accumulating Kronecker factors for every
/// tapped layer of the pretrained model.
std::vector<LayerStats> collect_stats(const Workspace& ws);

struct LayerInit {
    LoraInit init;
    EnergySpectrum spectrum;
    Index candidate_count = 0;
};

/// basis -> energies -> select -> factors -> residual for one layer, strategy
/// taken from cfg.
LayerInit build_layer_init(const Matrix& w0, Index layer_id, const FinalizedFactors& fin,
                           const RunConfig& cfg);

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;  // NaN for regression
};

EvalMetrics evaluate(const Model& model, const Batch& batch, bool classification);

struct TrainResult {
    CsvTable metrics;  // step, train_loss, eval_loss, eval_accuracy
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    double final_eval_accuracy = 0.0;
    Index diverged_at_step = -1;  // -1 while training stayed finite
};

/// SGD on the adapter factors with the residuals frozen (or on every weight
/// after merging, when full_model). Metrics rows run from step 0 (pre-update)
/// through the last step taken; training stops early past kDivergenceCeiling.
TrainResult train_adapters(const Workspace& ws, std::vector<LoraInit>& inits, Index steps,
                           double lr, Index batch_size, bool full_model,
                           std::uint64_t train_seed);

struct PreliminaryCell {
    Index group = 0;
    Index start_index = 0;
    SigmaMode mode = SigmaMode::min;
    double group_energy = 0.0;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    double final_eval_accuracy = 0.0;
    Index diverged_at_step = -1;
};

/// Every direction group under both sigma modes on cfg.preliminary_layer,
/// adapter-trained with an identical minibatch stream.
std::vector<PreliminaryCell> preliminary_study(const RunConfig& cfg);

struct AblateCell {
    std::uint64_t seed = 0;
    std::string criterion;  // min | max | random
    std::string scaling;    // fisher | svd-sigma
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    double final_eval_accuracy = 0.0;
    Index diverged_at_step = -1;
};

/// {max, random, min} x {fisher, svd-sigma} over cfg.ablate_seeds consecutive
/// seeds; every cell of one seed shares workspace, stats, and batch order.
std::vector<AblateCell> ablate_study(const RunConfig& cfg);

// Selected index sets of one task, as persisted in selection.filt.
struct SelectionSet {
    Index rank = 0;
    std::vector<Index> layer_ids;
    std::vector<std::vector<Index>> indices;  // per layer, ascending
    std::vector<Index> candidate_counts;      // per layer
};

void write_selection(const std::string& path, const SelectionSet& sel);
SelectionSet read_selection(const std::string& path);

/// Pairwise mean-over-layers overlap percentages; symmetric, diagonal 100.
Matrix overlap_matrix(const std::vector<SelectionSet>& tasks);

// ---------------------------------------------------------------------------
// Command runners. Each writes its artifacts plus a JSON manifest into
// out_dir and reports what it wrote.

struct CommandOutput {
    std::map<std::string, double> phase_ms;
    std::vector<std::string> artifacts;  // file names relative to out_dir
};

CommandOutput run_stats(const RunConfig& cfg, const std::string& out_dir);
/// stats_dir empty -> factors recomputed in-process (bit-identical by
/// determinism); otherwise stats_layer<k>.filt files are read and shape-checked.
CommandOutput run_init(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& stats_dir = "");
CommandOutput run_train(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& init_dir = "");
/// init_path empty -> probes the first probe.directions live candidate
/// directions; otherwise the init file's selected directions.
CommandOutput run_probe(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& init_path = "");
CommandOutput run_preliminary(const RunConfig& cfg, const std::string& out_dir);
CommandOutput run_ablate(const RunConfig& cfg, const std::string& out_dir);
CommandOutput run_overlap(const std::vector<std::pair<std::string, std::string>>& tasks,
                          const RunConfig& cfg, const std::string& out_dir);
CommandOutput run_timing(const RunConfig& cfg, const std::string& out_dir);

struct Manifest {
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config_echo;
    std::map<std::string, double> phase_timings_ms;
    std::vector<std::string> artifact_paths;
    std::string tool_version;
    std::map<std::string, std::int64_t> extras;
};

/// JSON object with keys seed, config_echo, phase_timings_ms, artifact_paths,
/// tool_version, plus any extra integer keys (diverged_at_step, peak bytes).
void write_manifest(const std::string& path, const RunConfig& cfg, const CommandOutput& out,
                    const std::map<std::string, std::int64_t>& extras = {});

/// Parses a manifest back; the five required keys must be present.
Manifest read_manifest(const std::string& path);

}  // namespace filet
