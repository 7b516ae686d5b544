#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "filet/checkpoint.hpp"
#include "filet/config.hpp"
#include "filet/csv.hpp"
#include "filet/dataset.hpp"
#include "filet/harness.hpp"
#include "filet/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace filet;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("filet_test_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    REQUIRE(file.good());
    return std::string((std::istreambuf_iterator<char>(file)),
                       std::istreambuf_iterator<char>());
}

// Small fast config for wiring tests.
RunConfig tiny_config() {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.hidden = {6};
    cfg.features = 4;
    cfg.classes = 3;
    cfg.train_samples = 64;
    cfg.eval_samples = 32;
    cfg.pretrain_steps = 60;
    cfg.minibatch_count = 3;
    cfg.minibatch_size = 8;
    cfg.rank = 2;
    cfg.train_steps = 6;
    cfg.train_batch = 8;
    cfg.probe_directions = 3;
    cfg.preliminary_groups = 4;
    cfg.ablate_seeds = 2;
    return cfg;
}

}  // namespace

TEST_CASE("filt round-trip is bit-identical for f64 tensors") {
    TempDir dir("filt");
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Tensor> tensors;
    Tensor a{"weights", 2, {3, 4}, {}};
    for (int i = 0; i < 12; ++i) a.data.push_back(gauss(rng));
    Tensor b{"bias", 2, {5}, {}};
    for (int i = 0; i < 5; ++i) b.data.push_back(gauss(rng));
    tensors.push_back(a);
    tensors.push_back(b);
    tensors.push_back(tensor_scalar("alpha", 4.0));

    const std::string p1 = dir.str("one.filt");
    const std::string p2 = dir.str("two.filt");
    write_checkpoint(p1, tensors);
    const std::vector<Tensor> back = read_checkpoint(p1);
    write_checkpoint(p2, back);
    CHECK(slurp(p1) == slurp(p2));

    REQUIRE(back.size() == 3);
    CHECK(back[0].name == "weights");
    CHECK(back[0].dims == std::vector<std::uint64_t>{3, 4});
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(back[0].data[i] == a.data[i]);
    CHECK(scalar_from_tensor(find_tensor(back, "alpha")) == 4.0);
}

TEST_CASE("filt f32 tensors truncate but keep shape") {
    TempDir dir("filt32");
    Tensor t{"half", 1, {2}, {1.0 / 3.0, 2.5}};
    write_checkpoint(dir.str("f.filt"), {t});
    const std::vector<Tensor> back = read_checkpoint(dir.str("f.filt"));
    CHECK(back[0].dtype == 1);
    CHECK(back[0].data[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
    CHECK(back[0].data[1] == 2.5);  // exactly representable
}

TEST_CASE("filt reader rejects corrupted files") {
    TempDir dir("filtbad");
    write_checkpoint(dir.str("ok.filt"), {tensor_scalar("x", 1.0)});
    std::string bytes = slurp(dir.str("ok.filt"));

    {
        std::ofstream f(dir.str("magic.filt"), std::ios::binary);
        std::string bad = bytes;
        bad[0] = 'X';
        f << bad;
    }
    CHECK_THROWS_AS(read_checkpoint(dir.str("magic.filt")), std::runtime_error);

    {
        std::ofstream f(dir.str("short.filt"), std::ios::binary);
        f << bytes.substr(0, bytes.size() - 3);
    }
    CHECK_THROWS_AS(read_checkpoint(dir.str("short.filt")), std::runtime_error);

    {
        std::ofstream f(dir.str("trail.filt"), std::ios::binary);
        f << bytes << "zz";
    }
    CHECK_THROWS_AS(read_checkpoint(dir.str("trail.filt")), std::runtime_error);

    CHECK_THROWS_AS(read_checkpoint(dir.str("missing.filt")), std::runtime_error);
}

TEST_CASE("csv emit-parse-emit is idempotent at full precision") {
    CsvTable table;
    table.header = {"step", "value"};
    table.rows = {{"0", format_double(1.0 / 3.0)},
                  {"1", format_double(-2.718281828459045e-12)},
                  {"2", format_double(6.02214076e23)}};
    const std::string text = csv_text(table);
    const CsvTable parsed = parse_csv(text);
    CHECK(csv_text(parsed) == text);
    CHECK(std::stod(parsed.rows[0][1]) == 1.0 / 3.0);

    CHECK_THROWS_AS(parse_csv("a,b\n1\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_csv("a,b\r\n1,2\r\n"), std::runtime_error);
}

TEST_CASE("config parser handles comments, overrides, and bad input") {
    const ConfigMap map = parse_config_text(
        "# a comment\n"
        "seed = 42\n"
        "  init.rank=3  # trailing comment\n"
        "model.hidden = 5, 7\n"
        "\n"
        "init.normalize_sigma = false\n");
    const RunConfig cfg = make_run_config(map);
    CHECK(cfg.seed == 42);
    CHECK(cfg.rank == 3);
    CHECK(cfg.hidden == std::vector<Index>{5, 7});
    CHECK(cfg.normalize_sigma == false);

    CHECK_THROWS_AS(make_run_config({{"no.such.key", "1"}}), std::invalid_argument);
    CHECK_THROWS_AS(make_run_config({{"init.rank", "banana"}}), std::invalid_argument);
    CHECK_THROWS_AS(make_run_config({{"init.rank", "0"}}), std::invalid_argument);
    CHECK_THROWS_AS(make_run_config({{"init.criterion", "best"}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("just words\n"), std::invalid_argument);
}

TEST_CASE("config echo round-trips to the same configuration") {
    RunConfig cfg = tiny_config();
    cfg.gammas = {0.5, 0.125};
    cfg.criterion = "random";
    const RunConfig back = make_run_config(echo_config(cfg));
    CHECK(echo_config(back) == echo_config(cfg));
}

TEST_CASE("datasets are pure functions of seed and spec") {
    RunConfig cfg = tiny_config();
    const Dataset a = make_dataset(cfg);
    const Dataset b = make_dataset(cfg);
    CHECK(a.train_x == b.train_x);
    CHECK(a.eval_x == b.eval_x);
    CHECK(a.train_labels == b.train_labels);

    cfg.seed = 8;
    const Dataset c = make_dataset(cfg);
    CHECK(a.train_x != c.train_x);

    CHECK(a.train_x.rows() == 4);
    CHECK(a.train_x.cols() == 64);
    CHECK(a.train_targets.rows() == 3);
    for (Index j = 0; j < a.train_targets.cols(); ++j) {
        CHECK(a.train_targets.col(j).sum() == 1.0);
        CHECK(a.train_targets(a.train_labels[static_cast<size_t>(j)], j) == 1.0);
    }
}

TEST_CASE("linear dataset regresses against a hidden matrix") {
    RunConfig cfg = tiny_config();
    cfg.dataset_kind = "linear";
    cfg.loss = "mse";
    cfg.noise = 0.0;
    const Dataset data = make_dataset(cfg);
    CHECK_FALSE(data.classification);
    // noiseless targets are an exact linear map of the inputs
    const Matrix w_fit = data.train_targets * data.train_x.transpose() *
                         (data.train_x * data.train_x.transpose()).inverse();
    CHECK((w_fit * data.eval_x - data.eval_targets).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("make_model builds the configured chain") {
    RunConfig cfg = tiny_config();
    Model model = make_model(cfg);
    REQUIRE(model.linear_count() == 2);
    CHECK(model.linear(0).weight.rows() == 6);
    CHECK(model.linear(0).weight.cols() == 4);
    CHECK(model.linear(1).weight.rows() == 3);
    CHECK(model.linear(1).weight.cols() == 6);
    CHECK(model.items.size() == 3);  // linear, relu, linear
    CHECK(model.linear(0).tapped);
    CHECK(model.linear(1).tapped);

    cfg.tapped = "1";
    Model partial = make_model(cfg);
    CHECK_FALSE(partial.linear(0).tapped);
    CHECK(partial.linear(1).tapped);

    cfg.tapped = "9";
    CHECK_THROWS_AS(make_model(cfg), std::invalid_argument);
}

TEST_CASE("collect_stats matches a hand-driven accumulation of the same stream") {
    RunConfig cfg = tiny_config();
    const Workspace ws = build_workspace(cfg);
    const std::vector<LayerStats> stats = collect_stats(ws);
    REQUIRE(stats.size() == 2);

    // Re-walk the identical rng stream and batches by hand.
    std::mt19937_64 rng(mix_seed(cfg.seed, kTagStats));
    FisherFactors f0 = make_factors(0, 4, 6, cfg.alg1_literal);
    FisherFactors f1 = make_factors(1, 6, 3, cfg.alg1_literal);
    Matrix x0_sum = Matrix::Zero(4, 4);
    for (Index b = 0; b < cfg.minibatch_count; ++b) {
        const Batch batch = sample_batch(ws.data, cfg.minibatch_size, rng);
        const ForwardCache cache = forward(ws.model, batch);
        const BackwardResult back = backward(ws.model, cache);
        for (const LayerTap& tap : back.taps) {
            accumulate(tap.layer_id == 0 ? f0 : f1, tap);
        }
        // layer 0 sees the raw inputs: stack the oracle directly
        x0_sum += batch.inputs * batch.inputs.transpose() /
                  static_cast<double>(batch.inputs.cols());
    }
    const FinalizedFactors fin0 = finalize(f0);
    const FinalizedFactors fin1 = finalize(f1);
    CHECK((stats[0].finalized.s_x - fin0.s_x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((stats[0].finalized.s_y - fin0.s_y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((stats[1].finalized.s_x - fin1.s_x).cwiseAbs().maxCoeff() == 0.0);

    const Matrix s_x_oracle = (x0_sum / static_cast<double>(cfg.minibatch_count));
    CHECK((stats[0].finalized.s_x - 0.5 * (s_x_oracle + s_x_oracle.transpose()))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(static_cast<Index>(stats[0].taps.size()) == cfg.minibatch_count);
}

TEST_CASE("exactly tied energies fall back to index order") {
    RunConfig cfg = tiny_config();
    const Workspace ws = build_workspace(cfg);
    const Matrix& w0 = ws.model.linear(0).weight;
    // zero factors give every direction energy exactly 0.0
    FinalizedFactors fin;
    fin.s_x = Matrix::Zero(4, 4);
    fin.s_y = Matrix::Zero(6, 6);
    cfg.criterion = "min";
    const LayerInit lo = build_layer_init(w0, 0, fin, cfg);
    CHECK(lo.init.indices == std::vector<Index>{0, 1});
    cfg.criterion = "max";
    const LayerInit hi = build_layer_init(w0, 0, fin, cfg);
    CHECK(hi.init.indices == std::vector<Index>{0, 1});
}

TEST_CASE("min and max selections are disjoint on a spread spectrum") {
    RunConfig cfg = tiny_config();
    const Workspace ws = build_workspace(cfg);
    const Matrix& w0 = ws.model.linear(0).weight;
    // graded input moment gives distinct per-direction energies
    FinalizedFactors fin;
    fin.s_x = Matrix::Zero(4, 4);
    for (Index i = 0; i < 4; ++i) fin.s_x(i, i) = static_cast<double>(i + 1);
    fin.s_y = Matrix::Identity(6, 6);

    cfg.criterion = "min";
    const LayerInit lo = build_layer_init(w0, 0, fin, cfg);
    cfg.criterion = "max";
    const LayerInit hi = build_layer_init(w0, 0, fin, cfg);

    std::set<Index> lo_set(lo.init.indices.begin(), lo.init.indices.end());
    for (const Index j : hi.init.indices) CHECK(lo_set.count(j) == 0);
}

TEST_CASE("run_init artifacts satisfy the reconstruction invariant") {
    RunConfig cfg = tiny_config();
    TempDir dir("init");
    run_init(cfg, dir.str());

    const Workspace ws = build_workspace(cfg);
    for (const Index k : {Index{0}, Index{1}}) {
        const std::vector<Tensor> tensors =
            read_checkpoint(dir.str("init_layer" + std::to_string(k) + ".filt"));
        const Matrix a = matrix_from_tensor(find_tensor(tensors, "A"));
        const Matrix b = matrix_from_tensor(find_tensor(tensors, "B"));
        const Matrix w_res = matrix_from_tensor(find_tensor(tensors, "W_res"));
        const double scale = scalar_from_tensor(find_tensor(tensors, "scale"));
        const Matrix recon = w_res + scale * (b * a);
        CHECK((recon - ws.model.linear(k).weight).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("library runs are byte-deterministic") {
    RunConfig cfg = tiny_config();
    TempDir d1("det1");
    TempDir d2("det2");
    run_init(cfg, d1.str());
    run_init(cfg, d2.str());
    for (const char* name : {"energies_layer0.csv", "energies_layer1.csv",
                             "init_layer0.filt", "init_layer1.filt", "selection.filt"}) {
        CHECK(slurp(d1.str(name)) == slurp(d2.str(name)));
    }
}

TEST_CASE("lr zero training leaves metrics constant") {
    RunConfig cfg = tiny_config();
    cfg.train_lr = 0.0;
    const Workspace ws = build_workspace(cfg);
    const std::vector<LayerStats> stats = collect_stats(ws);
    std::vector<LoraInit> inits;
    for (const LayerStats& ls : stats) {
        inits.push_back(
            build_layer_init(ws.model.linear(ls.layer_id).weight, ls.layer_id, ls.finalized, cfg)
                .init);
    }
    const TrainResult tr = train_adapters(ws, inits, cfg.train_steps, 0.0, cfg.train_batch,
                                          false, mix_seed(cfg.seed, kTagTrain));
    REQUIRE(tr.metrics.rows.size() == static_cast<size_t>(cfg.train_steps) + 1);
    for (const auto& row : tr.metrics.rows) {
        CHECK(row[1] == tr.metrics.rows[0][1]);
        CHECK(row[2] == tr.metrics.rows[0][2]);
        CHECK(row[3] == tr.metrics.rows[0][3]);
    }
}

TEST_CASE("zero adapters on frozen weights are exactly stationary") {
    RunConfig cfg = tiny_config();
    const Workspace ws = build_workspace(cfg);
    LoraInit init;
    init.layer_id = 0;
    init.a = Matrix::Zero(2, 4);
    init.b = Matrix::Zero(6, 2);
    init.w_res = ws.model.linear(0).weight;
    init.scale = 1.0;
    init.rank = 2;
    std::vector<LoraInit> inits{init};
    const TrainResult tr =
        train_adapters(ws, inits, 10, 0.5, cfg.train_batch, false, 99);
    for (const auto& row : tr.metrics.rows) {
        CHECK(std::abs(std::stod(row[1]) - std::stod(tr.metrics.rows[0][1])) <= 1e-9);
    }
    CHECK(inits[0].a.cwiseAbs().maxCoeff() == 0.0);  // gradients vanish through B = 0
}

TEST_CASE("separable two-class blobs fine-tune to high accuracy") {
    RunConfig cfg = tiny_config();
    cfg.classes = 2;
    cfg.features = 6;
    cfg.hidden = {8};
    cfg.noise = 0.25;
    cfg.separation = 2.0;
    cfg.train_samples = 128;
    cfg.eval_samples = 64;
    cfg.pretrain_steps = 120;
    cfg.rank = 4;
    cfg.train_steps = 500;
    cfg.train_lr = 0.1;
    const Workspace ws = build_workspace(cfg);
    const std::vector<LayerStats> stats = collect_stats(ws);
    std::vector<LoraInit> inits;
    for (const LayerStats& ls : stats) {
        inits.push_back(
            build_layer_init(ws.model.linear(ls.layer_id).weight, ls.layer_id, ls.finalized, cfg)
                .init);
    }
    const TrainResult tr = train_adapters(ws, inits, cfg.train_steps, cfg.train_lr,
                                          cfg.train_batch, false, mix_seed(cfg.seed, kTagTrain));
    CHECK(tr.diverged_at_step == -1);
    CHECK(tr.final_eval_accuracy >= 0.95);
}

TEST_CASE("selection files round-trip and overlap matches set arithmetic") {
    TempDir dir("sel");
    SelectionSet s1;
    s1.rank = 3;
    s1.layer_ids = {0, 1};
    s1.indices = {{0, 2, 5}, {1, 2, 3}};
    s1.candidate_counts = {8, 6};
    write_selection(dir.str("s1.filt"), s1);
    const SelectionSet back = read_selection(dir.str("s1.filt"));
    CHECK(back.rank == 3);
    CHECK(back.indices == s1.indices);
    CHECK(back.candidate_counts == s1.candidate_counts);

    SelectionSet s2 = s1;
    s2.indices = {{2, 5, 7}, {0, 4, 5}};  // layer overlaps: 2/3 and 0/3
    const Matrix m = overlap_matrix({s1, s2});
    CHECK(m(0, 0) == 100.0);
    CHECK(m(1, 1) == 100.0);
    CHECK(m(0, 1) == m(1, 0));
    CHECK(m(0, 1) == doctest::Approx(100.0 * (2.0 / 3.0 + 0.0) / 2.0).epsilon(1e-12));

    SelectionSet s3 = s1;
    s3.indices = {{1, 3, 6}, {0, 4, 5}};  // fully disjoint from s1
    const Matrix z = overlap_matrix({s1, s3});
    CHECK(z(0, 1) == 0.0);

    SelectionSet bad = s1;
    bad.rank = 2;
    bad.indices = {{0, 2}, {1, 2}};
    CHECK_THROWS_AS(overlap_matrix({s1, bad}), std::invalid_argument);
}

TEST_CASE("seeded selection overlaps equal a brute-force set oracle") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Index candidates = 6 + static_cast<Index>(bounded_draw(rng, 6));
        const Index rank = 2 + static_cast<Index>(bounded_draw(rng, 3));
        auto random_set = [&] {
            SelectionSet s;
            s.rank = rank;
            s.layer_ids = {0, 1, 2};
            for (int k = 0; k < 3; ++k) {
                std::set<Index> chosen;
                while (static_cast<Index>(chosen.size()) < rank) {
                    chosen.insert(static_cast<Index>(bounded_draw(
                        rng, static_cast<std::uint64_t>(candidates))));
                }
                s.indices.emplace_back(chosen.begin(), chosen.end());
                s.candidate_counts.push_back(candidates);
            }
            return s;
        };
        const SelectionSet a = random_set();
        const SelectionSet b = random_set();
        const Matrix m = overlap_matrix({a, b});
        double expect = 0.0;
        for (int k = 0; k < 3; ++k) {
            int common = 0;
            for (const Index j : a.indices[static_cast<size_t>(k)]) {
                const auto& bk = b.indices[static_cast<size_t>(k)];
                common += std::find(bk.begin(), bk.end(), j) != bk.end();
            }
            expect += 100.0 * common / static_cast<double>(rank);
        }
        expect /= 3.0;
        CHECK(m(0, 1) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(m(1, 0) == m(0, 1));
    }
}

TEST_CASE("manifests and timing reports round-trip with required keys") {
    RunConfig cfg = tiny_config();
    TempDir dir("manifest");
    run_stats(cfg, dir.str());
    const Manifest m = read_manifest(dir.str("manifest.json"));
    CHECK(m.seed == cfg.seed);
    CHECK(m.tool_version == kToolVersion);
    CHECK(m.config_echo.at("init.rank") == "2");
    CHECK(m.phase_timings_ms.count("stats") == 1);
    CHECK(m.artifact_paths.size() == 2);  // two stats files

    run_timing(cfg, dir.str());
    const Manifest t = read_manifest(dir.str("timing.json"));
    for (const char* phase : {"stats", "basis", "energies", "selection", "factor_build"}) {
        CHECK(t.phase_timings_ms.count(phase) == 1);
    }
    CHECK(t.extras.at("peak_matrix_bytes") > 0);
}

TEST_CASE("preliminary study pairs modes and rejects oversized group grids") {
    RunConfig cfg = tiny_config();
    cfg.preliminary_groups = 4;  // layer 0 is 6x4, h = 4
    cfg.train_steps = 4;
    const std::vector<PreliminaryCell> cells = preliminary_study(cfg);
    REQUIRE(cells.size() == 8);
    for (size_t g = 0; g < 4; ++g) {
        CHECK(cells[g].mode == SigmaMode::min);
        CHECK(cells[g + 4].mode == SigmaMode::max);
        CHECK(cells[g].group == static_cast<Index>(g));
        CHECK(cells[g].group == cells[g + 4].group);
        CHECK(cells[g].group_energy == cells[g + 4].group_energy);
    }

    cfg.preliminary_groups = 5;
    CHECK_THROWS_WITH_AS(preliminary_study(cfg),
                         doctest::Contains("at most 4 groups"), std::invalid_argument);
}

TEST_CASE("preliminary csv orderings hold the same multiset of cells") {
    RunConfig cfg = tiny_config();
    cfg.preliminary_groups = 4;
    cfg.train_steps = 4;
    TempDir dir("prelim");
    run_preliminary(cfg, dir.str());

    const CsvTable by_sigma = read_csv(dir.str("preliminary_by_sigma.csv"));
    const CsvTable by_energy = read_csv(dir.str("preliminary_by_energy.csv"));
    REQUIRE(by_sigma.rows.size() == by_energy.rows.size());

    auto key_of = [](const std::vector<std::string>& row) {
        return row[0] + "|" + row[2] + "|" + row[4];  // group, mode, train loss
    };
    std::multiset<std::string> a, b;
    for (const auto& row : by_sigma.rows) a.insert(key_of(row));
    for (const auto& row : by_energy.rows) b.insert(key_of(row));
    CHECK(a == b);

    // energy ordering ascends within each mode block
    const size_t half = by_energy.rows.size() / 2;
    for (size_t i = 1; i < half; ++i) {
        CHECK(std::stod(by_energy.rows[i][3]) >= std::stod(by_energy.rows[i - 1][3]));
    }
    // start_index ascends in the sigma ordering
    for (size_t i = 1; i < half; ++i) {
        CHECK(std::stoll(by_sigma.rows[i][1]) > std::stoll(by_sigma.rows[i - 1][1]));
    }
}

TEST_CASE("ablate grid emits six cells per seed") {
    RunConfig cfg = tiny_config();
    cfg.train_steps = 4;
    const std::vector<AblateCell> cells = ablate_study(cfg);
    REQUIRE(cells.size() == 12);  // 2 seeds x 6 cells
    for (size_t i = 0; i < 6; ++i) CHECK(cells[i].seed == cfg.seed);
    for (size_t i = 6; i < 12; ++i) CHECK(cells[i].seed == cfg.seed + 1);
    std::set<std::string> kinds;
    for (size_t i = 0; i < 6; ++i) kinds.insert(cells[i].criterion + "/" + cells[i].scaling);
    CHECK(kinds.size() == 6);
}

TEST_CASE("train command records divergence in the manifest") {
    RunConfig cfg = tiny_config();
    cfg.train_lr = 1e9;  // guaranteed blow-up
    cfg.trainable = "full";
    cfg.train_steps = 50;
    TempDir dir("diverge");
    run_train(cfg, dir.str());
    const Manifest m = read_manifest(dir.str("manifest.json"));
    REQUIRE(m.extras.count("diverged_at_step") == 1);
    CHECK(m.extras.at("diverged_at_step") >= 0);
    const CsvTable metrics = read_csv(dir.str("metrics.csv"));
    CHECK(metrics.rows.size() < 51);
}

TEST_CASE("probe rows duplicate exactly for duplicated directions") {
    RunConfig cfg = tiny_config();
    const Workspace ws = build_workspace(cfg);
    const std::vector<LayerStats> stats = collect_stats(ws);
    const Matrix& w0 = ws.model.linear(0).weight;
    const SurrogateBasis basis = surrogate_basis(w0);

    const Batch full = full_train_batch(ws.data);
    const LossEval loss_eval = [&](const Matrix& w) {
        Model probe_model = ws.model;
        probe_model.linear(0).weight = w;
        return forward(probe_model, full).loss;
    };
    const Direction d{basis.u_hat.col(0), basis.v_hat.col(0)};
    const TaylorReport rep = taylor_report(loss_eval, w0, {d, d}, {1e-2, 1e-3},
                                           stats[0].finalized.s_x, stats[0].finalized.s_y);
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.rows[0].probe_over_gamma_sq == rep.rows[2].probe_over_gamma_sq);
    CHECK(rep.rows[1].half_factored_energy == rep.rows[3].half_factored_energy);
}
