#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "livegraph/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace livegraph;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.world.num_concepts = 10;
    cfg.world.clusters = 2;
    cfg.world.num_exercises = 24;
    cfg.world.num_students = 8;
    cfg.world.min_history = 20;
    cfg.world.max_history = 60;
    cfg.world.steps_per_cluster = 20;
    cfg.dim = 6;
    cfg.prior_dim = 16;
    cfg.train_steps = 5;
    cfg.batch_rank = 4;
    cfg.list_size = 8;
    cfg.batch_probe = 4;
    cfg.meta_batch = 1;
    cfg.meta_support = 1;
    cfg.meta_query = 1;
    cfg.inner_steps = 1;
    cfg.marginal_pretrain = 50;
    cfg.online_cycles = 10;
    cfg.candidates = 24;
    cfg.top_k = 5;
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_list(const std::vector<ScoredCandidate>& a, const std::vector<ScoredCandidate>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].exercise_id != b[i].exercise_id) return false;
        if (a[i].fused != b[i].fused) return false;
        if (a[i].rel != b[i].rel || a[i].div != b[i].div || a[i].unc != b[i].unc) return false;
        if (a[i].rank != b[i].rank) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config keys round trip through text with a stable hash") {
    RunConfig cfg;
    cfg.set("world.num_concepts", "12");
    cfg.set("train.steps", "77");
    cfg.set("probe.gate", "0.125");
    cfg.set("train.omega_in_kernel_loss", "false");
    cfg.set("variant", "no_graph_vae");
    cfg.set("seed", "999");
    const RunConfig back = parse_config_text(cfg.serialize());
    CHECK(back.world.num_concepts == 12);
    CHECK(back.train_steps == 77);
    CHECK(back.probe_gate == 0.125);
    CHECK_FALSE(back.omega_in_kernel_loss);
    CHECK(back.variant == "no_graph_vae");
    CHECK(back.hash() == cfg.hash());
    CHECK(back.hash() != RunConfig{}.hash());
}

TEST_CASE("config rejects unknown keys and malformed values") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("train.stepz", "10"), ConfigError);
    CHECK_THROWS_AS(cfg.set("train.steps", "ten"), ConfigError);
    CHECK_THROWS_AS(cfg.set("probe.gate", "0.1x"), ConfigError);
    CHECK_THROWS_AS(cfg.set("train.std_stop_grad", "maybe"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("train.steps\n"), ConfigError);
    CHECK_NOTHROW(parse_config_text("# comment\n\n  train.steps=3\n"));
    const auto keys = config_keys();
    CHECK(std::find(keys.begin(), keys.end(), "seed") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "kernel.eta") != keys.end());
}

TEST_CASE("checkpoints round trip bit for bit") {
    RunConfig cfg = tiny_config();
    Checkpoint ckpt(cfg);
    // dirty the optimizer and parameters so the state is non-trivial
    const SyntheticWorld world = generate_world(cfg.world, 5);
    train_model(ckpt, world, Variant::Full);

    const std::string p1 = "/tmp/livegraph_ckpt_a.bin", p2 = "/tmp/livegraph_ckpt_b.bin";
    save_checkpoint(ckpt, p1);
    const Checkpoint back = load_checkpoint(p1);
    CHECK(pack_params(back.model) == pack_params(ckpt.model));
    CHECK(back.opt.m == ckpt.opt.m);
    CHECK(back.opt.v == ckpt.opt.v);
    CHECK(back.opt.step_count == ckpt.opt.step_count);
    CHECK(back.kernel_version == ckpt.kernel_version);
    CHECK(back.config.hash() == ckpt.config.hash());
    CHECK(back.model.marginal.A1 == ckpt.model.marginal.A1);
    save_checkpoint(back, p2);
    CHECK(read_file(p1) == read_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoint loading refuses foreign or mismatched files") {
    const std::string path = "/tmp/livegraph_ckpt_bad.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPTxxxxxxxxxxxxxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);

    Checkpoint ckpt(tiny_config());
    save_checkpoint(ckpt, path);
    std::string bytes = read_file(path);
    bytes[8] = static_cast<char>(bytes[8] + 1);  // bump the format version field
    {
        std::ofstream out(path, std::ios::binary);
        out << bytes;
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    CHECK_THROWS_AS(load_checkpoint("/tmp/livegraph_ckpt_missing.bin"), DataError);
    std::remove(path.c_str());
}

TEST_CASE("cache serves repeat requests and matches a fresh scoring pass") {
    RunConfig cfg = tiny_config();
    const SyntheticWorld world = generate_world(cfg.world, 21);
    Checkpoint ckpt(cfg);
    OnlineEngine engine(ckpt.model, world, cfg, Variant::NoProbe);

    CHECK_THROWS_AS(engine.fresh_rerank(0), DataError);  // never scored
    const CycleResult r1 = engine.cycle(0);
    CHECK_FALSE(r1.cache_hit);
    const CycleResult r2 = engine.cycle(0);
    CHECK(r2.cache_hit);
    CHECK(same_list(r1.served, r2.served));
    CHECK(engine.cache().hits() == 1);

    const auto fresh = engine.fresh_rerank(0);
    CHECK(same_list(r1.served, fresh));
}

TEST_CASE("a committed probe invalidates every cached list") {
    RunConfig cfg = tiny_config();
    cfg.probe_gate = 0.0;  // probe whenever the budget allows
    const SyntheticWorld world = generate_world(cfg.world, 23);
    Checkpoint ckpt(cfg);
    OnlineEngine engine(ckpt.model, world, cfg, Variant::Full);

    const CycleResult r1 = engine.cycle(0);
    CHECK_FALSE(r1.cache_hit);
    if (r1.probed) {
        // the kernel moved, so the snapshot is stale and the key rotated
        CHECK_THROWS_AS(engine.fresh_rerank(0), DataError);
        const CycleResult r2 = engine.cycle(0);
        CHECK_FALSE(r2.cache_hit);
    }
    CHECK(engine.probes_committed() > 0);
}

TEST_CASE("metric CSV round trips without loss") {
    std::vector<MetricRow> rows = {{"run-a", "full", "overall", "ndcg", 5, 3, 0.123456789012345},
                                   {"run-a", "full", "active", "recall", 10, 3, 1.0 / 3.0},
                                   {"run-b", "no_meta_rl", "inactive", "f1", 1, 4, 0.0}};
    const std::string path = "/tmp/livegraph_metrics.csv";
    write_metric_csv(path, rows, 0xabcdef12ULL);
    std::uint64_t hash = 0;
    const auto back = read_metric_csv(path, &hash);
    CHECK(hash == 0xabcdef12ULL);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].run_id == rows[i].run_id);
        CHECK(back[i].variant == rows[i].variant);
        CHECK(back[i].cohort == rows[i].cohort);
        CHECK(back[i].metric == rows[i].metric);
        CHECK(back[i].k == rows[i].k);
        CHECK(back[i].seed == rows[i].seed);
        CHECK(back[i].value == rows[i].value);  // full precision survives
    }
    std::remove(path.c_str());
}

TEST_CASE("training emits one trace row per step with finite losses") {
    RunConfig cfg = tiny_config();
    const SyntheticWorld world = generate_world(cfg.world, 31);
    Checkpoint ckpt(cfg);
    const auto trace = train_model(ckpt, world, Variant::Full);
    REQUIRE(trace.size() == static_cast<std::size_t>(cfg.train_steps));
    for (const TraceRow& row : trace) CHECK(std::isfinite(row.loss.total));
    CHECK(ckpt.opt.step_count == cfg.train_steps);
}

TEST_CASE("an identical configuration replays the whole pipeline bit for bit") {
    RunConfig cfg = tiny_config();
    const RunOutcome a = run_variant(cfg, 37, Variant::Full);
    const RunOutcome b = run_variant(cfg, 37, Variant::Full);
    CHECK(a.mean_reward == b.mean_reward);
    CHECK(a.probes == b.probes);
    const auto ra = metric_rows("r", "full", 37, a.report);
    const auto rb = metric_rows("r", "full", 37, b.report);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].value == rb[i].value);

    const std::string p1 = "/tmp/livegraph_det_a.csv", p2 = "/tmp/livegraph_det_b.csv";
    write_metric_csv(p1, ra, cfg.hash());
    write_metric_csv(p2, rb, cfg.hash());
    CHECK(read_file(p1) == read_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("ablation runs every requested variant and seed") {
    RunConfig cfg = tiny_config();
    cfg.online_cycles = 4;
    const AblationTable table = run_ablation(cfg, {41, 42}, {Variant::Full, Variant::NoProbe});
    REQUIRE(table.size() == 2);
    CHECK(table.at("full").size() == 2);
    CHECK(table.at("no_active_probe").size() == 2);
    for (const RunOutcome& out : table.at("no_active_probe")) CHECK(out.probes == 0);
}

TEST_CASE("sweeps label rows by parameter value and reject unknown parameters") {
    RunConfig cfg = tiny_config();
    cfg.online_cycles = 2;
    const auto rows = sweep(cfg, "vae.beta", {"0.05", "0.5"}, {43});
    CHECK(rows.size() == 2 * 48);  // 3 cohorts x 4 metrics x 4 cutoffs per run
    CHECK(rows.front().run_id == "vae.beta=0.05");
    CHECK(rows.back().run_id == "vae.beta=0.5");
    CHECK_THROWS_AS(sweep(cfg, "vae.betta", {"0.1"}, {43}), ConfigError);
}

TEST_CASE("a heavier probe penalty calibrates the uncertainty head downward") {
    RunConfig cheap = tiny_config();
    cheap.online_cycles = 0;
    const std::vector<double> offsets = {-4.0, 0.0};
    double sum_default = 0.0, sum_penalized = 0.0;
    for (std::uint64_t seed : {51ULL, 52ULL, 53ULL}) {
        const SyntheticWorld world = generate_world(cheap.world, seed);
        RunConfig low = cheap;
        Checkpoint c1(low);
        sum_default += calibrate_unc_bias(c1, world, low, offsets, 16);

        RunConfig high = cheap;
        high.gamma3 = 1.0;
        Checkpoint c2(high);
        sum_penalized += calibrate_unc_bias(c2, world, high, offsets, 16);
    }
    CHECK(sum_penalized <= sum_default);
    CHECK(sum_penalized < 0.0);  // the penalty must bite on at least one world
}
