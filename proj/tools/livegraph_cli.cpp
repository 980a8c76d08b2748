#include "livegraph/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace livegraph;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out = "out";
    std::uint64_t seed_override = 0;
    bool seed_set = false;
};

RunConfig build_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
    if (const char* env = std::getenv("LIVEGRAPH_SEED")) cfg.set("seed", env);
    for (const std::string& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed_set) cfg.seed = opts.seed_override;
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key=value config file");
    cmd->add_option("--set", opts.overrides, "override a config key (key=value)")
        ->take_all();
    cmd->add_option("--out", opts.out, "output path prefix");
    cmd->add_option("--seed", opts.seed_override, "override the run seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

void write_trace(const std::string& path, const std::vector<TraceRow>& trace,
                 std::uint64_t config_hash) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace: " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "step,loss_rank,loss_vae,loss_kernel,loss_maml,loss_total,"
           "grad_kernel,grad_vae,grad_policy,clipped,wall_ms\n";
    out.precision(17);
    for (const TraceRow& r : trace)
        out << r.step << ',' << r.loss.rank << ',' << r.loss.vae << ',' << r.loss.kernel << ','
            << r.loss.maml << ',' << r.loss.total << ',' << r.loss.grad_norm_kernel << ','
            << r.loss.grad_norm_vae << ',' << r.loss.grad_norm_policy << ','
            << (r.loss.clipped ? 1 : 0) << ',' << r.wall_ms << "\n";
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec, std::uint64_t fallback) {
    if (spec.empty()) return {fallback};
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    return seeds;
}

void print_report(const MetricReport& rep) {
    auto line = [](const char* name, const CohortMetrics& m) {
        std::printf("%-9s n=%-4d", name, m.students);
        for (std::size_t c = 0; c < kMetricCutoffs.size(); ++c)
            std::printf("  ndcg@%d=%.4f", kMetricCutoffs[c], m.ndcg[c]);
        std::printf("\n");
    };
    line("overall", rep.overall);
    line("active", rep.active);
    line("inactive", rep.inactive);
    if (rep.excluded) std::printf("excluded (empty held-out): %d\n", rep.excluded);
}

int cmd_train(const CommonOpts& opts) {
    const RunConfig cfg = build_config(opts);
    const SyntheticWorld world = generate_world(cfg.world, cfg.seed);
    Checkpoint ckpt(cfg);
    pretrain_marginal(ckpt.model.marginal, ckpt.model.kernel, cfg.marginal_pretrain, cfg.seed);
    const auto trace = train_model(ckpt, world, variant_from_name(cfg.variant));
    save_checkpoint(ckpt, opts.out + ".ckpt");
    write_trace(opts.out + "_trace.csv", trace, cfg.hash());
    std::printf("trained %d steps, checkpoint %s.ckpt, final loss %.6f\n", cfg.train_steps,
                opts.out.c_str(), trace.empty() ? 0.0 : trace.back().loss.total);
    return 0;
}

int cmd_simulate(const CommonOpts& opts, const std::string& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!opts.config_path.empty() || !opts.overrides.empty()) {
        const RunConfig requested = build_config(opts);
        if (requested.hash() != ckpt.config.hash())
            throw ConfigError("config mismatch: requested hash " +
                              std::to_string(requested.hash()) + " vs checkpoint hash " +
                              std::to_string(ckpt.config.hash()));
    }
    const RunConfig& cfg = ckpt.config;
    const SyntheticWorld world = generate_world(cfg.world, cfg.seed);
    OnlineEngine engine(ckpt.model, world, cfg, variant_from_name(cfg.variant));
    double total_ms = 0.0;
    for (int c = 0; c < cfg.online_cycles; ++c) {
        const CycleResult res = engine.cycle(c % world.dataset.num_students());
        total_ms += res.timings.total_ms;
    }
    std::ofstream out(opts.out + "_interactions.csv");
    out << "# config_hash=" << cfg.hash() << "\n";
    out << "student_id,exercise_id,concept_ids,correct,timestamp,probe\n";
    for (const StudentProfile& s : world.dataset.students) {
        for (const InteractionRecord& r : engine.log(s.student_id).records) {
            const Exercise& e = world.dataset.catalog.by_id(r.exercise_id);
            out << r.student_id << ',' << r.exercise_id << ',';
            for (std::size_t i = 0; i < e.concepts.size(); ++i)
                out << (i ? ";" : "") << e.concepts[i];
            out << ',' << r.correct << ',' << r.timestamp << ',' << (r.probe ? 1 : 0) << "\n";
        }
    }
    std::printf("cycles=%llu probes=%d cache_hits=%llu mean_cycle_ms=%.2f mean_reward=%.4f\n",
                static_cast<unsigned long long>(engine.cycles_run()), engine.probes_committed(),
                static_cast<unsigned long long>(engine.cache().hits()),
                cfg.online_cycles ? total_ms / cfg.online_cycles : 0.0, engine.mean_reward());
    return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    const RunConfig& cfg = ckpt.config;
    const SyntheticWorld world = generate_world(cfg.world, cfg.seed);
    const Variant variant = variant_from_name(cfg.variant);
    const MetricReport rep = evaluate_model(ckpt.model, world, cfg, variant);
    write_metric_csv(opts.out + "_metrics.csv",
                     metric_rows("evaluate", cfg.variant, cfg.seed, rep), cfg.hash());
    print_report(rep);
    return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& seeds_spec) {
    const RunConfig cfg = build_config(opts);
    const auto seeds = parse_seeds(seeds_spec, cfg.seed);
    const std::vector<Variant> variants = {Variant::Full, Variant::NoVae, Variant::NoUnc,
                                           Variant::NoProbe, Variant::NoMeta};
    const AblationTable table = run_ablation(cfg, seeds, variants);
    std::vector<MetricRow> rows;
    for (const auto& [vname, outs] : table)
        for (std::size_t i = 0; i < outs.size(); ++i) {
            const auto batch = metric_rows("ablate", vname, seeds[i], outs[i].report);
            rows.insert(rows.end(), batch.begin(), batch.end());
        }
    write_metric_csv(opts.out + "_ablation.csv", rows, cfg.hash());
    for (const auto& [vname, outs] : table) {
        double mean = 0.0;
        for (const RunOutcome& o : outs) mean += o.report.overall.ndcg[2];
        std::printf("%-16s ndcg@5=%.4f (%zu seeds)\n", vname.c_str(), mean / outs.size(),
                    outs.size());
    }
    return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& param, const std::string& values_spec,
              const std::string& seeds_spec) {
    const RunConfig cfg = build_config(opts);
    const auto seeds = parse_seeds(seeds_spec, cfg.seed);
    std::vector<std::string> values;
    std::stringstream ss(values_spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(tok);
    if (values.empty()) throw ConfigError("sweep: no values given");
    const auto rows = sweep(cfg, param, values, seeds);
    write_metric_csv(opts.out + "_sweep.csv", rows, cfg.hash());
    std::printf("sweep over %s: %zu values x %zu seeds -> %zu rows\n", param.c_str(),
                values.size(), seeds.size(), rows.size());
    return 0;
}

int cmd_inspect(const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Model& m = ckpt.model;
    std::printf("config_hash=%llu\n", static_cast<unsigned long long>(ckpt.config.hash()));
    std::printf("kernel: M=%d d=%d version=%llu b=%.6f\n", m.kernel.num_concepts(),
                m.kernel.dim(), static_cast<unsigned long long>(ckpt.kernel_version), m.kernel.b);
    std::printf("vae: W_enc %ldx%ld beta=%.3f\n", static_cast<long>(m.vae.W_enc.rows()),
                static_cast<long>(m.vae.W_enc.cols()), m.vae.beta);
    std::printf("policy: W1 %ldx%ld W2 %ldx%ld\n", static_cast<long>(m.policy.W1.rows()),
                static_cast<long>(m.policy.W1.cols()), static_cast<long>(m.policy.W2.rows()),
                static_cast<long>(m.policy.W2.cols()));
    std::printf("optimizer: steps=%ld params=%ld\n", ckpt.opt.step_count,
                static_cast<long>(ckpt.opt.m.size()));
    std::printf("--- config ---\n%s", ckpt.config.serialize().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"active-structure exercise re-ranking engine"};
    app.require_subcommand(1);

    CommonOpts train_o, sim_o, eval_o, abl_o, sweep_o;
    std::string sim_ckpt, eval_ckpt, inspect_ckpt;
    std::string abl_seeds, sweep_seeds, sweep_param, sweep_values;

    auto* train = app.add_subcommand("train", "joint offline optimization");
    add_common(train, train_o);

    auto* sim = app.add_subcommand("simulate", "online re-ranking and probing loop");
    add_common(sim, sim_o);
    sim->add_option("--checkpoint", sim_ckpt, "trained checkpoint")->required();

    auto* eval = app.add_subcommand("evaluate", "held-out ranking metrics");
    add_common(eval, eval_o);
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();

    auto* abl = app.add_subcommand("ablate", "variant comparison on paired seeds");
    add_common(abl, abl_o);
    abl->add_option("--seeds", abl_seeds, "comma-separated seed list");

    auto* sw = app.add_subcommand("sweep", "sensitivity sweep over one config key");
    add_common(sw, sweep_o);
    sw->add_option("--param", sweep_param, "config key to sweep")->required();
    sw->add_option("--values", sweep_values, "comma-separated values")->required();
    sw->add_option("--seeds", sweep_seeds, "comma-separated seed list");

    auto* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint contents");
    inspect->add_option("checkpoint", inspect_ckpt, "checkpoint path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_o);
        if (sim->parsed()) return cmd_simulate(sim_o, sim_ckpt);
        if (eval->parsed()) return cmd_evaluate(eval_o, eval_ckpt);
        if (abl->parsed()) return cmd_ablate(abl_o, abl_seeds);
        if (sw->parsed()) return cmd_sweep(sweep_o, sweep_param, sweep_values, sweep_seeds);
        if (inspect->parsed()) return cmd_inspect(inspect_ckpt);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
