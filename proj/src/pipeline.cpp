#include "livegraph/pipeline.hpp"

#include "livegraph/meta_controller.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

namespace livegraph {

TrainWeights weights_from_config(const RunConfig& cfg) {
    TrainWeights w;
    w.lambda_vae = cfg.lambda_vae;
    w.lambda_ker = cfg.lambda_ker;
    w.lambda_meta = cfg.lambda_meta;
    w.omega_in_kernel_loss = cfg.omega_in_kernel_loss;
    w.std_stop_grad = cfg.std_stop_grad;
    w.inner_steps = cfg.inner_steps;
    w.inner_alpha = cfg.inner_alpha;
    return w;
}

namespace {

StudentProfile held_in_profile(const SyntheticWorld& world, int student_id, int holdout) {
    const StudentProfile& base = world.dataset.students.at(static_cast<std::size_t>(student_id));
    StudentProfile prof;
    prof.student_id = student_id;
    const std::size_t held_in =
        base.history.size() > static_cast<std::size_t>(holdout)
            ? base.history.size() - static_cast<std::size_t>(holdout)
            : 0;
    prof.history.assign(base.history.begin(), base.history.begin() + static_cast<long>(held_in));
    return prof;
}

InteractionLog log_from_history(const StudentProfile& prof) {
    InteractionLog log;
    for (const InteractionItem& it : prof.history) {
        InteractionRecord rec;
        rec.student_id = prof.student_id;
        rec.exercise_id = it.exercise_id;
        rec.correct = it.correct;
        rec.predicted_p = 0.5;
        rec.timestamp = it.timestamp;
        log.records.push_back(rec);
    }
    return log;
}

std::set<int> covered_from(const StudentProfile& prof, const ExerciseCatalog& catalog) {
    std::set<int> covered;
    const std::size_t n = prof.history.size();
    const std::size_t take = std::min<std::size_t>(n, 20);
    for (std::size_t i = n - take; i < n; ++i) {
        const Exercise& e = catalog.by_id(prof.history[i].exercise_id);
        covered.insert(e.concepts.begin(), e.concepts.end());
    }
    return covered;
}

}  // namespace

RankTask make_rank_task(const SyntheticWorld& world, const RunConfig& cfg, const Model& model,
                        Rng& rng) {
    const int S = world.dataset.num_students();
    int student = -1;
    std::size_t held_in = 0;
    for (int tries = 0; tries < 64; ++tries) {
        const int s = static_cast<int>(rng.index(static_cast<std::size_t>(S)));
        const StudentProfile prof = held_in_profile(world, s, cfg.holdout);
        if (prof.history.size() >= 2) {
            student = s;
            held_in = prof.history.size();
            break;
        }
    }
    if (student < 0) throw DataError("make_rank_task: no student with enough held-in history");

    const StudentProfile base = held_in_profile(world, student, cfg.holdout);
    const std::size_t t = 1 + rng.index(held_in - 1);

    RankTask task;
    task.profile.student_id = student;
    task.profile.history.assign(base.history.begin(), base.history.begin() + static_cast<long>(t));
    const int positive = base.history[t].exercise_id;

    const int E = world.dataset.num_exercises();
    const int list = std::min(cfg.list_size, E);
    std::set<int> chosen = {positive};
    while (static_cast<int>(chosen.size()) < list)
        chosen.insert(static_cast<int>(rng.index(static_cast<std::size_t>(E))));
    task.positive_index = static_cast<int>(rng.index(static_cast<std::size_t>(list)));
    std::vector<int> negatives;
    for (int id : chosen)
        if (id != positive) negatives.push_back(id);
    task.candidate_ids.assign(static_cast<std::size_t>(list), -1);
    task.candidate_ids[static_cast<std::size_t>(task.positive_index)] = positive;
    std::size_t at = 0;
    for (std::size_t c = 0; c < task.candidate_ids.size(); ++c)
        if (task.candidate_ids[c] < 0) task.candidate_ids[c] = negatives[at++];

    task.covered = covered_from(task.profile, world.dataset.catalog);
    task.state = build_state(log_from_history(task.profile), model.kernel);
    task.noise = rng.normal_vec(model.kernel.dim());
    return task;
}

TrainBatch sample_batch(const Model& model, const SyntheticWorld& world, const RunConfig& cfg,
                        std::uint64_t step) {
    Rng rng(cfg.seed, "batch", step);
    TrainBatch batch;
    for (int i = 0; i < cfg.batch_rank; ++i)
        batch.rank_tasks.push_back(make_rank_task(world, cfg, model, rng));

    const int M = model.kernel.num_concepts();
    if (M >= 2) {
        for (int i = 0; i < cfg.batch_probe; ++i) {
            int a = static_cast<int>(rng.index(static_cast<std::size_t>(M)));
            int b = static_cast<int>(rng.index(static_cast<std::size_t>(M - 1)));
            if (b >= a) ++b;
            ProbeObservation obs;
            obs.i = std::min(a, b);
            obs.j = std::max(a, b);
            obs.response = rng.bernoulli(world.S_star(obs.i, obs.j));
            batch.probe_records.push_back(obs);
        }
    }

    for (int m = 0; m < cfg.meta_batch; ++m) {
        MetaTask task;
        for (int i = 0; i < cfg.meta_support; ++i)
            task.support.push_back(make_rank_task(world, cfg, model, rng));
        for (int i = 0; i < cfg.meta_query; ++i)
            task.query.push_back(make_rank_task(world, cfg, model, rng));
        batch.meta_tasks.push_back(std::move(task));
    }
    return batch;
}

std::vector<TraceRow> train_model(Checkpoint& ckpt, const SyntheticWorld& world, Variant variant) {
    const TrainWeights w = weights_from_config(ckpt.config);
    std::vector<TraceRow> trace;
    trace.reserve(static_cast<std::size_t>(ckpt.config.train_steps));
    for (int step = 0; step < ckpt.config.train_steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        const TrainBatch batch =
            sample_batch(ckpt.model, world, ckpt.config, static_cast<std::uint64_t>(step));
        TraceRow row;
        row.step = step;
        row.loss = backward_and_step(ckpt.model, batch, world.dataset.catalog, variant, w,
                                     ckpt.opt);
        row.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        trace.push_back(row);
    }
    ckpt.kernel_version = ckpt.model.kernel.version();
    return trace;
}

std::vector<int> rank_catalog(const Model& model, const SyntheticWorld& world,
                              const RunConfig& cfg, int student_id, Variant variant) {
    const StudentProfile prof = held_in_profile(world, student_id, cfg.holdout);
    const ExerciseCatalog& catalog = world.dataset.catalog;

    Vec h;
    if (variant == Variant::NoVae) {
        const std::vector<int> hc = history_concepts(prof, catalog);
        if (hc.empty()) {
            h = model.kernel.Z.colwise().mean().transpose();
        } else {
            h = Vec::Zero(model.kernel.dim());
            for (int k : hc) h += model.kernel.Z.row(k).transpose();
            h /= static_cast<double>(hc.size());
        }
    } else {
        const EncodeResult enc = encode(model.priors, prof, catalog, model.vae);
        h = decode(enc.mu, model.kernel).h_plus;
    }

    Vec lam;
    if (variant == Variant::NoMeta) {
        lam = Vec::Constant(3, 1.0 / 3.0);
    } else {
        lam = model.policy.forward(build_state(log_from_history(prof), model.kernel));
        if (variant == Variant::NoUnc) {
            const double t = lam(0) + lam(1);
            Vec out(3);
            out << lam(0) / t, lam(1) / t, 0.0;
            lam = out;
        }
    }

    std::vector<const Exercise*> pool;
    for (const Exercise& e : catalog.all()) pool.push_back(&e);
    const RerankResult rr = rerank(pool, h, covered_from(prof, catalog), model.kernel, lam,
                                   static_cast<int>(pool.size()), ProficiencyBounds{0.0, 1.0});
    std::vector<int> ids;
    ids.reserve(rr.ranked.size());
    for (const ScoredCandidate& c : rr.ranked) ids.push_back(c.exercise_id);
    return ids;
}

MetricReport evaluate_model(const Model& model, const SyntheticWorld& world, const RunConfig& cfg,
                            Variant variant) {
    std::map<int, int> counts;
    for (const StudentProfile& s : world.dataset.students)
        counts[s.student_id] = static_cast<int>(s.history.size());
    const CohortSplit split = split_cohorts(counts);
    std::set<int> active(split.active_ids.begin(), split.active_ids.end());

    std::vector<StudentRanking> rankings;
    for (const StudentProfile& s : world.dataset.students) {
        StudentRanking r;
        r.student_id = s.student_id;
        r.relevant = holdout_set(s, cfg.holdout);
        r.active = active.count(s.student_id) > 0;
        if (!r.relevant.empty())
            r.ranked_ids = rank_catalog(model, world, cfg, s.student_id, variant);
        rankings.push_back(std::move(r));
    }
    return evaluate_rankings(rankings, world.dataset.catalog);
}

RunOutcome run_variant(RunConfig cfg, std::uint64_t seed, Variant variant) {
    cfg.seed = seed;
    cfg.variant = variant_name(variant);
    const SyntheticWorld world = generate_world(cfg.world, seed);

    Checkpoint ckpt(cfg);
    pretrain_marginal(ckpt.model.marginal, ckpt.model.kernel, cfg.marginal_pretrain, seed);
    train_model(ckpt, world, variant);

    RunOutcome out;
    if (cfg.online_cycles > 0) {
        OnlineEngine engine(ckpt.model, world, cfg, variant);
        double total_ms = 0.0, score_ms = 0.0;
        int scored = 0;
        for (int c = 0; c < cfg.online_cycles; ++c) {
            const int s = c % world.dataset.num_students();
            const CycleResult res = engine.cycle(s);
            total_ms += res.timings.total_ms;
            if (!res.cache_hit) {
                score_ms += res.timings.score_ms;
                ++scored;
            }
        }
        out.mean_reward = engine.mean_reward();
        out.probes = engine.probes_committed();
        out.mean_cycle_ms = total_ms / cfg.online_cycles;
        out.mean_score_ms = scored ? score_ms / scored : 0.0;
        out.cache_hits = engine.cache().hits();
    }
    out.report = evaluate_model(ckpt.model, world, cfg, variant);
    return out;
}

std::vector<MetricRow> metric_rows(const std::string& run_id, const std::string& variant,
                                   std::uint64_t seed, const MetricReport& report) {
    std::vector<MetricRow> rows;
    const struct {
        const char* name;
        const CohortMetrics* m;
    } cohorts[] = {{"overall", &report.overall},
                   {"active", &report.active},
                   {"inactive", &report.inactive}};
    for (const auto& [cname, cm] : cohorts) {
        const struct {
            const char* name;
            const std::array<double, 4>* vals;
        } metrics[] = {{"ndcg", &cm->ndcg},
                       {"recall", &cm->recall},
                       {"f1", &cm->f1},
                       {"div", &cm->div}};
        for (const auto& [mname, vals] : metrics)
            for (std::size_t c = 0; c < kMetricCutoffs.size(); ++c)
                rows.push_back(MetricRow{run_id, variant, cname, mname, kMetricCutoffs[c], seed,
                                         (*vals)[c]});
    }
    return rows;
}

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows,
                      std::uint64_t config_hash) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics: " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "run_id,variant,cohort,metric,k,seed,value\n";
    out.precision(17);
    for (const MetricRow& r : rows)
        out << r.run_id << ',' << r.variant << ',' << r.cohort << ',' << r.metric << ',' << r.k
            << ',' << r.seed << ',' << r.value << "\n";
}

std::vector<MetricRow> read_metric_csv(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metrics: " + path);
    std::vector<MetricRow> rows;
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# config_hash=", 0) == 0) {
            if (config_hash) *config_hash = std::stoull(line.substr(14));
            continue;
        }
        if (!saw_header) {
            if (line != "run_id,variant,cohort,metric,k,seed,value")
                throw DataError("bad metric CSV header: " + line);
            saw_header = true;
            continue;
        }
        std::stringstream ss(line);
        MetricRow r;
        std::string field;
        std::getline(ss, r.run_id, ',');
        std::getline(ss, r.variant, ',');
        std::getline(ss, r.cohort, ',');
        std::getline(ss, r.metric, ',');
        std::getline(ss, field, ',');
        r.k = std::stoi(field);
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        std::getline(ss, field, ',');
        r.value = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

AblationTable run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Variant>& variants) {
    AblationTable table;
    for (Variant v : variants) {
        std::vector<RunOutcome>& outs = table[variant_name(v)];
        for (std::uint64_t seed : seeds) outs.push_back(run_variant(cfg, seed, v));
    }
    return table;
}

std::vector<MetricRow> sweep(const RunConfig& cfg, const std::string& param,
                             const std::vector<std::string>& values,
                             const std::vector<std::uint64_t>& seeds) {
    std::vector<MetricRow> rows;
    for (const std::string& value : values) {
        RunConfig swept = cfg;
        swept.set(param, value);  // unknown parameter -> ConfigError
        const std::string run_id = param + "=" + value;
        for (std::uint64_t seed : seeds) {
            const RunOutcome out =
                run_variant(swept, seed, variant_from_name(swept.variant));
            const auto batch = metric_rows(run_id, swept.variant, seed, out.report);
            rows.insert(rows.end(), batch.begin(), batch.end());
        }
    }
    return rows;
}

double calibrate_unc_bias(Checkpoint& ckpt, const SyntheticWorld& world, const RunConfig& cfg,
                          const std::vector<double>& offsets, int cycles) {
    double best_offset = 0.0;
    double best_reward = -std::numeric_limits<double>::infinity();
    for (double off : offsets) {
        Model probe_model = ckpt.model;
        probe_model.policy.b2(2) += off;
        OnlineEngine engine(probe_model, world, cfg, variant_from_name(cfg.variant));
        for (int c = 0; c < cycles; ++c) engine.cycle(c % world.dataset.num_students());
        if (engine.mean_reward() > best_reward) {
            best_reward = engine.mean_reward();
            best_offset = off;
        }
    }
    ckpt.model.policy.b2(2) += best_offset;
    return best_offset;
}

}  // namespace livegraph
