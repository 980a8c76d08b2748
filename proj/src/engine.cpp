#include "livegraph/engine.hpp"

#include "livegraph/meta_controller.hpp"

#include <algorithm>
#include <chrono>

namespace livegraph {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::uint64_t cache_key(int student_id, std::uint64_t version) {
    return hash_combine(static_cast<std::uint64_t>(student_id), version);
}

}  // namespace

const std::vector<ScoredCandidate>* RecCache::find(int student_id, std::uint64_t version) {
    const auto it = map_.find(cache_key(student_id, version));
    if (it == map_.end()) {
        ++misses_;
        return nullptr;
    }
    ++hits_;
    return &it->second;
}

void RecCache::put(int student_id, std::uint64_t version, std::vector<ScoredCandidate> list) {
    map_[cache_key(student_id, version)] = std::move(list);
}

OnlineEngine::OnlineEngine(Model& model, const SyntheticWorld& world, const RunConfig& cfg,
                           Variant variant)
    : model_(model), world_(world), cfg_(cfg), variant_(variant) {
    std::set<std::pair<int, int>> pairs;
    for (const Exercise& e : world_.dataset.catalog.all())
        for (const auto& p : e.cover()) pairs.insert(p);
    coverable_pairs_.assign(pairs.begin(), pairs.end());
}

PairSelection OnlineEngine::best_coverable_pair() const {
    PairSelection best;
    best.mi = -1.0;
    for (const auto& [i, j] : coverable_pairs_) {
        const double s = model_.kernel.similarity(i, j);
        const double mi = mi_estimate(s, model_.marginal.forward(pair_features(i, j, model_.kernel)));
        if (mi > best.mi) {
            best.i = i;
            best.j = j;
            best.mi = mi;
        }
    }
    return best;
}

const InteractionLog& OnlineEngine::log(int student_id) const {
    static const InteractionLog empty;
    const auto it = logs_.find(student_id);
    return it == logs_.end() ? empty : it->second;
}

namespace {

// History visible online: the held-in prefix plus whatever this session
// already served.
StudentProfile session_profile(const SyntheticWorld& world, const InteractionLog& log,
                               int student_id, int holdout) {
    const StudentProfile& base = world.dataset.students.at(static_cast<std::size_t>(student_id));
    StudentProfile prof;
    prof.student_id = student_id;
    const std::size_t held_in =
        base.history.size() > static_cast<std::size_t>(holdout)
            ? base.history.size() - static_cast<std::size_t>(holdout)
            : 0;
    prof.history.assign(base.history.begin(),
                        base.history.begin() + static_cast<long>(held_in));
    for (const InteractionRecord& r : log.records)
        prof.history.push_back(InteractionItem{r.exercise_id, r.correct, r.timestamp});
    return prof;
}

}  // namespace

Vec OnlineEngine::student_h(int student_id) const {
    const StudentProfile prof =
        session_profile(world_, log(student_id), student_id, cfg_.holdout);
    if (variant_ == Variant::NoVae) {
        const std::vector<int> hc = history_concepts(prof, world_.dataset.catalog);
        if (hc.empty()) return model_.kernel.Z.colwise().mean().transpose();
        Vec h = Vec::Zero(model_.kernel.dim());
        for (int k : hc) h += model_.kernel.Z.row(k).transpose();
        return h / static_cast<double>(hc.size());
    }
    // Serving is deterministic: theta = mu.
    const EncodeResult enc = encode(model_.priors, prof, world_.dataset.catalog, model_.vae);
    return decode(enc.mu, model_.kernel).h_plus;
}

Vec OnlineEngine::fusion_weights(int student_id) const {
    if (variant_ == Variant::NoMeta) return Vec::Constant(3, 1.0 / 3.0);
    Vec lam = model_.policy.forward(build_state(log(student_id), model_.kernel));
    if (variant_ == Variant::NoUnc) {
        const double t = lam(0) + lam(1);
        Vec out(3);
        out << lam(0) / t, lam(1) / t, 0.0;
        return out;
    }
    return lam;
}

std::vector<const Exercise*> OnlineEngine::candidate_pool(int student_id,
                                                          std::uint64_t tick) const {
    const auto& all = world_.dataset.catalog.all();
    const int n = static_cast<int>(all.size());
    if (n <= cfg_.candidates) {
        std::vector<const Exercise*> pool;
        pool.reserve(all.size());
        for (const Exercise& e : all) pool.push_back(&e);
        return pool;
    }
    Rng rng(cfg_.seed, "pool", hash_combine(static_cast<std::uint64_t>(student_id), tick));
    std::vector<int> ids(all.size());
    for (int i = 0; i < n; ++i) ids[i] = i;
    for (int i = 0; i < cfg_.candidates; ++i) {
        const std::size_t j = i + rng.index(static_cast<std::size_t>(n - i));
        std::swap(ids[i], ids[j]);
    }
    std::vector<const Exercise*> pool;
    pool.reserve(cfg_.candidates);
    for (int i = 0; i < cfg_.candidates; ++i) pool.push_back(&all[ids[i]]);
    return pool;
}

std::set<int> OnlineEngine::covered_window(int student_id) const {
    const StudentProfile prof =
        session_profile(world_, log(student_id), student_id, cfg_.holdout);
    std::set<int> covered;
    const std::size_t n = prof.history.size();
    const std::size_t take = std::min<std::size_t>(n, 20);
    for (std::size_t i = n - take; i < n; ++i) {
        const Exercise& e = world_.dataset.catalog.by_id(prof.history[i].exercise_id);
        covered.insert(e.concepts.begin(), e.concepts.end());
    }
    return covered;
}

std::vector<ScoredCandidate> OnlineEngine::fresh_rerank(int student_id) const {
    const auto it = snapshots_.find(student_id);
    if (it == snapshots_.end()) throw DataError("fresh_rerank: student never scored");
    const ScoreSnapshot& snap = it->second;
    if (snap.version != model_.kernel.version())
        throw DataError("fresh_rerank: kernel advanced past the snapshot version");
    std::vector<const Exercise*> pool;
    pool.reserve(snap.pool_ids.size());
    for (int id : snap.pool_ids) pool.push_back(&world_.dataset.catalog.by_id(id));
    return rerank(pool, snap.h, snap.covered, model_.kernel, snap.lambda, cfg_.top_k,
                  ProficiencyBounds{cfg_.p_min, cfg_.p_max})
        .ranked;
}

CycleResult OnlineEngine::cycle(int student_id) {
    const auto t_total = std::chrono::steady_clock::now();
    CycleResult result;
    InteractionLog& log = logs_[student_id];
    const std::uint64_t version = model_.kernel.version();

    if (const auto* cached = cache_.find(student_id, version)) {
        result.served = *cached;
        result.cache_hit = true;
        result.lambda = fusion_weights(student_id);
    } else {
        auto t0 = std::chrono::steady_clock::now();
        const Vec h = student_h(student_id);
        result.timings.encode_ms = ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        result.lambda = fusion_weights(student_id);
        const std::uint64_t tick = cycle_of_student_[student_id];
        const auto pool = candidate_pool(student_id, tick);
        const std::set<int> covered = covered_window(student_id);
        result.served = rerank(pool, h, covered, model_.kernel, result.lambda, cfg_.top_k,
                               ProficiencyBounds{cfg_.p_min, cfg_.p_max})
                            .ranked;
        result.timings.score_ms = ms_since(t0);
        cache_.put(student_id, version, result.served);
        ScoreSnapshot snap;
        snap.h = h;
        snap.lambda = result.lambda;
        snap.covered = covered;
        for (const Exercise* e : pool) snap.pool_ids.push_back(e->id);
        snap.version = version;
        snapshots_[student_id] = std::move(snap);

        const bool gate_open = result.lambda(2) >= cfg_.probe_gate;
        if (variant_ != Variant::NoProbe && gate_open &&
            probes_used_[student_id] < cfg_.probe_budget && model_.kernel.num_concepts() >= 2) {
            t0 = std::chrono::steady_clock::now();
            if (cfg_.marginal_refresh > 0 && cycle_counter_ % cfg_.marginal_refresh == 0)
                pretrain_marginal(model_.marginal, model_.kernel, cfg_.marginal_pretrain,
                                  hash_combine(cfg_.seed, cycle_counter_));
            PairSelection pair = select_probe_pair(model_.kernel, model_.marginal);
            ProbeInjection inj =
                inject_contrastive_probe(result.served, pair, world_.dataset.catalog);
            if (inj.skipped && !coverable_pairs_.empty()) {
                pair = best_coverable_pair();
                inj = inject_contrastive_probe(result.served, pair, world_.dataset.catalog);
            }
            result.timings.probe_ms = ms_since(t0);
            if (!inj.skipped) {
                t0 = std::chrono::steady_clock::now();
                const int a_star =
                    simulate_probe_response(world_, pair.i, pair.j, cycle_counter_);
                // Online corrections use the pair NLL alone; the full-matrix
                // regularizer would swamp single-pair evidence over a session.
                model_.kernel.update(pair.i, pair.j, a_star, false);
                result.timings.update_ms = ms_since(t0);
                result.probed = true;
                result.probe_i = pair.i;
                result.probe_j = pair.j;
                ++probes_used_[student_id];
                ++probes_committed_;

                InteractionRecord rec;
                rec.student_id = student_id;
                rec.exercise_id = inj.record.exercise_id;
                rec.predicted_p = model_.kernel.similarity(pair.i, pair.j);
                rec.correct = a_star;
                rec.timestamp = static_cast<std::int64_t>(log.records.size());
                rec.probe = true;
                log.records.push_back(rec);
            }
        }
        ++cycle_of_student_[student_id];
    }

    // Serve the top exercise and observe the simulated response.
    if (!result.served.empty()) {
        const ScoredCandidate& top = result.served.front();
        InteractionRecord rec;
        rec.student_id = student_id;
        rec.exercise_id = top.exercise_id;
        rec.predicted_p = top.rel;
        rec.correct = simulate_response(world_, student_id, top.exercise_id, cycle_counter_);
        rec.timestamp = static_cast<std::int64_t>(log.records.size());
        log.records.push_back(rec);

        CycleRecord cyc;
        double sr = 0.0, sd = 0.0, su = 0.0;
        std::vector<int> served_ids;
        for (const ScoredCandidate& c : result.served) {
            sr += c.rel;
            sd += c.div;
            su += c.unc;
            served_ids.push_back(c.exercise_id);
        }
        const double n = static_cast<double>(result.served.size());
        cyc.mean_rel = sr / n;
        cyc.mean_div = sd / n;
        cyc.mean_unc = su / n;
        cyc.acc1 = acc_at_1(log.records);
        cyc.h_norm = model_.kernel.normalized_entropy();
        cyc.dh = log.cycles.empty() ? 0.0 : cyc.h_norm - log.cycles.back().h_norm;
        cyc.nq_norm = probes_used_[student_id] / 20.0;
        cyc.log_hist = std::log1p(static_cast<double>(log.records.size()));
        cyc.div_at_k = div_at_k(served_ids, world_.dataset.catalog, cfg_.top_k);
        log.cycles.push_back(cyc);

        const RewardSpec spec{cfg_.gamma1, cfg_.gamma2, cfg_.gamma3};
        reward_sum_ += reward(cyc.mean_rel, cyc.h_norm, probes_used_[student_id], spec);
        ++reward_n_;
    }

    ++cycle_counter_;
    result.timings.total_ms = ms_since(t_total);
    return result;
}

double OnlineEngine::mean_reward() const {
    return reward_n_ == 0 ? 0.0 : reward_sum_ / static_cast<double>(reward_n_);
}

}  // namespace livegraph
