#pragma once

#include "livegraph/config.hpp"
#include "livegraph/log.hpp"
#include "livegraph/probe.hpp"
#include "livegraph/simlab.hpp"
#include "livegraph/training.hpp"

#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

namespace livegraph {

// Ranked-list cache keyed on (student_id, kernel version). An entry can never
// be served stale: a kernel update changes the version and thus the key.
class RecCache {
public:
    const std::vector<ScoredCandidate>* find(int student_id, std::uint64_t version);
    void put(int student_id, std::uint64_t version, std::vector<ScoredCandidate> list);

    std::uint64_t hits() const { return hits_; }
    std::uint64_t misses() const { return misses_; }

private:
    std::unordered_map<std::uint64_t, std::vector<ScoredCandidate>> map_;
    std::uint64_t hits_ = 0, misses_ = 0;
};

struct PhaseTimings {
    double encode_ms = 0.0;
    double score_ms = 0.0;
    double probe_ms = 0.0;
    double update_ms = 0.0;
    double total_ms = 0.0;
};

struct CycleResult {
    std::vector<ScoredCandidate> served;
    bool cache_hit = false;
    bool probed = false;
    int probe_i = -1, probe_j = -1;
    Vec lambda = Vec::Zero(3);
    PhaseTimings timings;
};

// The per-cycle online loop: cache check, encode, batch score, fuse with the
// policy's weights, top-K, probe select/inject, simulated responses, kernel
// update, cache write.
class OnlineEngine {
public:
    OnlineEngine(Model& model, const SyntheticWorld& world, const RunConfig& cfg, Variant variant);

    CycleResult cycle(int student_id);

    const InteractionLog& log(int student_id) const;
    RecCache& cache() { return cache_; }
    std::uint64_t cycles_run() const { return cycle_counter_; }
    int probes_committed() const { return probes_committed_; }
    double mean_reward() const;

    // Re-runs the scoring pass with the inputs captured at the student's
    // last cache write; used to verify cache-served lists bit-for-bit.
    std::vector<ScoredCandidate> fresh_rerank(int student_id) const;

private:
    struct ScoreSnapshot {
        Vec h;
        Vec lambda;
        std::set<int> covered;
        std::vector<int> pool_ids;
        std::uint64_t version = 0;
    };

    Vec student_h(int student_id) const;
    Vec fusion_weights(int student_id) const;
    std::vector<const Exercise*> candidate_pool(int student_id, std::uint64_t tick) const;
    std::set<int> covered_window(int student_id) const;

    // Best-MI pair restricted to pairs some exercise actually covers; the
    // fallback when the global argmax pair has no minimal-contrast exercise.
    PairSelection best_coverable_pair() const;

    Model& model_;
    const SyntheticWorld& world_;
    std::vector<std::pair<int, int>> coverable_pairs_;
    RunConfig cfg_;
    Variant variant_;
    RecCache cache_;
    std::map<int, InteractionLog> logs_;
    std::map<int, int> probes_used_;
    std::map<int, std::uint64_t> cycle_of_student_;
    std::map<int, ScoreSnapshot> snapshots_;
    std::uint64_t cycle_counter_ = 0;
    int probes_committed_ = 0;
    double reward_sum_ = 0.0;
    std::uint64_t reward_n_ = 0;
};

}  // namespace livegraph
