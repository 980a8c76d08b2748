#pragma once

#include "livegraph/checkpoint.hpp"
#include "livegraph/engine.hpp"

#include <map>
#include <string>
#include <vector>

namespace livegraph {

struct TraceRow {
    int step = 0;
    LossBreakdown loss;
    double wall_ms = 0.0;
};

TrainWeights weights_from_config(const RunConfig& cfg);

// One training list sampled from a student's held-in history.
RankTask make_rank_task(const SyntheticWorld& world, const RunConfig& cfg, const Model& model,
                        Rng& rng);

TrainBatch sample_batch(const Model& model, const SyntheticWorld& world, const RunConfig& cfg,
                        std::uint64_t step);

std::vector<TraceRow> train_model(Checkpoint& ckpt, const SyntheticWorld& world, Variant variant);

// Frozen-kernel ranking of the whole catalog for one student (theta = mu,
// proficiency filter disabled so every exercise receives a rank).
std::vector<int> rank_catalog(const Model& model, const SyntheticWorld& world,
                              const RunConfig& cfg, int student_id, Variant variant);

MetricReport evaluate_model(const Model& model, const SyntheticWorld& world, const RunConfig& cfg,
                            Variant variant);

struct RunOutcome {
    MetricReport report;
    double mean_reward = 0.0;
    int probes = 0;
    double mean_cycle_ms = 0.0;
    double mean_score_ms = 0.0;
    std::uint64_t cache_hits = 0;
};

// World -> offline training -> online probing session -> held-out evaluation.
RunOutcome run_variant(RunConfig cfg, std::uint64_t seed, Variant variant);

struct MetricRow {
    std::string run_id, variant, cohort, metric;
    int k = 0;
    std::uint64_t seed = 0;
    double value = 0.0;
};

std::vector<MetricRow> metric_rows(const std::string& run_id, const std::string& variant,
                                   std::uint64_t seed, const MetricReport& report);

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows,
                      std::uint64_t config_hash);
std::vector<MetricRow> read_metric_csv(const std::string& path,
                                       std::uint64_t* config_hash = nullptr);

using AblationTable = std::map<std::string, std::vector<RunOutcome>>;  // variant -> per-seed

AblationTable run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                           const std::vector<Variant>& variants);

std::vector<MetricRow> sweep(const RunConfig& cfg, const std::string& param,
                             const std::vector<std::string>& values,
                             const std::vector<std::uint64_t>& seeds);

// Hill-climbs the policy's uncertainty-head bias over candidate offsets,
// keeping the one with the best mean episode reward. Returns the offset kept.
double calibrate_unc_bias(Checkpoint& ckpt, const SyntheticWorld& world, const RunConfig& cfg,
                          const std::vector<double>& offsets, int cycles);

}  // namespace livegraph
