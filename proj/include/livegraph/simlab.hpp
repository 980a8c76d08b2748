#pragma once

#include "livegraph/common.hpp"
#include "livegraph/reranker.hpp"
#include "livegraph/student_vae.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace livegraph {

struct InteractionRow {
    int student_id = 0;
    int exercise_id = 0;
    std::vector<int> concept_ids;
    int correct = 0;
    std::int64_t timestamp = 0;
    int probe = 0;
};

struct InteractionDataset {
    int num_concepts = 0;
    ExerciseCatalog catalog;
    std::vector<InteractionRow> rows;
    std::vector<StudentProfile> students;  // histories in row order, ascending id

    int num_students() const { return static_cast<int>(students.size()); }
    int num_exercises() const { return static_cast<int>(catalog.size()); }
    std::size_t num_interactions() const { return rows.size(); }
};

// Interaction CSV: student_id,exercise_id,concept_ids,correct,timestamp,probe
// with concept_ids semicolon-separated.
InteractionDataset load_dataset(const std::string& path);
void save_dataset(const InteractionDataset& dataset, const std::string& path);

struct WorldConfig {
    int num_concepts = 30;
    int clusters = 5;
    int num_exercises = 150;
    int num_students = 80;
    int concepts_min = 2;
    int concepts_max = 4;
    double bridge_fraction = 0.3;   // exercises spanning two adjacent clusters
    double bridge_pick_prob = 0.3;  // chance a history step lands on a bridge
    double pareto_alpha = 1.1;
    int min_history = 20;
    int max_history = 400;
    int steps_per_cluster = 40;  // history needed to advance one cluster
    double difficulty_sigma = 0.3;
    double within_s = 0.9;    // target S* inside a cluster
    double adjacent_s = 0.5;  // target S* across adjacent clusters
};

// Curriculum world: concepts fall into clusters along a line, exercises are
// within-cluster or bridge two adjacent clusters, students progress along the
// cluster sequence as their history grows. Mastery is an item-response style
// per-concept ability vector keyed off the student's frontier cluster.
struct SyntheticWorld {
    WorldConfig cfg;
    std::uint64_t seed = 0;
    Vec z_star;                   // per-concept position on the line
    Mat S_star;                   // ground-truth similarity, entries in (0,1)
    std::vector<int> cluster_of;  // concept -> cluster
    Vec difficulty;               // per exercise (by catalog order)
    std::vector<bool> is_bridge;  // per exercise
    Mat theta_star;               // num_students x M mastery at final frontier
    std::vector<int> frontier;    // per student
    InteractionDataset dataset;

    double s_star(int i, int j) const { return S_star(i, j); }
};

SyntheticWorld generate_world(const WorldConfig& cfg, std::uint64_t seed);

// sigma(theta*'x*_e - difficulty_e) with x*_e the normalized concept
// indicator of the exercise.
double response_probability(const SyntheticWorld& world, int student_id, int exercise_id);

// Bernoulli draw, deterministic in (world seed, student, exercise, step).
int simulate_response(const SyntheticWorld& world, int student_id, int exercise_id,
                      std::uint64_t step);

// Ground-truth answer to the 2-AFC probe on concept pair (i,j).
int simulate_probe_response(const SyntheticWorld& world, int i, int j, std::uint64_t step);

inline constexpr std::array<int, 4> kMetricCutoffs = {1, 3, 5, 10};

struct CohortMetrics {
    std::array<double, 4> ndcg{}, recall{}, f1{}, div{};
    int students = 0;
};

struct MetricReport {
    CohortMetrics overall, active, inactive;
    int excluded = 0;  // students with an empty held-out set
};

double ndcg_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k);
double recall_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k);
double f1_at_k(const std::vector<int>& ranked_ids, const std::set<int>& relevant, int k);
double div_at_k(const std::vector<int>& ranked_ids, const ExerciseCatalog& catalog, int k);

struct CohortSplit {
    std::vector<int> active_ids;
    std::vector<int> inactive_ids;
    bool degenerate = false;  // all counts tied at the median
};

// Strictly-above-median interaction count => active.
CohortSplit split_cohorts(const std::map<int, int>& counts_by_student);

struct StudentRanking {
    int student_id = 0;
    std::vector<int> ranked_ids;
    std::set<int> relevant;
    bool active = false;
};

MetricReport evaluate_rankings(const std::vector<StudentRanking>& rankings,
                               const ExerciseCatalog& catalog);

// Last `holdout` interactions per student (distinct exercise ids).
std::set<int> holdout_set(const StudentProfile& profile, int holdout = 10);

}  // namespace livegraph
