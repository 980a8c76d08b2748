#pragma once

#include "livegraph/common.hpp"
#include "livegraph/kernel.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <unordered_map>
#include <utility>
#include <vector>

namespace livegraph {

// All 2-combinations of a sorted unique index list, lexicographic, i < j.
std::vector<std::pair<int, int>> cover_set(const std::vector<int>& concepts);

struct Exercise {
    int id = 0;
    std::vector<int> concepts;  // sorted, unique concept indices

    const std::vector<std::pair<int, int>>& cover() const;

    // Mean of the concept embeddings, cached per kernel version.
    const Vec& embedding(const ConceptKernel& kernel) const;

private:
    mutable std::optional<std::vector<std::pair<int, int>>> cover_cache_;
    mutable Vec embedding_cache_;
    mutable std::uint64_t embedding_version_ = static_cast<std::uint64_t>(-1);
};

class ExerciseCatalog {
public:
    void add(Exercise e);
    const Exercise& by_id(int id) const;
    bool contains(int id) const;
    const std::vector<Exercise>& all() const { return exercises_; }
    std::size_t size() const { return exercises_.size(); }

    // Exercise whose concept set is exactly {i,j}; otherwise the smallest
    // superset containing both (ties by id); nullptr when none covers both.
    const Exercise* minimal_contrast(int i, int j) const;

private:
    std::vector<Exercise> exercises_;
    std::unordered_map<int, std::size_t> index_;
};

// U(e): sum of Bernoulli edge entropies over the cover set.
double subgraph_entropy(const Exercise& e, const ConceptKernel& kernel);

// phi_rel = sigmoid(h_plus . x_e)
double relevance(const Vec& h_plus, const Vec& x_e);

// phi_div = |K_e \ covered| / |K_e|
double diversity(const Exercise& e, const std::set<int>& covered);

// Batch z-score with population sigma; all-zero output for degenerate batches.
std::vector<double> standardize(const std::vector<double>& values);

// Backprop through standardize(). grad_out is dL/dy, returns dL/dx.
std::vector<double> standardize_backward(const std::vector<double>& values,
                                         const std::vector<double>& grad_out);

// Convex fusion of the three standardized signals. weights must be on the
// simplex within 1e-6.
double fuse(double rel_std, double div_std, double unc_std, const Vec& weights);

struct ScoredCandidate {
    int exercise_id = 0;
    double rel = 0.0, div = 0.0, unc = 0.0;              // raw signals
    double rel_std = 0.0, div_std = 0.0, unc_std = 0.0;  // standardized
    double fused = 0.0;
    int rank = 0;
};

struct RerankResult {
    std::vector<ScoredCandidate> ranked;  // top-K, descending fused score
    bool filter_bypassed = false;         // proficiency filter would empty pool
    bool k_truncated = false;             // K exceeded pool size
};

struct ProficiencyBounds {
    double p_min = 0.10;
    double p_max = 0.90;
};

// Keeps candidates with phi_rel in [p_min, p_max]; bypassed (flag set) when
// that would empty the pool.
std::vector<const Exercise*> proficiency_filter(const std::vector<const Exercise*>& pool,
                                                const Vec& h_plus, const ConceptKernel& kernel,
                                                ProficiencyBounds bounds, bool* bypassed);

// Full scoring phase: filter, compute raw signals over the whole batch,
// standardize, fuse with `weights`, sort descending with id tie-break.
// Read-only with respect to kernel state (the embedding cache is per
// exercise and version-tagged).
RerankResult rerank(const std::vector<const Exercise*>& pool, const Vec& h_plus,
                    const std::set<int>& covered, const ConceptKernel& kernel,
                    const Vec& weights, int K,
                    ProficiencyBounds bounds = ProficiencyBounds{});

}  // namespace livegraph
