#pragma once

#include "livegraph/common.hpp"
#include "livegraph/kernel.hpp"
#include "livegraph/reranker.hpp"

#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

namespace livegraph {

inline constexpr int kPairFeatureDim = 32;

// Dual-layer perceptron 32 -> 32 -> 1, rectifier hidden, sigmoid output.
// Approximates the marginal likelihood p_hat(s_ij) of a concept connection.
struct MarginalNet {
    Mat A1;  // 32 x 32
    Vec c1;  // 32
    Vec A2;  // 32 (output row)
    double c2 = 0.0;

    MarginalNet() = default;
    explicit MarginalNet(std::uint64_t seed);

    double forward(const Vec& features) const;

    struct Grad {
        Mat A1 = Mat::Zero(kPairFeatureDim, kPairFeatureDim);
        Vec c1 = Vec::Zero(kPairFeatureDim);
        Vec A2 = Vec::Zero(kPairFeatureDim);
        double c2 = 0.0;
    };

    // d(output)/d(params) scaled by g_out, accumulated.
    void backward(const Vec& features, double g_out, Grad& g) const;
};

// Variational MI lower bound: Bernoulli KL between the kernel edge and the
// marginal estimate. Non-negative by Gibbs' inequality.
double mi_estimate(double s_ij, double p_hat);

// Elementwise |z_i - z_j| truncated / zero-padded to 32 entries.
Vec pair_features(int i, int j, const ConceptKernel& kernel);

struct PretrainReport {
    int steps = 0;
    double final_loss = 0.0;
};

// MSE regression of the net output onto current kernel marginals over
// uniformly sampled pairs, plain SGD with analytic backprop.
PretrainReport pretrain_marginal(MarginalNet& net, const ConceptKernel& kernel, int steps,
                                 std::uint64_t seed, double lr = 0.05);

struct PairSelection {
    int i = 0, j = 0;
    double mi = 0.0;
};

// Exhaustive argmax of mi_estimate over all i<j, lexicographic tie-break.
PairSelection select_probe_pair(const ConceptKernel& kernel, const MarginalNet& net);

struct ProbeRecord {
    int pair_i = 0, pair_j = 0;
    double mi = 0.0;
    int exercise_id = 0;
    std::vector<int> alternative_ids;  // other candidates considered for 2-AFC
    int response = -1;                 // filled after the student answers
    std::uint64_t version_before = 0, version_after = 0;
};

struct ProbeInjection {
    bool skipped = false;  // no exercise covers the pair
    ProbeRecord record;
};

// Picks the minimal-contrast exercise for the pair (exact {i,j} match first,
// then the smallest covering concept set, ties by id) and appends it to the
// ranked list. Skips with an event when nothing covers the pair.
ProbeInjection inject_contrastive_probe(std::vector<ScoredCandidate>& ranked,
                                        const PairSelection& pair, const ExerciseCatalog& catalog);

}  // namespace livegraph
