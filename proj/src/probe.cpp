#include "livegraph/probe.hpp"

#include <algorithm>
#include <cmath>

namespace livegraph {

MarginalNet::MarginalNet(std::uint64_t seed) {
    Rng rng(seed, "marginal-init");
    A1 = rng.normal_mat(kPairFeatureDim, kPairFeatureDim, 0.0, 0.1);
    c1 = Vec::Zero(kPairFeatureDim);
    A2 = rng.normal_vec(kPairFeatureDim, 0.0, 0.1);
    c2 = 0.0;
}

double MarginalNet::forward(const Vec& features) const {
    const Vec h = (A1 * features + c1).cwiseMax(0.0);
    return sigmoid(A2.dot(h) + c2);
}

void MarginalNet::backward(const Vec& features, double g_out, Grad& g) const {
    const Vec pre = A1 * features + c1;
    const Vec h = pre.cwiseMax(0.0);
    const double out = sigmoid(A2.dot(h) + c2);
    const double g_pre_out = g_out * out * (1.0 - out);
    g.A2 += g_pre_out * h;
    g.c2 += g_pre_out;
    Vec g_h = g_pre_out * A2;
    for (int k = 0; k < kPairFeatureDim; ++k)
        if (pre(k) <= 0.0) g_h(k) = 0.0;
    g.A1 += g_h * features.transpose();
    g.c1 += g_h;
}

double mi_estimate(double s_ij, double p_hat) { return bernoulli_kl(s_ij, p_hat); }

Vec pair_features(int i, int j, const ConceptKernel& kernel) {
    Vec f = Vec::Zero(kPairFeatureDim);
    const int d = std::min(kernel.dim(), kPairFeatureDim);
    for (int k = 0; k < d; ++k) f(k) = std::abs(kernel.Z(i, k) - kernel.Z(j, k));
    return f;
}

PretrainReport pretrain_marginal(MarginalNet& net, const ConceptKernel& kernel, int steps,
                                 std::uint64_t seed, double lr) {
    PretrainReport report;
    report.steps = steps;
    const int m = kernel.num_concepts();
    if (m < 2 || steps <= 0) return report;
    Rng rng(seed, "marginal-pretrain");
    for (int t = 0; t < steps; ++t) {
        int i = static_cast<int>(rng.index(m));
        int j = static_cast<int>(rng.index(m));
        if (i == j) j = (j + 1) % m;
        if (i > j) std::swap(i, j);
        const Vec f = pair_features(i, j, kernel);
        const double target = kernel.similarity(i, j);
        const double out = net.forward(f);
        const double loss = (out - target) * (out - target);
        if (!std::isfinite(loss)) throw NumericalError("pretrain_marginal: loss diverged (NaN)");
        MarginalNet::Grad g;
        net.backward(f, 2.0 * (out - target), g);
        net.A1 -= lr * g.A1;
        net.c1 -= lr * g.c1;
        net.A2 -= lr * g.A2;
        net.c2 -= lr * g.c2;
        report.final_loss = loss;
    }
    return report;
}

PairSelection select_probe_pair(const ConceptKernel& kernel, const MarginalNet& net) {
    const int m = kernel.num_concepts();
    if (m < 2) throw std::invalid_argument("select_probe_pair: need at least two concepts");
    PairSelection best{0, 1, -1.0};
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const double p_hat = net.forward(pair_features(i, j, kernel));
            const double mi = mi_estimate(kernel.similarity(i, j), p_hat);
            if (mi > best.mi) best = {i, j, mi};
        }
    }
    return best;
}

ProbeInjection inject_contrastive_probe(std::vector<ScoredCandidate>& ranked,
                                        const PairSelection& pair,
                                        const ExerciseCatalog& catalog) {
    ProbeInjection inj;
    const Exercise* e = catalog.minimal_contrast(pair.i, pair.j);
    if (!e) {
        inj.skipped = true;
        return inj;
    }
    inj.record.pair_i = pair.i;
    inj.record.pair_j = pair.j;
    inj.record.mi = pair.mi;
    inj.record.exercise_id = e->id;
    for (const ScoredCandidate& c : ranked) inj.record.alternative_ids.push_back(c.exercise_id);
    ScoredCandidate probe;
    probe.exercise_id = e->id;
    probe.rank = static_cast<int>(ranked.size()) + 1;
    ranked.push_back(probe);  // appended after the top-K list
    return inj;
}

}  // namespace livegraph
