#include "livegraph/reranker.hpp"

#include <algorithm>
#include <cmath>

namespace livegraph {

std::vector<std::pair<int, int>> cover_set(const std::vector<int>& concepts) {
    std::vector<std::pair<int, int>> pairs;
    const std::size_t n = concepts.size();
    if (n < 2) return pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(concepts[a], concepts[b]);
    return pairs;
}

const std::vector<std::pair<int, int>>& Exercise::cover() const {
    if (!cover_cache_) cover_cache_ = cover_set(concepts);
    return *cover_cache_;
}

const Vec& Exercise::embedding(const ConceptKernel& kernel) const {
    if (embedding_version_ != kernel.version() || embedding_cache_.size() != kernel.dim()) {
        Vec x = Vec::Zero(kernel.dim());
        for (int k : concepts) x += kernel.Z.row(k).transpose();
        embedding_cache_ = x / static_cast<double>(concepts.size());
        embedding_version_ = kernel.version();
    }
    return embedding_cache_;
}

void ExerciseCatalog::add(Exercise e) {
    if (e.concepts.empty()) throw DataError("exercise " + std::to_string(e.id) + " has no concepts");
    std::sort(e.concepts.begin(), e.concepts.end());
    e.concepts.erase(std::unique(e.concepts.begin(), e.concepts.end()), e.concepts.end());
    if (index_.count(e.id)) throw DataError("duplicate exercise id " + std::to_string(e.id));
    index_[e.id] = exercises_.size();
    exercises_.push_back(std::move(e));
}

const Exercise& ExerciseCatalog::by_id(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("unknown exercise id " + std::to_string(id));
    return exercises_[it->second];
}

bool ExerciseCatalog::contains(int id) const { return index_.count(id) > 0; }

const Exercise* ExerciseCatalog::minimal_contrast(int i, int j) const {
    const Exercise* best = nullptr;
    for (const Exercise& e : exercises_) {
        const bool has_i = std::binary_search(e.concepts.begin(), e.concepts.end(), i);
        const bool has_j = std::binary_search(e.concepts.begin(), e.concepts.end(), j);
        if (!has_i || !has_j) continue;
        if (!best || e.concepts.size() < best->concepts.size() ||
            (e.concepts.size() == best->concepts.size() && e.id < best->id)) {
            best = &e;
        }
    }
    return best;
}

double subgraph_entropy(const Exercise& e, const ConceptKernel& kernel) {
    double u = 0.0;
    for (const auto& [i, j] : e.cover()) u += bernoulli_entropy(kernel.similarity(i, j));
    return u;
}

double relevance(const Vec& h_plus, const Vec& x_e) { return sigmoid(h_plus.dot(x_e)); }

double diversity(const Exercise& e, const std::set<int>& covered) {
    int novel = 0;
    for (int k : e.concepts)
        if (!covered.count(k)) ++novel;
    return static_cast<double>(novel) / static_cast<double>(e.concepts.size());
}

std::vector<double> standardize(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("standardize: empty batch");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    std::vector<double> out(values.size(), 0.0);
    if (sd < 1e-12) return out;  // degenerate batch contributes nothing
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
    return out;
}

std::vector<double> standardize_backward(const std::vector<double>& values,
                                         const std::vector<double>& grad_out) {
    const std::size_t n = values.size();
    if (grad_out.size() != n) throw std::invalid_argument("standardize_backward: size mismatch");
    const double dn = static_cast<double>(n);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= dn;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= dn;
    const double sd = std::sqrt(var);
    std::vector<double> grad_in(n, 0.0);
    if (sd < 1e-12) return grad_in;
    double g_mean = 0.0, gy_mean = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = (values[i] - mean) / sd;
        g_mean += grad_out[i];
        gy_mean += grad_out[i] * y[i];
    }
    g_mean /= dn;
    gy_mean /= dn;
    for (std::size_t i = 0; i < n; ++i)
        grad_in[i] = (grad_out[i] - g_mean - y[i] * gy_mean) / sd;
    return grad_in;
}

double fuse(double rel_std, double div_std, double unc_std, const Vec& weights) {
    if (weights.size() != 3) throw std::invalid_argument("fuse: weights must have 3 entries");
    const double sum = weights.sum();
    if (std::abs(sum - 1.0) > 1e-6 || weights.minCoeff() < -1e-6 || weights.maxCoeff() > 1.0 + 1e-6)
        throw NumericalError("fuse: weights off the simplex");
    return weights(0) * rel_std + weights(1) * div_std + weights(2) * unc_std;
}

std::vector<const Exercise*> proficiency_filter(const std::vector<const Exercise*>& pool,
                                                const Vec& h_plus, const ConceptKernel& kernel,
                                                ProficiencyBounds bounds, bool* bypassed) {
    if (bounds.p_min > bounds.p_max) throw ConfigError("proficiency_filter: p_min > p_max");
    std::vector<const Exercise*> kept;
    for (const Exercise* e : pool) {
        const double p = relevance(h_plus, e->embedding(kernel));
        if (p >= bounds.p_min && p <= bounds.p_max) kept.push_back(e);
    }
    if (kept.empty() && !pool.empty()) {
        if (bypassed) *bypassed = true;
        return pool;
    }
    if (bypassed) *bypassed = false;
    return kept;
}

RerankResult rerank(const std::vector<const Exercise*>& pool, const Vec& h_plus,
                    const std::set<int>& covered, const ConceptKernel& kernel,
                    const Vec& weights, int K, ProficiencyBounds bounds) {
    RerankResult result;
    if (pool.empty()) return result;
    const std::vector<const Exercise*> kept =
        proficiency_filter(pool, h_plus, kernel, bounds, &result.filter_bypassed);

    const std::size_t n = kept.size();
    std::vector<double> rel(n), div(n), unc(n);
    for (std::size_t c = 0; c < n; ++c) {
        rel[c] = relevance(h_plus, kept[c]->embedding(kernel));
        div[c] = diversity(*kept[c], covered);
        unc[c] = subgraph_entropy(*kept[c], kernel);
    }
    const std::vector<double> rel_s = standardize(rel);
    const std::vector<double> div_s = standardize(div);
    const std::vector<double> unc_s = standardize(unc);

    std::vector<ScoredCandidate> scored(n);
    for (std::size_t c = 0; c < n; ++c) {
        ScoredCandidate& s = scored[c];
        s.exercise_id = kept[c]->id;
        s.rel = rel[c];
        s.div = div[c];
        s.unc = unc[c];
        s.rel_std = rel_s[c];
        s.div_std = div_s[c];
        s.unc_std = unc_s[c];
        s.fused = fuse(rel_s[c], div_s[c], unc_s[c], weights);
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.fused != b.fused) return a.fused > b.fused;
        return a.exercise_id < b.exercise_id;
    });
    if (K > static_cast<int>(n)) {
        result.k_truncated = true;
        K = static_cast<int>(n);
    }
    scored.resize(K);
    for (int r = 0; r < K; ++r) scored[r].rank = r + 1;
    result.ranked = std::move(scored);
    return result;
}

}  // namespace livegraph
