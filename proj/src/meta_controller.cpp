#include "livegraph/meta_controller.hpp"

#include <algorithm>
#include <cmath>

namespace livegraph {

double acc_at_1(const std::vector<InteractionRecord>& records, int window) {
    if (records.empty()) return 0.0;
    const std::size_t n = records.size();
    const std::size_t take = std::min<std::size_t>(n, static_cast<std::size_t>(window));
    int hits = 0;
    for (std::size_t k = n - take; k < n; ++k) {
        const int pred = records[k].predicted_p >= 0.5 ? 1 : 0;
        if (pred == records[k].correct) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(take);
}

namespace {

void fill_frame(Eigen::Ref<Vec> frame, const CycleRecord& c) {
    frame.setZero();
    frame(0) = c.acc1;
    frame(1) = c.mean_rel;
    frame(2) = c.mean_div;
    frame(3) = c.mean_unc;
    frame(4) = c.h_norm;
    frame(5) = c.dh;
    frame(6) = c.nq_norm;
    frame(7) = c.log_hist;
    frame(8) = c.div_at_k;
}

}  // namespace

SystemState build_state(const InteractionLog& log, const ConceptKernel& kernel, int frames) {
    SystemState state;
    const int F = frames;
    const auto& cycles = log.cycles;
    // Frames oldest -> newest; missing frames stay zero at the oldest end.
    const int have = static_cast<int>(std::min<std::size_t>(cycles.size(), F));
    for (int f = 0; f < have; ++f) {
        const CycleRecord& c = cycles[cycles.size() - have + f];
        fill_frame(state.v.segment((F - have + f) * kFrameFeatures, kFrameFeatures), c);
    }
    // Newest frame carries live values for the volatile slots.
    auto newest = state.v.segment((F - 1) * kFrameFeatures, kFrameFeatures);
    const double h_live = kernel.normalized_entropy();
    if (!log.records.empty()) {
        newest(0) = acc_at_1(log.records);
        int probes = 0;
        for (const InteractionRecord& r : log.records)
            if (r.probe) ++probes;
        newest(6) = probes / 20.0;
        newest(7) = std::log1p(static_cast<double>(log.records.size()));
    }
    newest(5) = cycles.empty() ? 0.0 : h_live - cycles.back().h_norm;
    newest(4) = h_live;
    return state;
}

MetaPolicy::MetaPolicy(std::uint64_t seed) {
    Rng rng(seed, "policy-init");
    W1 = rng.normal_mat(kFrameFeatures, kStateDim, 0.0, 0.02);
    b1 = Vec::Zero(kFrameFeatures);
    W2 = rng.normal_mat(3, kFrameFeatures, 0.0, 0.02);
    // Bias so the initial softmax yields E[lambda_unc] ~ 0.15.
    b2 = Vec::Zero(3);
    b2(2) = std::log(0.15 / ((1.0 - 0.15) / 2.0));
}

Vec MetaPolicy::forward(const SystemState& state) const {
    Cache cache;
    return forward_cached(state, cache);
}

Vec MetaPolicy::forward_cached(const SystemState& state, Cache& cache) const {
    cache.state = state.v;
    cache.pre_hidden = W1 * state.v + b1;
    cache.hidden = cache.pre_hidden.cwiseMax(0.0);
    cache.lambda = softmax(W2 * cache.hidden + b2);
    return cache.lambda;
}

void MetaPolicy::backward(const Cache& cache, const Vec& g_lambda, PolicyGrad& g) const {
    const Vec& lam = cache.lambda;
    const Vec g_logits = lam.array() * (g_lambda.array() - lam.dot(g_lambda));
    g.W2 += g_logits * cache.hidden.transpose();
    g.b2 += g_logits;
    Vec g_hidden = W2.transpose() * g_logits;
    for (int k = 0; k < g_hidden.size(); ++k)
        if (cache.pre_hidden(k) <= 0.0) g_hidden(k) = 0.0;
    g.W1 += g_hidden * cache.state.transpose();
    g.b1 += g_hidden;
}

double reward(double e_p, double h_s, double n_q, const RewardSpec& spec) {
    return spec.gamma1 * e_p - spec.gamma2 * h_s - spec.gamma3 * n_q;
}

MetaPolicy inner_adapt(const MetaPolicy& policy, const PolicyGradFn& task_grad, int steps,
                       double alpha) {
    MetaPolicy adapted = policy;
    for (int s = 0; s < steps; ++s) {
        const PolicyGrad g = task_grad(adapted);
        if (!g.W1.allFinite() || !g.W2.allFinite())
            throw NumericalError("inner_adapt: NaN gradient, aborting task");
        adapted.apply(g, alpha);
    }
    return adapted;
}

int meta_update(MetaPolicy& policy, const std::vector<MetaTaskFns>& tasks, int inner_steps,
                double inner_alpha, double beta_meta) {
    if (tasks.empty()) return 0;
    PolicyGrad outer;
    for (const MetaTaskFns& task : tasks) {
        const MetaPolicy adapted = inner_adapt(policy, task.support_grad, inner_steps, inner_alpha);
        outer += task.query_grad(adapted);
    }
    policy.apply(outer, beta_meta);
    return static_cast<int>(tasks.size());
}

}  // namespace livegraph
