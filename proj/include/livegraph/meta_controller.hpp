#pragma once

#include "livegraph/common.hpp"
#include "livegraph/kernel.hpp"
#include "livegraph/log.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace livegraph {

inline constexpr int kStateFrames = 13;
inline constexpr int kFrameFeatures = 32;
inline constexpr int kStateDim = kStateFrames * kFrameFeatures;  // 416
inline constexpr std::uint32_t kStateLayoutVersion = 1;

// 13 temporal frames x 32 features, flattened oldest -> newest. Per-frame
// layout: [acc1, mean_rel, mean_div, mean_unc, h_norm, dh, nq_norm,
// log_hist, div_at_k, 23 reserved zeros].
struct SystemState {
    Vec v = Vec::Zero(kStateDim);
    std::uint32_t layout_version = kStateLayoutVersion;
};

SystemState build_state(const InteractionLog& log, const ConceptKernel& kernel,
                        int frames = kStateFrames);

struct PolicyGrad {
    Mat W1;
    Vec b1;
    Mat W2;
    Vec b2;

    PolicyGrad()
        : W1(Mat::Zero(kFrameFeatures, kStateDim)),
          b1(Vec::Zero(kFrameFeatures)),
          W2(Mat::Zero(3, kFrameFeatures)),
          b2(Vec::Zero(3)) {}
    void setZero() {
        W1.setZero();
        b1.setZero();
        W2.setZero();
        b2.setZero();
    }
    PolicyGrad& operator+=(const PolicyGrad& o) {
        W1 += o.W1;
        b1 += o.b1;
        W2 += o.W2;
        b2 += o.b2;
        return *this;
    }
    PolicyGrad& operator*=(double c) {
        W1 *= c;
        b1 *= c;
        W2 *= c;
        b2 *= c;
        return *this;
    }
};

// 416 -> 32 -> 3 perceptron with softmax head; output is always on the
// probability simplex.
struct MetaPolicy {
    Mat W1;  // 32 x 416
    Vec b1;  // 32
    Mat W2;  // 3 x 32
    Vec b2;  // 3

    MetaPolicy() = default;
    explicit MetaPolicy(std::uint64_t seed);

    Vec forward(const SystemState& state) const;  // Lambda = (rel, div, unc)

    struct Cache {
        Vec state;
        Vec pre_hidden;
        Vec hidden;
        Vec lambda;
    };
    Vec forward_cached(const SystemState& state, Cache& cache) const;

    // dL/dLambda -> parameter gradients (through softmax + rectifier).
    void backward(const Cache& cache, const Vec& g_lambda, PolicyGrad& g) const;

    void apply(const PolicyGrad& g, double step) {
        W1 -= step * g.W1;
        b1 -= step * g.b1;
        W2 -= step * g.W2;
        b2 -= step * g.b2;
    }
};

struct RewardSpec {
    double gamma1 = 1.0;
    double gamma2 = 0.01;
    double gamma3 = 0.001;
};

// R = gamma1 * E_p - gamma2 * H(S) - gamma3 * N_q
double reward(double e_p, double h_s, double n_q, const RewardSpec& spec);

// Inner MAML loop: `steps` plain gradient steps from the given policy using
// the supplied loss gradient; the input policy is untouched. The gradient
// functor is supplied by the trainer (ranking loss) or by tests (surrogates).
using PolicyGradFn = std::function<PolicyGrad(const MetaPolicy&)>;

MetaPolicy inner_adapt(const MetaPolicy& policy, const PolicyGradFn& task_grad, int steps = 5,
                       double alpha = 0.01);

// First-order outer update: theta_meta <- theta_meta - beta * sum of query
// gradients evaluated at the adapted parameters. Returns the number of tasks
// aggregated (0 => warning-level no-op).
struct MetaTaskFns {
    PolicyGradFn support_grad;  // used by the inner loop
    PolicyGradFn query_grad;    // evaluated at adapted parameters
};

int meta_update(MetaPolicy& policy, const std::vector<MetaTaskFns>& tasks, int inner_steps = 5,
                double inner_alpha = 0.01, double beta_meta = 0.001);

}  // namespace livegraph
