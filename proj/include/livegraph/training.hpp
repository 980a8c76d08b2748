#pragma once

#include "livegraph/common.hpp"
#include "livegraph/kernel.hpp"
#include "livegraph/meta_controller.hpp"
#include "livegraph/probe.hpp"
#include "livegraph/reranker.hpp"
#include "livegraph/student_vae.hpp"

#include <memory>
#include <set>
#include <string>
#include <vector>

namespace livegraph {

enum class Variant { Full, NoVae, NoUnc, NoProbe, NoMeta };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// All jointly trained state plus the separately pretrained marginal net.
struct Model {
    ConceptKernel kernel;
    VaeParams vae;
    MetaPolicy policy;
    MarginalNet marginal;
    PriorEmbeddingTable priors;

    Model(int num_concepts, int dim, int prior_dim, std::uint64_t seed, double eta = 0.05,
          double lambda1 = 0.01, double lambda2 = 0.1)
        : kernel(num_concepts, dim, seed, eta, lambda1, lambda2),
          vae(dim, prior_dim, seed),
          policy(seed),
          marginal(seed),
          priors(PriorEmbeddingTable::synthetic(num_concepts, prior_dim, seed)) {}
};

struct Grads {
    KernelGrad kernel;
    VaeGrad vae;
    PolicyGrad policy;

    Grads(int num_concepts, int dim, int prior_dim)
        : kernel(num_concepts, dim), vae(dim, prior_dim) {}
    void setZero() {
        kernel.setZero();
        vae.setZero();
        policy.setZero();
    }
};

// One training list: the student's context plus candidates with a single
// observed positive.
struct RankTask {
    StudentProfile profile;
    std::set<int> covered;  // concepts from the last-20 history window
    SystemState state;
    Vec noise;  // frozen reparameterization draw
    std::vector<int> candidate_ids;
    int positive_index = 0;
};

struct MetaTask {
    std::vector<RankTask> support;
    std::vector<RankTask> query;
};

struct ProbeObservation {
    int i = 0, j = 0;
    int response = 0;
};

struct TrainBatch {
    std::vector<RankTask> rank_tasks;
    std::vector<ProbeObservation> probe_records;
    std::vector<MetaTask> meta_tasks;
};

struct LossBreakdown {
    double rank = 0.0, vae = 0.0, kernel = 0.0, maml = 0.0;
    double total = 0.0;
    double grad_norm_kernel = 0.0, grad_norm_vae = 0.0, grad_norm_policy = 0.0;
    bool clipped = false;
};

struct TrainWeights {
    double lambda_vae = 0.1;
    double lambda_ker = 1.0;
    double lambda_meta = 0.01;
    bool omega_in_kernel_loss = true;
    bool std_stop_grad = false;  // treat z-score mean/sigma as constants
    int inner_steps = 5;
    double inner_alpha = 0.01;
};

// List-wise cross-entropy at the positive's index.
double listwise_ce(const std::vector<double>& fused, int positive_index);

// Differentiable forward/backward of the scoring pipeline for one list.
// Accumulates coeff-scaled gradients; policy_override substitutes the policy
// used for Lambda (for MAML inner/outer passes).
double ranking_loss_with_grad(const Model& model, const RankTask& task,
                              const ExerciseCatalog& catalog, Variant variant, double coeff,
                              Grads* grads, const TrainWeights& w,
                              const MetaPolicy* policy_override = nullptr);

// Composite loss of the joint objective; fills grads when non-null.
LossBreakdown total_loss(const Model& model, const TrainBatch& batch,
                         const ExerciseCatalog& catalog, Variant variant, const TrainWeights& w,
                         Grads* grads);

struct AdamState {
    Vec m, v;
    long step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double clip = 1e4;
};

// Flat parameter plumbing: fixed order Z, M_proj, b, W_enc, b_enc, W1, b1,
// W2, b2.
Eigen::Index param_count(const Model& model);
Vec pack_params(const Model& model);
void unpack_params(const Vec& flat, Model& model);  // commits the kernel update
Vec pack_grads(const Model& model, const Grads& grads);

// One adaptive-moment update over every trainable parameter.
LossBreakdown backward_and_step(Model& model, const TrainBatch& batch,
                                const ExerciseCatalog& catalog, Variant variant,
                                const TrainWeights& w, AdamState& opt);

}  // namespace livegraph
