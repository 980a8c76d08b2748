#pragma once

#include "livegraph/common.hpp"
#include "livegraph/kernel.hpp"
#include "livegraph/reranker.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace livegraph {

// Per-concept prior vectors (768-dim by default). Loaded from a file or
// synthesized deterministically from (concept id, seed) so the pipeline runs
// without any external embedding service.
struct PriorEmbeddingTable {
    Mat rows;  // M x prior_dim
    enum class Source { File, Synthetic } source = Source::Synthetic;

    static PriorEmbeddingTable synthetic(int num_concepts, int prior_dim, std::uint64_t seed);
    static PriorEmbeddingTable load(const std::string& path, int num_concepts, int prior_dim);

    int num_concepts() const { return static_cast<int>(rows.rows()); }
    int prior_dim() const { return static_cast<int>(rows.cols()); }
};

struct InteractionItem {
    int exercise_id = 0;
    int correct = 0;
    std::int64_t timestamp = 0;
};

enum class ActivityClass { Active, Inactive };

struct StudentProfile {
    int student_id = 0;
    std::vector<InteractionItem> history;  // non-decreasing timestamps
    Vec mu, log_sigma_sq, theta, h_plus;
    ActivityClass activity_class = ActivityClass::Inactive;
};

struct VaeParams {
    Mat W_enc;       // 2d x prior_dim
    Vec b_enc;       // 2d
    double beta = 0.1;
    Mat prior_proj;  // d x prior_dim, fixed seeded map producing mu_s0

    VaeParams() = default;
    VaeParams(int dim, int prior_dim, std::uint64_t seed);

    int dim() const { return static_cast<int>(b_enc.size()) / 2; }
};

// Distinct concept ids referenced by the history (ascending).
std::vector<int> history_concepts(const StudentProfile& profile, const ExerciseCatalog& catalog);

// Mean prior embedding over the given concepts; over all concepts when empty.
Vec pooled_prior(const PriorEmbeddingTable& priors, const std::vector<int>& concepts);

struct EncodeResult {
    Vec mu, log_sigma_sq;
};

EncodeResult encode(const PriorEmbeddingTable& priors, const StudentProfile& profile,
                    const ExerciseCatalog& catalog, const VaeParams& params);

// Deterministic reparameterization draw for the given seed.
Vec sample_theta(const Vec& mu, const Vec& log_sigma_sq, std::uint64_t noise_seed);
Vec reparameterize(const Vec& mu, const Vec& log_sigma_sq, const Vec& noise);

struct DecodeResult {
    Vec h_plus;
    Vec alpha;  // attention weights, sums to 1
};

DecodeResult decode(const Vec& theta, const ConceptKernel& kernel);

// Backprop through the decoder. g_hplus is dL/dh_plus; accumulates dL/dZ and
// returns dL/dtheta.
Vec decode_backward(const Vec& theta, const ConceptKernel& kernel, const DecodeResult& dec,
                    const Vec& g_hplus, Mat& dZ);

// Closed-form KL( N(mu, diag exp(lsq)) || N(mu0, I) ).
double gaussian_kl(const Vec& mu, const Vec& log_sigma_sq, const Vec& mu0);

struct ElboResult {
    double loss = 0.0;   // negated ELBO: recon_nll + beta * kl
    double recon = 0.0;  // reconstruction NLL
    double kl = 0.0;
    bool empty_history = false;
};

// Negated ELBO for minimization. Reconstruction is a Bernoulli over history
// correctness with p(a=1) = sigmoid(h_plus . x_e).
ElboResult elbo_loss(const StudentProfile& profile, const Vec& theta, const ConceptKernel& kernel,
                     const VaeParams& params, const PriorEmbeddingTable& priors,
                     const ExerciseCatalog& catalog);

struct VaeGrad {
    Mat W_enc;
    Vec b_enc;

    VaeGrad() = default;
    VaeGrad(int dim, int prior_dim) : W_enc(Mat::Zero(2 * dim, prior_dim)), b_enc(Vec::Zero(2 * dim)) {}
    void setZero() {
        W_enc.setZero();
        b_enc.setZero();
    }
};

// Full pathwise gradient of elbo_loss with the noise vector frozen.
// Accumulates into dvae (encoder params) and dZ (through decoder and
// exercise embeddings). coeff scales the contribution.
ElboResult elbo_loss_with_grad(const StudentProfile& profile, const VaeParams& params,
                               const PriorEmbeddingTable& priors, const ConceptKernel& kernel,
                               const ExerciseCatalog& catalog, const Vec& noise, double coeff,
                               VaeGrad& dvae, Mat& dZ);

}  // namespace livegraph
