#pragma once

#include "livegraph/common.hpp"

#include <cstdint>
#include <utility>

namespace livegraph {

// Gradient accumulator for the kernel's trainable parameters.
struct KernelGrad {
    Mat Z;       // M x d
    Mat M_proj;  // d x d
    double b = 0.0;

    explicit KernelGrad(Eigen::Index num_concepts = 0, Eigen::Index dim = 0)
        : Z(Mat::Zero(num_concepts, dim)), M_proj(Mat::Zero(dim, dim)) {}

    void setZero() {
        Z.setZero();
        M_proj.setZero();
        b = 0.0;
    }
};

// Dynamic knowledge-concept kernel: concept embeddings Z (one row per
// concept), a symmetric projection M_proj and bias b produce a similarity
// matrix S with entries sigmoid((z_i - z_j)' M_proj (z_i - z_j) + b).
//
// Reads are pure given a version; updates go through commit paths that bump
// the version and invalidate the cached matrix (single-writer contract).
class ConceptKernel {
public:
    ConceptKernel(int num_concepts, int dim, std::uint64_t seed,
                  double eta = 0.05, double lambda1 = 0.01, double lambda2 = 0.1);

    int num_concepts() const { return static_cast<int>(Z.rows()); }
    int dim() const { return static_cast<int>(Z.cols()); }

    double similarity(int i, int j) const;

    // Lazily rebuilt, tagged with the version that produced it.
    const Mat& similarity_matrix() const;

    // Omega(S) = lambda1 * ||S||_* + lambda2 * ||S - S0||_F^2
    double regularization() const;

    // Sum of Bernoulli entropies over the strict upper triangle.
    double global_entropy() const;

    // H(S) / (C(M,2) * ln 2), in [0,1].
    double normalized_entropy() const;

    // One gradient step on the probe Bernoulli NLL (plus Omega when
    // include_omega) with step size eta. Returns the new version.
    std::uint64_t update(int i, int j, int response, bool include_omega = true);

    // --- gradient plumbing (used by update() and the joint trainer) ---

    // Chain dL/ds_ij back to Z, M_proj, b.
    void accumulate_similarity_grad(int i, int j, double dL_ds, KernelGrad& g) const;

    // dL/d(params) of bernoulli_nll(a, s_ij), scaled by coeff.
    void accumulate_pair_nll_grad(int i, int j, int a, double coeff, KernelGrad& g) const;

    // dOmega/d(params), scaled by coeff. Nuclear-norm part uses the U V'
    // subgradient from the SVD of S.
    void accumulate_omega_grad(double coeff, KernelGrad& g) const;

    // Apply externally computed parameter deltas (optimizer step), then
    // re-symmetrize, invalidate the cache and bump the version.
    void commit_external_update();

    std::uint64_t version() const { return version_; }
    std::uint64_t rebuild_count() const { return rebuild_count_; }

    // Parameters (public by design: the trainer flattens them; all mutation
    // must be followed by commit_external_update()).
    Mat Z;       // M x d, rows are concept embeddings
    Mat M_proj;  // d x d symmetric
    double b = 0.0;
    Mat S0;  // prior adjacency, identity by default
    double eta = 0.05;
    double lambda1 = 0.01;
    double lambda2 = 0.1;

private:
    double quad_form(int i, int j) const;

    mutable Mat S_cache_;
    mutable std::uint64_t cache_version_ = static_cast<std::uint64_t>(-1);
    mutable std::uint64_t rebuild_count_ = 0;
    std::uint64_t version_ = 0;
};

}  // namespace livegraph
