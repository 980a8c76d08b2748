#include "livegraph/kernel.hpp"

#include <Eigen/SVD>

namespace livegraph {

ConceptKernel::ConceptKernel(int num_concepts, int dim, std::uint64_t seed,
                             double eta_, double lambda1_, double lambda2_) {
    if (num_concepts < 1 || dim < 1) throw ConfigError("kernel: M and d must be positive");
    Rng rng(seed, "kernel-init");
    Z = rng.normal_mat(num_concepts, dim, 0.0, 0.02);
    M_proj = Mat::Identity(dim, dim) / static_cast<double>(dim);
    b = rng.normal(0.1, 0.01);
    S0 = Mat::Identity(num_concepts, num_concepts);
    eta = eta_;
    lambda1 = lambda1_;
    lambda2 = lambda2_;
}

double ConceptKernel::quad_form(int i, int j) const {
    const Vec diff = Z.row(i) - Z.row(j);
    return diff.dot(M_proj * diff) + b;
}

double ConceptKernel::similarity(int i, int j) const {
    const int m = num_concepts();
    if (i < 0 || j < 0 || i >= m || j >= m)
        throw std::out_of_range("kernel: concept index out of range");
    return sigmoid(quad_form(i, j));
}

const Mat& ConceptKernel::similarity_matrix() const {
    if (cache_version_ == version_) return S_cache_;
    const int m = num_concepts();
    S_cache_.resize(m, m);
    const double diag = sigmoid(b);
    for (int i = 0; i < m; ++i) {
        S_cache_(i, i) = diag;
        for (int j = i + 1; j < m; ++j) {
            const double s = similarity(i, j);
            S_cache_(i, j) = s;
            S_cache_(j, i) = s;
        }
    }
    cache_version_ = version_;
    ++rebuild_count_;
    return S_cache_;
}

double ConceptKernel::regularization() const {
    const Mat& S = similarity_matrix();
    Eigen::BDCSVD<Mat> svd(S);
    const double nuclear = svd.singularValues().sum();
    if (!std::isfinite(nuclear))
        throw NumericalError("kernel: SVD produced non-finite singular values");
    const double fro = (S - S0).squaredNorm();
    return lambda1 * nuclear + lambda2 * fro;
}

double ConceptKernel::global_entropy() const {
    const Mat& S = similarity_matrix();
    const int m = num_concepts();
    double h = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) h += bernoulli_entropy(S(i, j));
    return h;
}

double ConceptKernel::normalized_entropy() const {
    const int m = num_concepts();
    if (m < 2) return 0.0;
    const double pairs = 0.5 * m * (m - 1);
    return global_entropy() / (pairs * std::log(2.0));
}

void ConceptKernel::accumulate_similarity_grad(int i, int j, double dL_ds, KernelGrad& g) const {
    const double s = similarity(i, j);
    const double du = dL_ds * s * (1.0 - s);  // sigma'(u) = s(1-s)
    const Vec diff = Z.row(i) - Z.row(j);
    const Vec md = M_proj * diff;
    g.Z.row(i) += (2.0 * du) * md.transpose();
    g.Z.row(j) -= (2.0 * du) * md.transpose();
    g.M_proj += du * (diff * diff.transpose());
    g.b += du;
}

void ConceptKernel::accumulate_pair_nll_grad(int i, int j, int a, double coeff, KernelGrad& g) const {
    // d nll / du = s - a after the log clamp region
    const double s = similarity(i, j);
    const double sc = clamp_unit(s);
    // dL/ds = (s - a) / (s (1-s)) at the clamped value; compose with
    // accumulate_similarity_grad's s(1-s) factor by passing the ratio.
    const double dL_ds = (sc - a) / (sc * (1.0 - sc));
    accumulate_similarity_grad(i, j, coeff * dL_ds, g);
}

void ConceptKernel::accumulate_omega_grad(double coeff, KernelGrad& g) const {
    const Mat& S = similarity_matrix();
    Eigen::BDCSVD<Mat> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Mat dS_nuc = svd.matrixU() * svd.matrixV().transpose();
    const Mat dS = coeff * (lambda1 * dS_nuc + 2.0 * lambda2 * (S - S0));
    const int m = num_concepts();
    // Off-diagonal entries (k,l) and (l,k) share one underlying u_kl.
    for (int k = 0; k < m; ++k) {
        for (int l = k + 1; l < m; ++l) {
            accumulate_similarity_grad(k, l, dS(k, l) + dS(l, k), g);
        }
        // Diagonal: s_kk = sigmoid(b), only b moves.
        const double s = S(k, k);
        g.b += dS(k, k) * s * (1.0 - s);
    }
}

std::uint64_t ConceptKernel::update(int i, int j, int response, bool include_omega) {
    const int m = num_concepts();
    if (i < 0 || j < 0 || i >= m || j >= m)
        throw std::out_of_range("kernel: concept index out of range");
    if (i == j) throw std::invalid_argument("kernel: self-pair carries no probe information");
    if (response != 0 && response != 1)
        throw std::invalid_argument("kernel: probe response must be 0 or 1");

    KernelGrad g(Z.rows(), Z.cols());
    accumulate_pair_nll_grad(i, j, response, 1.0, g);
    if (include_omega) accumulate_omega_grad(1.0, g);

    Z -= eta * g.Z;
    M_proj -= eta * g.M_proj;
    b -= eta * g.b;
    commit_external_update();
    return version_;
}

void ConceptKernel::commit_external_update() {
    const Mat Mt = M_proj.transpose();
    M_proj = 0.5 * (M_proj + Mt);
    ++version_;
}

}  // namespace livegraph
