#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "livegraph/kernel.hpp"

#include <Eigen/SVD>

using namespace livegraph;
using livegraph::testutil::grad_close;

namespace {

ConceptKernel zero_kernel(int m, int d, double b) {
    ConceptKernel k(m, d, 1);
    k.Z.setZero();
    k.b = b;
    k.commit_external_update();
    return k;
}

// FD over one kernel parameter; commits after each poke so caches refresh and
// restores the full parameter block (the commit re-symmetrizes M_proj, so a
// pointer-level restore alone would leave the transpose entry perturbed).
double kernel_fd(ConceptKernel& k, double* param, const std::function<double()>& f,
                 double h = 1e-5) {
    const Mat Z0 = k.Z, M0 = k.M_proj;
    const double b0 = k.b, saved = *param;
    *param = saved + h;
    k.commit_external_update();
    const double up = f();
    k.Z = Z0;
    k.M_proj = M0;
    k.b = b0;
    *param = saved - h;
    k.commit_external_update();
    const double down = f();
    k.Z = Z0;
    k.M_proj = M0;
    k.b = b0;
    k.commit_external_update();
    return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("similarity of a concept with itself is sigmoid(b)") {
    ConceptKernel k(4, 3, 7);
    for (int i = 0; i < 4; ++i) CHECK(k.similarity(i, i) == doctest::Approx(sigmoid(k.b)).epsilon(1e-12));
    const Mat& S = k.similarity_matrix();
    for (int i = 0; i < 4; ++i) CHECK(S(i, i) == doctest::Approx(sigmoid(k.b)).epsilon(1e-12));
}

TEST_CASE("hand-computed pair similarity") {
    ConceptKernel k(2, 2, 1);
    k.Z << 1.0, 0.0, 0.0, 1.0;
    k.M_proj = 0.5 * Mat::Identity(2, 2);
    k.b = 0.1;
    k.commit_external_update();
    // diff = (1,-1), quad = 0.5*2 + 0.1 = 1.1
    CHECK(k.similarity(0, 1) == doctest::Approx(sigmoid(1.1)).epsilon(1e-12));
    CHECK(k.similarity(0, 1) == doctest::Approx(0.7502601).epsilon(1e-6));
}

TEST_CASE("similarity is symmetric and in (0,1) for random kernels") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        ConceptKernel k(5, 3, seed);
        Rng rng(seed, "perturb");
        k.Z = rng.normal_mat(5, 3);
        k.b = rng.normal();
        k.commit_external_update();
        for (int i = 0; i < 5; ++i)
            for (int j = i + 1; j < 5; ++j) {
                CHECK(k.similarity(i, j) == k.similarity(j, i));
                CHECK(k.similarity(i, j) > 0.0);
                CHECK(k.similarity(i, j) < 1.0);
            }
    }
}

TEST_CASE("single-concept kernel has a 1x1 similarity matrix") {
    ConceptKernel k(1, 2, 3);
    const Mat& S = k.similarity_matrix();
    REQUIRE(S.rows() == 1);
    REQUIRE(S.cols() == 1);
    CHECK(S(0, 0) == doctest::Approx(sigmoid(k.b)).epsilon(1e-12));
}

TEST_CASE("similarity matrix matches the entrywise definition") {
    ConceptKernel k(3, 4, 11);
    const Mat& S = k.similarity_matrix();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double expect = i == j ? sigmoid(k.b) : k.similarity(i, j);
            CHECK(S(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("matrix cache rebuilds only when the version changes") {
    ConceptKernel k(4, 2, 5);
    CHECK(k.rebuild_count() == 0);
    k.similarity_matrix();
    CHECK(k.rebuild_count() == 1);
    k.similarity_matrix();
    k.global_entropy();
    k.regularization();
    CHECK(k.rebuild_count() == 1);
    k.update(0, 1, 1);
    k.similarity_matrix();
    CHECK(k.rebuild_count() == 2);
}

TEST_CASE("regularization vanishes when S equals the prior and lambda1 is off") {
    ConceptKernel k(4, 3, 9);
    k.S0 = k.similarity_matrix();
    k.lambda1 = 0.0;
    CHECK(k.regularization() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("nuclear norm of the identity is its dimension") {
    // The penalty's low-rank term is the singular value sum; for I_3 that is 3.
    Eigen::JacobiSVD<Mat> svd(Mat::Identity(3, 3));
    CHECK(svd.singularValues().sum() == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("regularization matches a from-definition oracle") {
    ConceptKernel k(5, 3, 13);
    Rng rng(13, "reg-oracle");
    k.Z = rng.normal_mat(5, 3);
    k.commit_external_update();
    const Mat S = k.similarity_matrix();
    Eigen::BDCSVD<Mat> svd(S);
    const double oracle = 0.01 * svd.singularValues().sum() + 0.1 * (S - k.S0).squaredNorm();
    CHECK(k.regularization() == doctest::Approx(oracle).epsilon(1e-8));
}

TEST_CASE("global entropy of maximally uncertain pairs") {
    CHECK(zero_kernel(2, 3, 0.0).global_entropy() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(zero_kernel(4, 3, 0.0).global_entropy() ==
          doctest::Approx(6.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(zero_kernel(4, 3, 0.0).normalized_entropy() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("global entropy with every pair clamped at the log floor") {
    // All off-diagonal s sit below the 1e-7 clamp; each pair contributes
    // about 1.72e-6 nats, so six pairs land just above 1e-5.
    const double h = zero_kernel(4, 3, -60.0).global_entropy();
    CHECK(h < 1.05e-5);
    CHECK(h > 0.0);
}

TEST_CASE("entropy is non-negative and zero only in the clamped limit") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ConceptKernel k(6, 3, seed);
        CHECK(k.global_entropy() >= 0.0);
        CHECK(k.normalized_entropy() >= 0.0);
        CHECK(k.normalized_entropy() <= 1.0 + 1e-12);
    }
}

TEST_CASE("update moves similarity toward the observed response") {
    ConceptKernel k = zero_kernel(2, 2, logit(0.3));
    const double before = k.similarity(0, 1);
    k.update(0, 1, 1, /*include_omega=*/false);
    CHECK(k.similarity(0, 1) > before);

    ConceptKernel k2 = zero_kernel(2, 2, logit(0.7));
    const double before2 = k2.similarity(0, 1);
    k2.update(0, 1, 0, /*include_omega=*/false);
    CHECK(k2.similarity(0, 1) < before2);
}

TEST_CASE("update barely moves a near-saturated pair") {
    ConceptKernel k = zero_kernel(2, 2, logit(0.99));
    k.eta = 0.01;
    const double before = k.similarity(0, 1);
    k.update(0, 1, 1, /*include_omega=*/false);
    CHECK(std::abs(k.similarity(0, 1) - before) < 0.01);
}

TEST_CASE("update validates its arguments") {
    ConceptKernel k(3, 2, 1);
    CHECK_THROWS_AS(k.update(0, 3, 1), std::out_of_range);
    CHECK_THROWS_AS(k.update(-1, 1, 1), std::out_of_range);
    CHECK_THROWS_AS(k.update(1, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(k.update(0, 1, 2), std::invalid_argument);
    CHECK_THROWS_AS(k.similarity(5, 0), std::out_of_range);
}

TEST_CASE("version increases monotonically across updates") {
    ConceptKernel k(3, 2, 2);
    std::uint64_t prev = k.version();
    for (int t = 0; t < 10; ++t) {
        const std::uint64_t v = k.update(t % 2, 2, t % 2);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("symmetry survives repeated updates") {
    ConceptKernel k(4, 3, 17);
    Rng rng(17, "updates");
    for (int t = 0; t < 50; ++t) {
        int i = static_cast<int>(rng.index(4)), j = static_cast<int>(rng.index(4));
        if (i == j) continue;
        k.update(i, j, rng.bernoulli(0.5));
    }
    CHECK((k.M_proj - k.M_proj.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    const Mat& S = k.similarity_matrix();
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("probe NLL gradient matches finite differences") {
    ConceptKernel k(4, 3, 23);
    Rng rng(23, "fd");
    k.Z = rng.normal_mat(4, 3, 0.0, 0.5);
    k.b = 0.2;
    k.commit_external_update();

    const int pi = 0, pj = 2, a = 1;
    KernelGrad g(4, 3);
    k.accumulate_pair_nll_grad(pi, pj, a, 1.0, g);
    const auto f = [&] { return bernoulli_nll(a, k.similarity(pi, pj)); };

    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) {
            const double num = kernel_fd(k, &k.Z(r, c), f);
            CHECK(grad_close(g.Z(r, c), num, 1e-4));
        }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const double num = kernel_fd(k, &k.M_proj(r, c), f);
            CHECK(grad_close(g.M_proj(r, c), num, 1e-4));
        }
    CHECK(grad_close(g.b, kernel_fd(k, &k.b, f), 1e-4));
}

TEST_CASE("regularization gradient matches finite differences") {
    ConceptKernel k(4, 3, 29);
    Rng rng(29, "fd-omega");
    k.Z = rng.normal_mat(4, 3, 0.0, 0.7);
    k.b = -0.3;
    k.commit_external_update();

    KernelGrad g(4, 3);
    k.accumulate_omega_grad(1.0, g);
    const auto f = [&] { return k.regularization(); };

    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) {
            const double num = kernel_fd(k, &k.Z(r, c), f);
            CHECK(grad_close(g.Z(r, c), num, 1e-4));
        }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const double num = kernel_fd(k, &k.M_proj(r, c), f);
            CHECK(grad_close(g.M_proj(r, c), num, 1e-4));
        }
    CHECK(grad_close(g.b, kernel_fd(k, &k.b, f), 1e-4));
}

TEST_CASE("identical seeds produce identical kernels") {
    ConceptKernel a(6, 4, 31), b(6, 4, 31), c(6, 4, 32);
    CHECK(a.Z == b.Z);
    CHECK(a.b == b.b);
    CHECK(a.Z != c.Z);
}
