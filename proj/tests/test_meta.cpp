#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "livegraph/meta_controller.hpp"

using namespace livegraph;
using livegraph::testutil::grad_close;

namespace {

SystemState random_state(std::uint64_t seed) {
    SystemState s;
    Rng rng(seed, "state");
    s.v = rng.normal_vec(kStateDim);
    return s;
}

// Surrogate task: pull W2 toward a fixed target, everything else untouched.
PolicyGradFn pull_toward(const Mat& target) {
    return [target](const MetaPolicy& p) {
        PolicyGrad g;
        g.W2 = p.W2 - target;
        return g;
    };
}

double surrogate_loss(const MetaPolicy& p, const Mat& target) {
    return 0.5 * (p.W2 - target).squaredNorm();
}

}  // namespace

TEST_CASE("accuracy over the window") {
    std::vector<InteractionRecord> recs;
    for (int t = 0; t < 20; ++t) {
        InteractionRecord r;
        r.predicted_p = 0.8;           // predicts correct
        r.correct = t < 15 ? 1 : 0;    // 15 hits
        recs.push_back(r);
    }
    CHECK(acc_at_1(recs) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(acc_at_1({}) == 0.0);

    // Only the trailing window counts.
    std::vector<InteractionRecord> long_log(40);
    for (int t = 0; t < 40; ++t) {
        long_log[t].predicted_p = 0.9;
        long_log[t].correct = t >= 20 ? 1 : 0;
    }
    CHECK(acc_at_1(long_log) == doctest::Approx(1.0));
}

TEST_CASE("empty log builds an almost-zero state with live entropy") {
    ConceptKernel k(4, 2, 1);
    k.Z.setZero();
    k.b = 0.0;
    k.commit_external_update();  // every pair at 0.5 => normalized entropy 1
    const SystemState s = build_state(InteractionLog{}, k);
    REQUIRE(s.v.size() == kStateDim);
    const int newest = (kStateFrames - 1) * kFrameFeatures;
    CHECK(s.v(newest + 4) == doctest::Approx(1.0).epsilon(1e-12));
    Vec rest = s.v;
    rest(newest + 4) = 0.0;
    CHECK(rest.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a single cycle occupies only the newest frame") {
    ConceptKernel k(4, 2, 1);
    InteractionLog log;
    CycleRecord c;
    c.acc1 = 0.5;
    c.mean_rel = 0.6;
    c.mean_div = 0.4;
    c.mean_unc = 1.2;
    c.h_norm = k.normalized_entropy();
    c.div_at_k = 0.3;
    log.cycles.push_back(c);
    const SystemState s = build_state(log, k);
    const int newest = (kStateFrames - 1) * kFrameFeatures;
    CHECK(s.v.head(newest).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.v(newest + 1) == doctest::Approx(0.6));
    CHECK(s.v(newest + 2) == doctest::Approx(0.4));
    CHECK(s.v(newest + 3) == doctest::Approx(1.2));
    CHECK(s.v(newest + 5) == doctest::Approx(0.0).epsilon(1e-12));  // dh vs itself
    CHECK(s.v(newest + 8) == doctest::Approx(0.3));
    // reserved tail of each frame stays zero
    for (int f = 0; f < kStateFrames; ++f)
        for (int slot = 9; slot < kFrameFeatures; ++slot)
            CHECK(s.v(f * kFrameFeatures + slot) == 0.0);
}

TEST_CASE("older cycles shift toward the oldest frames") {
    ConceptKernel k(3, 2, 1);
    InteractionLog log;
    for (int t = 0; t < 15; ++t) {
        CycleRecord c;
        c.mean_rel = 0.1 * t;
        log.cycles.push_back(c);
    }
    const SystemState s = build_state(log, k);
    // 15 cycles, 13 frames: frame f holds cycle (15 - 13 + f)
    for (int f = 0; f < kStateFrames; ++f)
        CHECK(s.v(f * kFrameFeatures + 1) == doctest::Approx(0.1 * (2 + f)).epsilon(1e-12));
}

TEST_CASE("fresh policy favors relevance and diversity with a small probe head") {
    const MetaPolicy p(11);
    const Vec lam = p.forward(SystemState{});
    CHECK(lam(2) == doctest::Approx(0.15).epsilon(0.02));
    CHECK(lam(0) == doctest::Approx(lam(1)).epsilon(0.05));
}

TEST_CASE("zero head weights yield the uniform simplex point") {
    MetaPolicy p(1);
    p.W2.setZero();
    p.b2.setZero();
    const Vec lam = p.forward(random_state(1));
    for (int c = 0; c < 3; ++c) CHECK(lam(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("a dominant logit saturates its weight") {
    MetaPolicy p(1);
    p.W2.setZero();
    p.b2 << 10.0, 0.0, 0.0;
    const Vec lam = p.forward(random_state(2));
    CHECK(lam(0) > 0.9999);
}

TEST_CASE("policy outputs stay on the simplex for 1000 random states") {
    const MetaPolicy p(13);
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const Vec lam = p.forward(random_state(s));
        CHECK(lam.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(lam.minCoeff() >= 0.0);
        CHECK(lam.maxCoeff() <= 1.0);
    }
}

TEST_CASE("policy backward matches finite differences") {
    MetaPolicy p(17);
    const SystemState st = random_state(17);
    Vec g_target(3);
    g_target << 1.0, -2.0, 0.5;
    MetaPolicy::Cache cache;
    p.forward_cached(st, cache);
    PolicyGrad g;
    p.backward(cache, g_target, g);
    const auto loss = [&] { return g_target.dot(p.forward(st)); };
    for (int r = 0; r < 3; ++r) {
        CHECK(grad_close(g.b2(r), testutil::fd(&p.b2(r), loss), 1e-4));
        for (int c = 0; c < kFrameFeatures; c += 6)
            CHECK(grad_close(g.W2(r, c), testutil::fd(&p.W2(r, c), loss), 1e-4));
    }
    for (int r = 0; r < kFrameFeatures; r += 6) {
        CHECK(grad_close(g.b1(r), testutil::fd(&p.b1(r), loss), 1e-4));
        for (int c = 0; c < kStateDim; c += 61)
            CHECK(grad_close(g.W1(r, c), testutil::fd(&p.W1(r, c), loss), 1e-4));
    }
}

TEST_CASE("reward arithmetic") {
    CHECK(reward(0.7, 0.2, 1.0, RewardSpec{}) == doctest::Approx(0.697).epsilon(1e-12));
    CHECK(reward(0.0, 0.0, 0.0, RewardSpec{}) == 0.0);
    CHECK(reward(0.4, 5.0, 100.0, RewardSpec{1.0, 0.0, 0.0}) == doctest::Approx(0.4));
    // monotone: better accuracy up, entropy and probe count down
    CHECK(reward(0.8, 0.2, 1.0, RewardSpec{}) > reward(0.7, 0.2, 1.0, RewardSpec{}));
    CHECK(reward(0.7, 0.1, 1.0, RewardSpec{}) > reward(0.7, 0.2, 1.0, RewardSpec{}));
    CHECK(reward(0.7, 0.2, 0.0, RewardSpec{}) > reward(0.7, 0.2, 1.0, RewardSpec{}));
}

TEST_CASE("inner adaptation leaves the base policy untouched") {
    const MetaPolicy base(19);
    const Mat target = Mat::Ones(3, kFrameFeatures);
    const MetaPolicy adapted = inner_adapt(base, pull_toward(target), 5, 0.01);
    CHECK(base.W2 == MetaPolicy(19).W2);
    CHECK(adapted.W2 != base.W2);
}

TEST_CASE("zero steps or zero step size is the identity adaptation") {
    const MetaPolicy base(23);
    const Mat target = Mat::Ones(3, kFrameFeatures);
    CHECK(inner_adapt(base, pull_toward(target), 0, 0.01).W2 == base.W2);
    CHECK(inner_adapt(base, pull_toward(target), 5, 0.0).W2 == base.W2);
}

TEST_CASE("one inner step is a plain gradient step") {
    const MetaPolicy base(29);
    const Mat target = Mat::Constant(3, kFrameFeatures, 0.7);
    const MetaPolicy adapted = inner_adapt(base, pull_toward(target), 1, 0.1);
    const Mat expect = base.W2 - 0.1 * (base.W2 - target);
    CHECK((adapted.W2 - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("non-finite task gradients abort the adaptation") {
    const MetaPolicy base(31);
    const PolicyGradFn bad = [](const MetaPolicy&) {
        PolicyGrad g;
        g.W2(0, 0) = std::numeric_limits<double>::quiet_NaN();
        return g;
    };
    CHECK_THROWS_AS(inner_adapt(base, bad, 1, 0.1), NumericalError);
}

TEST_CASE("meta update applies the summed query gradient at adapted parameters") {
    MetaPolicy p(37);
    const Mat before = p.W2;
    const PolicyGradFn zero = [](const MetaPolicy&) { return PolicyGrad{}; };
    Mat G = Mat::Constant(3, kFrameFeatures, 2.0);
    const PolicyGradFn constant = [G](const MetaPolicy&) {
        PolicyGrad g;
        g.W2 = G;
        return g;
    };
    const int n = meta_update(p, {{zero, constant}}, 5, 0.01, 0.001);
    CHECK(n == 1);
    CHECK((p.W2 - (before - 0.001 * G)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("an empty task batch is a warning-level no-op") {
    MetaPolicy p(41);
    const Mat before = p.W2;
    CHECK(meta_update(p, {}, 5, 0.01, 0.001) == 0);
    CHECK(p.W2 == before);
}

TEST_CASE("meta training reduces post-adaptation loss on surrogate tasks") {
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        MetaPolicy p(seed + 400);
        Rng rng(seed, "meta-tasks");
        std::vector<Mat> targets;
        for (int t = 0; t < 6; ++t)
            targets.push_back(rng.normal_mat(3, kFrameFeatures, 0.0, 1.0));

        const auto mean_adapted_loss = [&](const MetaPolicy& pol) {
            double total = 0.0;
            for (const Mat& target : targets) {
                const MetaPolicy a = inner_adapt(pol, pull_toward(target), 3, 0.05);
                total += surrogate_loss(a, target);
            }
            return total / targets.size();
        };

        const double before = mean_adapted_loss(p);
        for (int it = 0; it < 200; ++it) {
            std::vector<MetaTaskFns> tasks;
            for (const Mat& target : targets)
                tasks.push_back({pull_toward(target), pull_toward(target)});
            meta_update(p, tasks, 3, 0.05, 0.01);
        }
        if (mean_adapted_loss(p) < before) ++improved;
    }
    CHECK(improved >= 4);
}
