#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace livegraph {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Clamp applied before every Bernoulli log.
inline constexpr double kLogEps = 1e-7;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp_unit(double p) {
    if (p < kLogEps) return kLogEps;
    if (p > 1.0 - kLogEps) return 1.0 - kLogEps;
    return p;
}

// H(Bern(p)) in nats.
inline double bernoulli_entropy(double p) {
    p = clamp_unit(p);
    return -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
}

// dH/dp at the clamped value.
inline double bernoulli_entropy_grad(double p) {
    p = clamp_unit(p);
    return std::log((1.0 - p) / p);
}

// -[a log p + (1-a) log(1-p)]
inline double bernoulli_nll(int a, double p) {
    p = clamp_unit(p);
    return -(a * std::log(p) + (1 - a) * std::log(1.0 - p));
}

// KL(Bern(s) || Bern(q))
inline double bernoulli_kl(double s, double q) {
    s = clamp_unit(s);
    q = clamp_unit(q);
    return s * std::log(s / q) + (1.0 - s) * std::log((1.0 - s) / (1.0 - q));
}

inline Vec softmax(const Vec& x) {
    const double m = x.maxCoeff();
    Vec e = (x.array() - m).exp();
    return e / e.sum();
}

// ---------------------------------------------------------------------------
// Deterministic RNG. All stochastic draws in the project go through this so
// that a (seed, tag) pair replays bit-identically regardless of platform
// stdlib. splitmix64 core, Box-Muller normals.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
    return splitmix64(s);
}

inline std::uint64_t tag_hash(std::string_view tag) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // burn-in so nearby seeds decorrelate
        splitmix64(state_);
        splitmix64(state_);
    }
    Rng(std::uint64_t seed, std::string_view tag) : Rng(hash_combine(seed, tag_hash(tag))) {}
    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index)
        : Rng(hash_combine(hash_combine(seed, tag_hash(tag)), index)) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    Vec normal_vec(Eigen::Index n, double mean = 0.0, double stddev = 1.0) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(mean, stddev);
        return v;
    }

    Mat normal_mat(Eigen::Index rows, Eigen::Index cols, double mean = 0.0, double stddev = 1.0) {
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(mean, stddev);
        return m;
    }

private:
    std::uint64_t state_;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace livegraph
