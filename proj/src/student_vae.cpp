#include "livegraph/student_vae.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace livegraph {

PriorEmbeddingTable PriorEmbeddingTable::synthetic(int num_concepts, int prior_dim,
                                                   std::uint64_t seed) {
    PriorEmbeddingTable t;
    t.source = Source::Synthetic;
    t.rows.resize(num_concepts, prior_dim);
    for (int k = 0; k < num_concepts; ++k) {
        Rng rng(seed, "prior-row", static_cast<std::uint64_t>(k));
        for (int c = 0; c < prior_dim; ++c) t.rows(k, c) = rng.normal(0.0, 1.0);
    }
    return t;
}

PriorEmbeddingTable PriorEmbeddingTable::load(const std::string& path, int num_concepts,
                                              int prior_dim) {
    std::ifstream in(path);
    if (!in) throw DataError("prior embeddings: cannot open " + path);
    PriorEmbeddingTable t;
    t.source = Source::File;
    t.rows.resize(num_concepts, prior_dim);
    std::string line;
    int row = 0;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (row >= num_concepts)
            throw DataError("prior embeddings: more rows than concepts at line " +
                            std::to_string(lineno));
        std::istringstream ss(line);
        for (int c = 0; c < prior_dim; ++c) {
            double v;
            if (!(ss >> v) || !std::isfinite(v))
                throw DataError("prior embeddings: bad value at line " + std::to_string(lineno));
            t.rows(row, c) = v;
        }
        ++row;
    }
    if (row != num_concepts)
        throw DataError("prior embeddings: expected " + std::to_string(num_concepts) +
                        " rows, got " + std::to_string(row));
    return t;
}

VaeParams::VaeParams(int dim, int prior_dim, std::uint64_t seed) {
    Rng rng(seed, "vae-init");
    W_enc = rng.normal_mat(2 * dim, prior_dim, 0.0, 0.02);
    b_enc = Vec::Zero(2 * dim);
    beta = 0.1;
    Rng prng(seed, "vae-prior-proj");
    prior_proj = prng.normal_mat(dim, prior_dim, 0.0, 1.0 / std::sqrt(double(prior_dim)));
}

std::vector<int> history_concepts(const StudentProfile& profile, const ExerciseCatalog& catalog) {
    std::set<int> seen;
    for (const InteractionItem& it : profile.history)
        for (int k : catalog.by_id(it.exercise_id).concepts) seen.insert(k);
    return {seen.begin(), seen.end()};
}

Vec pooled_prior(const PriorEmbeddingTable& priors, const std::vector<int>& concepts) {
    if (concepts.empty()) return priors.rows.colwise().mean().transpose();
    Vec p = Vec::Zero(priors.prior_dim());
    for (int k : concepts) {
        if (k < 0 || k >= priors.num_concepts())
            throw DataError("pooled_prior: concept index out of range");
        p += priors.rows.row(k).transpose();
    }
    return p / static_cast<double>(concepts.size());
}

EncodeResult encode(const PriorEmbeddingTable& priors, const StudentProfile& profile,
                    const ExerciseCatalog& catalog, const VaeParams& params) {
    if (params.W_enc.cols() != priors.prior_dim())
        throw ConfigError("encode: prior table width does not match W_enc");
    const Vec p = pooled_prior(priors, history_concepts(profile, catalog));
    const Vec out = params.W_enc * p + params.b_enc;
    const int d = params.dim();
    return {out.head(d), out.tail(d)};
}

Vec reparameterize(const Vec& mu, const Vec& log_sigma_sq, const Vec& noise) {
    return mu.array() + (0.5 * log_sigma_sq.array()).exp() * noise.array();
}

Vec sample_theta(const Vec& mu, const Vec& log_sigma_sq, std::uint64_t noise_seed) {
    Rng rng(noise_seed, "theta-noise");
    return reparameterize(mu, log_sigma_sq, rng.normal_vec(mu.size()));
}

DecodeResult decode(const Vec& theta, const ConceptKernel& kernel) {
    DecodeResult r;
    r.alpha = softmax(kernel.Z * theta);
    r.h_plus = kernel.Z.transpose() * r.alpha;
    return r;
}

Vec decode_backward(const Vec& theta, const ConceptKernel& kernel, const DecodeResult& dec,
                    const Vec& g_hplus, Mat& dZ) {
    // h = Z' alpha, alpha = softmax(Z theta)
    const Vec g_alpha = kernel.Z * g_hplus;                                  // M
    const Vec g_logits = dec.alpha.array() * (g_alpha.array() - dec.alpha.dot(g_alpha));
    dZ += dec.alpha * g_hplus.transpose();  // direct h path
    dZ += g_logits * theta.transpose();     // logits path
    return kernel.Z.transpose() * g_logits;
}

double gaussian_kl(const Vec& mu, const Vec& log_sigma_sq, const Vec& mu0) {
    // 0.5 sum( exp(lsq) + (mu - mu0)^2 - 1 - lsq )
    return 0.5 * (log_sigma_sq.array().exp() + (mu - mu0).array().square() - 1.0 -
                  log_sigma_sq.array())
                     .sum();
}

ElboResult elbo_loss(const StudentProfile& profile, const Vec& theta, const ConceptKernel& kernel,
                     const VaeParams& params, const PriorEmbeddingTable& priors,
                     const ExerciseCatalog& catalog) {
    ElboResult r;
    const DecodeResult dec = decode(theta, kernel);
    if (profile.history.empty()) {
        r.empty_history = true;
    } else {
        for (const InteractionItem& it : profile.history) {
            const Exercise& e = catalog.by_id(it.exercise_id);
            r.recon += bernoulli_nll(it.correct, sigmoid(dec.h_plus.dot(e.embedding(kernel))));
        }
    }
    const Vec p = pooled_prior(priors, history_concepts(profile, catalog));
    const EncodeResult enc = encode(priors, profile, catalog, params);
    const Vec mu0 = params.prior_proj * p;
    r.kl = gaussian_kl(enc.mu, enc.log_sigma_sq, mu0);
    r.loss = r.recon + params.beta * r.kl;
    return r;
}

ElboResult elbo_loss_with_grad(const StudentProfile& profile, const VaeParams& params,
                               const PriorEmbeddingTable& priors, const ConceptKernel& kernel,
                               const ExerciseCatalog& catalog, const Vec& noise, double coeff,
                               VaeGrad& dvae, Mat& dZ) {
    ElboResult r;
    const Vec p = pooled_prior(priors, history_concepts(profile, catalog));
    const Vec enc_out = params.W_enc * p + params.b_enc;
    const int d = params.dim();
    const Vec mu = enc_out.head(d);
    const Vec lsq = enc_out.tail(d);
    const Vec theta = reparameterize(mu, lsq, noise);
    const DecodeResult dec = decode(theta, kernel);

    Vec g_h = Vec::Zero(dec.h_plus.size());
    if (profile.history.empty()) {
        r.empty_history = true;
    } else {
        for (const InteractionItem& it : profile.history) {
            const Exercise& e = catalog.by_id(it.exercise_id);
            const Vec& x = e.embedding(kernel);
            const double pr = sigmoid(dec.h_plus.dot(x));
            r.recon += bernoulli_nll(it.correct, pr);
            const double g_logit = coeff * (clamp_unit(pr) - it.correct);
            g_h += g_logit * x;
            const double per = g_logit / static_cast<double>(e.concepts.size());
            for (int k : e.concepts) dZ.row(k) += per * dec.h_plus.transpose();
        }
    }
    const Vec mu0 = params.prior_proj * p;
    r.kl = gaussian_kl(mu, lsq, mu0);
    r.loss = r.recon + params.beta * r.kl;

    Vec d_theta = decode_backward(theta, kernel, dec, g_h, dZ);
    Vec d_mu = d_theta + coeff * params.beta * (mu - mu0);
    Vec d_lsq = (d_theta.array() * (theta - mu).array() * 0.5).matrix() +
                coeff * params.beta * 0.5 * (lsq.array().exp() - 1.0).matrix();
    Vec d_enc(2 * d);
    d_enc << d_mu, d_lsq;
    dvae.W_enc += d_enc * p.transpose();
    dvae.b_enc += d_enc;
    return r;
}

}  // namespace livegraph
