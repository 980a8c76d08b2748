#include "livegraph/training.hpp"

#include <algorithm>
#include <cmath>

namespace livegraph {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoVae: return "no_graph_vae";
        case Variant::NoUnc: return "no_uncertainty";
        case Variant::NoProbe: return "no_active_probe";
        case Variant::NoMeta: return "no_meta_rl";
    }
    return "full";
}

Variant variant_from_name(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "no_graph_vae") return Variant::NoVae;
    if (name == "no_uncertainty") return Variant::NoUnc;
    if (name == "no_active_probe") return Variant::NoProbe;
    if (name == "no_meta_rl") return Variant::NoMeta;
    throw ConfigError("unknown variant: " + name);
}

double listwise_ce(const std::vector<double>& fused, int positive_index) {
    if (positive_index < 0 || positive_index >= static_cast<int>(fused.size()))
        throw DataError("listwise_ce: positive missing from list");
    const double m = *std::max_element(fused.begin(), fused.end());
    double z = 0.0;
    for (double f : fused) z += std::exp(f - m);
    return -(fused[positive_index] - m - std::log(z));
}

namespace {

Vec effective_lambda(const Vec& raw, Variant variant) {
    if (variant == Variant::NoUnc) {
        const double t = raw(0) + raw(1);
        Vec lam(3);
        lam << raw(0) / t, raw(1) / t, 0.0;
        return lam;
    }
    return raw;
}

std::vector<double> signal_backward(const std::vector<double>& raw,
                                    const std::vector<double>& g_std, bool stop_grad) {
    if (!stop_grad) return standardize_backward(raw, g_std);
    // Stop-gradient mode: mean and sigma treated as constants.
    const double n = static_cast<double>(raw.size());
    double mean = 0.0;
    for (double v : raw) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    std::vector<double> g(raw.size(), 0.0);
    if (sd < 1e-12) return g;
    for (std::size_t i = 0; i < raw.size(); ++i) g[i] = g_std[i] / sd;
    return g;
}

}  // namespace

double ranking_loss_with_grad(const Model& model, const RankTask& task,
                              const ExerciseCatalog& catalog, Variant variant, double coeff,
                              Grads* grads, const TrainWeights& w,
                              const MetaPolicy* policy_override) {
    const ConceptKernel& K = model.kernel;
    const int d = K.dim();

    // Fusion weights.
    const MetaPolicy& pol = policy_override ? *policy_override : model.policy;
    MetaPolicy::Cache pcache;
    Vec lam_raw;
    if (variant == Variant::NoMeta) {
        lam_raw = Vec::Constant(3, 1.0 / 3.0);
    } else {
        lam_raw = pol.forward_cached(task.state, pcache);
    }
    const Vec lam = effective_lambda(lam_raw, variant);

    // Student state.
    Vec h;
    Vec p, mu, lsq, theta;
    DecodeResult dec;
    std::vector<int> hist_concepts_list;
    if (variant == Variant::NoVae) {
        hist_concepts_list = history_concepts(task.profile, catalog);
        if (hist_concepts_list.empty()) {
            h = K.Z.colwise().mean().transpose();
        } else {
            h = Vec::Zero(d);
            for (int k : hist_concepts_list) h += K.Z.row(k).transpose();
            h /= static_cast<double>(hist_concepts_list.size());
        }
    } else {
        p = pooled_prior(model.priors, history_concepts(task.profile, catalog));
        const Vec enc_out = model.vae.W_enc * p + model.vae.b_enc;
        mu = enc_out.head(d);
        lsq = enc_out.tail(d);
        theta = reparameterize(mu, lsq, task.noise);
        dec = decode(theta, K);
        h = dec.h_plus;
    }

    // Raw signals over the full batch.
    const std::size_t n = task.candidate_ids.size();
    if (n == 0) throw DataError("ranking_loss: empty candidate list");
    std::vector<const Exercise*> cands(n);
    std::vector<double> rel(n), div(n), unc(n);
    for (std::size_t c = 0; c < n; ++c) {
        cands[c] = &catalog.by_id(task.candidate_ids[c]);
        rel[c] = sigmoid(h.dot(cands[c]->embedding(K)));
        div[c] = diversity(*cands[c], task.covered);
        unc[c] = subgraph_entropy(*cands[c], K);
    }
    const std::vector<double> rel_s = standardize(rel);
    const std::vector<double> div_s = standardize(div);
    const std::vector<double> unc_s = standardize(unc);

    std::vector<double> fused(n);
    for (std::size_t c = 0; c < n; ++c)
        fused[c] = lam(0) * rel_s[c] + lam(1) * div_s[c] + lam(2) * unc_s[c];
    const double loss = listwise_ce(fused, task.positive_index);
    if (!grads) return loss;

    // ---- backward ----
    const double m = *std::max_element(fused.begin(), fused.end());
    double z = 0.0;
    for (double f : fused) z += std::exp(f - m);
    std::vector<double> df(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double q = std::exp(fused[c] - m) / z;
        df[c] = coeff * (q - (static_cast<int>(c) == task.positive_index ? 1.0 : 0.0));
    }

    Vec dlam = Vec::Zero(3);
    std::vector<double> g_rel_s(n), g_unc_s(n);
    for (std::size_t c = 0; c < n; ++c) {
        dlam(0) += df[c] * rel_s[c];
        dlam(1) += df[c] * div_s[c];
        dlam(2) += df[c] * unc_s[c];
        g_rel_s[c] = lam(0) * df[c];
        g_unc_s[c] = lam(2) * df[c];
    }
    const std::vector<double> g_rel = signal_backward(rel, g_rel_s, w.std_stop_grad);
    const std::vector<double> g_unc = signal_backward(unc, g_unc_s, w.std_stop_grad);

    Vec g_h = Vec::Zero(d);
    for (std::size_t c = 0; c < n; ++c) {
        const Vec& x = cands[c]->embedding(K);
        const double g_logit = g_rel[c] * rel[c] * (1.0 - rel[c]);
        g_h += g_logit * x;
        const double per = g_logit / static_cast<double>(cands[c]->concepts.size());
        for (int k : cands[c]->concepts) grads->kernel.Z.row(k) += per * h.transpose();
        if (g_unc[c] != 0.0) {
            for (const auto& [i, j] : cands[c]->cover()) {
                const double ds = g_unc[c] * bernoulli_entropy_grad(K.similarity(i, j));
                K.accumulate_similarity_grad(i, j, ds, grads->kernel);
            }
        }
    }

    if (variant == Variant::NoVae) {
        if (hist_concepts_list.empty()) {
            const double per = 1.0 / static_cast<double>(K.num_concepts());
            for (int k = 0; k < K.num_concepts(); ++k)
                grads->kernel.Z.row(k) += per * g_h.transpose();
        } else {
            const double per = 1.0 / static_cast<double>(hist_concepts_list.size());
            for (int k : hist_concepts_list) grads->kernel.Z.row(k) += per * g_h.transpose();
        }
    } else {
        const Vec d_theta = decode_backward(theta, K, dec, g_h, grads->kernel.Z);
        const Vec d_mu = d_theta;
        const Vec d_lsq = (d_theta.array() * (theta - mu).array() * 0.5).matrix();
        Vec d_enc(2 * d);
        d_enc << d_mu, d_lsq;
        grads->vae.W_enc += d_enc * p.transpose();
        grads->vae.b_enc += d_enc;
    }

    if (variant != Variant::NoMeta) {
        Vec dlam_raw = dlam;
        if (variant == Variant::NoUnc) {
            const double a = lam_raw(0), bb = lam_raw(1);
            const double t2 = (a + bb) * (a + bb);
            dlam_raw = Vec::Zero(3);
            dlam_raw(0) = bb * (dlam(0) - dlam(1)) / t2;
            dlam_raw(1) = a * (dlam(1) - dlam(0)) / t2;
        }
        pol.backward(pcache, dlam_raw, grads->policy);
    }
    return loss;
}

LossBreakdown total_loss(const Model& model, const TrainBatch& batch,
                         const ExerciseCatalog& catalog, Variant variant, const TrainWeights& w,
                         Grads* grads) {
    LossBreakdown out;
    const int M = model.kernel.num_concepts();
    const int d = model.kernel.dim();
    const int pd = model.priors.prior_dim();

    if (!batch.rank_tasks.empty()) {
        const double inv = 1.0 / static_cast<double>(batch.rank_tasks.size());
        for (const RankTask& t : batch.rank_tasks)
            out.rank += inv * ranking_loss_with_grad(model, t, catalog, variant, inv, grads, w);
        if (variant != Variant::NoVae) {
            for (const RankTask& t : batch.rank_tasks) {
                if (grads) {
                    out.vae += inv * elbo_loss_with_grad(t.profile, model.vae, model.priors,
                                                         model.kernel, catalog, t.noise,
                                                         w.lambda_vae * inv, grads->vae,
                                                         grads->kernel.Z)
                                         .loss;
                } else {
                    const EncodeResult enc = encode(model.priors, t.profile, catalog, model.vae);
                    const Vec theta_t = reparameterize(enc.mu, enc.log_sigma_sq, t.noise);
                    out.vae += inv * elbo_loss(t.profile, theta_t, model.kernel, model.vae,
                                               model.priors, catalog)
                                         .loss;
                }
            }
        }
    }

    if (!batch.probe_records.empty()) {
        const double inv = 1.0 / static_cast<double>(batch.probe_records.size());
        for (const ProbeObservation& o : batch.probe_records) {
            out.kernel += inv * bernoulli_nll(o.response, model.kernel.similarity(o.i, o.j));
            if (grads)
                model.kernel.accumulate_pair_nll_grad(o.i, o.j, o.response, w.lambda_ker * inv,
                                                      grads->kernel);
        }
        if (w.omega_in_kernel_loss) {
            out.kernel += model.kernel.regularization();
            if (grads) model.kernel.accumulate_omega_grad(w.lambda_ker, grads->kernel);
        }
    }

    if (!batch.meta_tasks.empty()) {
        const double inv = 1.0 / static_cast<double>(batch.meta_tasks.size());
        for (const MetaTask& task : batch.meta_tasks) {
            const PolicyGradFn support_grad = [&](const MetaPolicy& pol) {
                Grads scratch(M, d, pd);
                const double sinv = 1.0 / std::max<std::size_t>(1, task.support.size());
                for (const RankTask& t : task.support)
                    ranking_loss_with_grad(model, t, catalog, variant, sinv, &scratch, w, &pol);
                return scratch.policy;
            };
            const MetaPolicy adapted =
                inner_adapt(model.policy, support_grad, w.inner_steps, w.inner_alpha);
            const double qinv = 1.0 / std::max<std::size_t>(1, task.query.size());
            for (const RankTask& t : task.query) {
                // First-order outer pass: gradients at the adapted parameters
                // accumulate directly into the shared gradient buffers.
                out.maml += inv * qinv *
                            ranking_loss_with_grad(model, t, catalog, variant,
                                                   w.lambda_meta * inv * qinv, grads, w, &adapted);
            }
        }
    }

    out.total = out.rank + w.lambda_vae * out.vae + w.lambda_ker * out.kernel +
                w.lambda_meta * out.maml;
    if (!std::isfinite(out.total)) {
        std::string module = "training";
        if (!std::isfinite(out.rank)) module = "reranker";
        else if (!std::isfinite(out.vae)) module = "student_vae";
        else if (!std::isfinite(out.kernel)) module = "kernel";
        else if (!std::isfinite(out.maml)) module = "meta_controller";
        throw NumericalError("total_loss: NaN component from module " + module);
    }
    if (grads) {
        out.grad_norm_kernel = std::sqrt(grads->kernel.Z.squaredNorm() +
                                         grads->kernel.M_proj.squaredNorm() +
                                         grads->kernel.b * grads->kernel.b);
        out.grad_norm_vae =
            std::sqrt(grads->vae.W_enc.squaredNorm() + grads->vae.b_enc.squaredNorm());
        out.grad_norm_policy =
            std::sqrt(grads->policy.W1.squaredNorm() + grads->policy.b1.squaredNorm() +
                      grads->policy.W2.squaredNorm() + grads->policy.b2.squaredNorm());
    }
    return out;
}

namespace {

struct Segment {
    double* data;
    Eigen::Index size;
};

std::vector<Segment> model_segments(Model& m) {
    return {
        {m.kernel.Z.data(), m.kernel.Z.size()},
        {m.kernel.M_proj.data(), m.kernel.M_proj.size()},
        {&m.kernel.b, 1},
        {m.vae.W_enc.data(), m.vae.W_enc.size()},
        {m.vae.b_enc.data(), m.vae.b_enc.size()},
        {m.policy.W1.data(), m.policy.W1.size()},
        {m.policy.b1.data(), m.policy.b1.size()},
        {m.policy.W2.data(), m.policy.W2.size()},
        {m.policy.b2.data(), m.policy.b2.size()},
    };
}

std::vector<Segment> grad_segments(Grads& g) {
    return {
        {g.kernel.Z.data(), g.kernel.Z.size()},
        {g.kernel.M_proj.data(), g.kernel.M_proj.size()},
        {&g.kernel.b, 1},
        {g.vae.W_enc.data(), g.vae.W_enc.size()},
        {g.vae.b_enc.data(), g.vae.b_enc.size()},
        {g.policy.W1.data(), g.policy.W1.size()},
        {g.policy.b1.data(), g.policy.b1.size()},
        {g.policy.W2.data(), g.policy.W2.size()},
        {g.policy.b2.data(), g.policy.b2.size()},
    };
}

}  // namespace

Eigen::Index param_count(const Model& model) {
    auto segs = model_segments(const_cast<Model&>(model));
    Eigen::Index n = 0;
    for (const Segment& s : segs) n += s.size;
    return n;
}

Vec pack_params(const Model& model) {
    auto segs = model_segments(const_cast<Model&>(model));
    Vec flat(param_count(model));
    Eigen::Index at = 0;
    for (const Segment& s : segs) {
        flat.segment(at, s.size) = Eigen::Map<const Vec>(s.data, s.size);
        at += s.size;
    }
    return flat;
}

void unpack_params(const Vec& flat, Model& model) {
    auto segs = model_segments(model);
    Eigen::Index at = 0;
    for (const Segment& s : segs) {
        Eigen::Map<Vec>(s.data, s.size) = flat.segment(at, s.size);
        at += s.size;
    }
    if (at != flat.size()) throw ConfigError("unpack_params: size mismatch");
    model.kernel.commit_external_update();
}

Vec pack_grads(const Model& model, const Grads& grads) {
    auto segs = grad_segments(const_cast<Grads&>(grads));
    Vec flat(param_count(model));
    Eigen::Index at = 0;
    for (const Segment& s : segs) {
        flat.segment(at, s.size) = Eigen::Map<const Vec>(s.data, s.size);
        at += s.size;
    }
    return flat;
}

LossBreakdown backward_and_step(Model& model, const TrainBatch& batch,
                                const ExerciseCatalog& catalog, Variant variant,
                                const TrainWeights& w, AdamState& opt) {
    Grads grads(model.kernel.num_concepts(), model.kernel.dim(), model.priors.prior_dim());
    LossBreakdown breakdown = total_loss(model, batch, catalog, variant, w, &grads);

    Vec g = pack_grads(model, grads);
    const double norm = g.norm();
    if (norm > opt.clip) {
        g *= opt.clip / norm;
        breakdown.clipped = true;
    }

    const Eigen::Index n = param_count(model);
    if (opt.m.size() != n) {
        opt.m = Vec::Zero(n);
        opt.v = Vec::Zero(n);
        opt.step_count = 0;
    }
    ++opt.step_count;
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g;
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    Vec x = pack_params(model);
    x -= (opt.lr * (opt.m / bc1).array() / ((opt.v / bc2).array().sqrt() + opt.eps)).matrix();
    unpack_params(x, model);
    return breakdown;
}

}  // namespace livegraph
