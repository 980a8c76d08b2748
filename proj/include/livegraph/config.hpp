#pragma once

#include "livegraph/common.hpp"
#include "livegraph/simlab.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace livegraph {

// Every tunable in one flat key=value document. Unknown keys are rejected so
// that a typo cannot silently fall back to a default.
struct RunConfig {
    // world
    WorldConfig world;

    // model shapes
    int dim = 32;
    int prior_dim = 768;

    // kernel
    double eta = 0.05;
    double lambda1 = 0.01;
    double lambda2 = 0.1;

    // vae
    double beta = 0.1;

    // training
    int train_steps = 300;
    int batch_rank = 16;     // rank lists per step (serving batch stays 128)
    int list_size = 32;      // candidates per list, 1 positive
    int batch_probe = 8;     // logged probe observations per step
    int meta_batch = 2;      // meta tasks per step
    int meta_support = 2;    // rank tasks in a support set
    int meta_query = 2;
    int inner_steps = 5;
    double inner_alpha = 0.01;
    double beta_meta = 0.001;
    double lr = 1e-3;
    double clip = 1e4;
    double lambda_vae = 0.1;
    double lambda_ker = 1.0;
    double lambda_meta = 0.01;
    bool omega_in_kernel_loss = true;
    bool std_stop_grad = false;

    // reward
    double gamma1 = 1.0;
    double gamma2 = 0.01;
    double gamma3 = 0.001;

    // serving / probing
    int top_k = 10;
    int candidates = 128;  // scoring batch per cycle
    double p_min = 0.10;
    double p_max = 0.90;
    double probe_gate = 0.05;   // probe only when lambda_unc >= gate
    int probe_budget = 20;      // max probes per session
    int marginal_refresh = 25;  // re-fit the marginal net every N cycles
    int marginal_pretrain = 200;

    // evaluation
    int holdout = 10;
    int online_cycles = 150;

    std::uint64_t seed = 12345;
    std::string variant = "full";
    std::string dataset_path;  // empty => synthetic world

    void set(const std::string& key, const std::string& value);
    std::string serialize() const;  // sorted key=value lines
    std::uint64_t hash() const;     // FNV-1a of the serialized form
};

// Parse `key=value` lines ('#' comments, blank lines allowed).
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

std::vector<std::string> config_keys();

}  // namespace livegraph
