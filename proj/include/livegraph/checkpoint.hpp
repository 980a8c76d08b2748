#pragma once

#include "livegraph/config.hpp"
#include "livegraph/training.hpp"

#include <string>

namespace livegraph {

inline constexpr char kCheckpointMagic[8] = {'L', 'G', 'C', 'H', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    RunConfig config;
    Model model;
    AdamState opt;
    std::uint64_t kernel_version = 0;

    explicit Checkpoint(const RunConfig& cfg)
        : config(cfg),
          model(cfg.world.num_concepts, cfg.dim, cfg.prior_dim, cfg.seed, cfg.eta, cfg.lambda1,
                cfg.lambda2) {
        model.vae.beta = cfg.beta;
        opt.lr = cfg.lr;
        opt.clip = cfg.clip;
    }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Throws DataError on bad magic or a format/state-layout version mismatch.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace livegraph
