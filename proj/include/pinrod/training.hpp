#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pinrod/adam.hpp"
#include "pinrod/datagen.hpp"
#include "pinrod/pnode.hpp"
#include "pinrod/siren.hpp"

namespace pinrod {

// Per-trajectory, per-snapshot latent codes produced by stage-1 training.
// Codes are plain values here; only the optimizer inside pretrain treats them
// as trainable.
struct LatentTable {
    std::int64_t n_traj = 0, n_times = 0, latent_dim = 0;
    std::vector<double> codes;            // n_traj * n_times * latent_dim
    std::vector<double> times;            // normalized stamps
    std::vector<std::int64_t> traj_ids;   // dataset trajectory indices

    const double* row(std::int64_t traj, std::int64_t time_idx) const {
        return &codes[(traj * n_times + time_idx) * latent_dim];
    }
    Tensor row_tensor(std::int64_t traj, std::int64_t time_idx) const;

    std::uint64_t checksum() const;
    void save(const std::string& prefix) const;
    static LatentTable load(const std::string& prefix);
};

struct TrainConfig {
    std::int64_t stage1_epochs = 120;
    double decoder_lr = 1e-4;
    double latent_lr = 1e-2;
    std::int64_t coord_batch = 1024;
    std::int64_t snapshot_batch = 8;
    double latent_l2 = 1e-4;

    std::int64_t stage2_epochs = 300;   // windowed phase
    double pnode_lr = 1e-3;
    std::int64_t window = 8;            // snapshots per window (w >= 2)
    std::int64_t finetune_epochs = 150; // full-rollout phase
    std::int64_t rollout_batch = 8;

    std::int64_t ar_epochs = 300;
    double ar_lr = 1e-3;

    std::uint64_t seed = 7;

    void validate() const;
};

struct LatentFitConfig {
    std::int64_t steps = 500;
    double lr = 1e-2;
    double l2 = 1e-4;
};

struct TrainLogEntry {
    std::string stage;
    std::int64_t epoch;
    double loss;
    double wall_ms;
};
using TrainLog = std::vector<TrainLogEntry>;

void write_train_log(const std::string& path, const TrainLog& log);

struct PretrainResult {
    ParamStore decoder;
    LatentTable latents;
    TrainLog log;
    double train_rel_l2 = 0.0;  // mean over training snapshots, physical units
};

// Stage 1: joint Adam over decoder weights and per-snapshot latent codes from
// zero init, minimizing mse + l2 * |alpha|^2 on coordinate minibatches of the
// training split.
PretrainResult pretrain(const Dataset& ds, const SirenConfig& cfg, const TrainConfig& tc);

struct PnodeTrainResult {
    ParamStore params;
    TrainLog log;
};

// Stage 2: frozen latents as targets. Windowed rollouts first (all
// trajectories batched per window start), then full-horizon rollouts from
// t = 0 to match the inference regime.
PnodeTrainResult train_pnode(const LatentTable& latents, const Tensor& mus_normalized,
                             const PnodeConfig& pcfg, const TrainConfig& tc);

// One-step teacher-forced regression alpha_{t+1} = g(alpha_t, mu); no rollout
// fine-tune, so integration error accumulates by construction.
PnodeTrainResult train_ar_baseline(const LatentTable& latents, const Tensor& mus_normalized,
                                   const PnodeConfig& pcfg, const TrainConfig& tc);

// Encoding-by-optimization: Adam over a single latent code from zero init
// against a frozen decoder; returns the best iterate (never worse than the
// init). Inputs must already be normalized.
Tensor fit_latent(ParamStore& decoder, const SirenConfig& cfg, const Tensor& coords_norm,
                  const Tensor& values_norm, const LatentFitConfig& fc);

// Full pipeline from a raw initial snapshot: auto-decode alpha0, integrate
// the latent ODE at the queried times, decode at the queried coordinates,
// return physical-unit values of shape {T, N, F}.
Tensor forecast(const Dataset& ds, ParamStore& decoder, const SirenConfig& dcfg,
                ParamStore& pnode, const PnodeConfig& pcfg,
                const Tensor& u0_coords_phys, const Tensor& u0_values_phys,
                const std::vector<double>& mu_phys,
                const std::vector<double>& query_times_norm,
                const Tensor& query_coords_phys, const LatentFitConfig& fc);

}  // namespace pinrod
