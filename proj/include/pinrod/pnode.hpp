#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pinrod/param_store.hpp"
#include "pinrod/tape.hpp"

namespace pinrod {

// Latent dynamics d(alpha)/dt = f(alpha, mu). The physical parameters go
// through a small tanh embedding MLP once per trajectory; the embedded vector
// is concatenated with the state as input to the dynamics MLP.
struct PnodeConfig {
    std::int64_t latent_dim = 32;
    std::int64_t mu_dim = 3;
    std::int64_t embed_width = 32;
    std::int64_t embed_dim = 16;
    std::int64_t dyn_width = 128;
    std::int64_t dyn_depth = 3;  // weight layers; last one is linear
    std::int64_t substeps = 4;   // RK4 substeps per snapshot interval

    void validate() const;
};

// Xavier-uniform tanh layers; the final dynamics layer starts at zero so the
// initial vector field is stationary. Paths: emb/l{0,1}/{W,b}, dyn/l{i}/{W,b}.
ParamStore init_pnode(const PnodeConfig& cfg, std::uint64_t seed);

// One-step map g(alpha, mu) = alpha + net(concat(alpha, emb(mu))) applied
// autoregressively. Same layer layout as the dynamics net; zero-initialized
// output layer makes the initial map the identity.
ParamStore init_ar_baseline(const PnodeConfig& cfg, std::uint64_t seed);

// Parameters bound to a tape once, so repeated dynamics evaluations inside a
// rollout do not re-snapshot the weights.
struct PnodeBinding {
    std::vector<Var> emb_w, emb_b, dyn_w, dyn_b;
    std::int64_t batch = 0;
};
PnodeBinding bind_pnode(Tape& tape, ParamStore& params, const PnodeConfig& cfg,
                        std::int64_t batch);

Var embed_on_tape(Tape& tape, const PnodeBinding& bind, Var mu);
Var dynamics_on_tape(Tape& tape, const PnodeBinding& bind, Var alpha, Var embedded);

// Vector field hook for the integrator; tests wire closed-form dynamics here.
using DynFn = std::function<Var(Tape&, Var)>;

// Fixed-step RK4 over the given time stamps (strictly increasing), substeps
// splits per interval. Returns one Var per stamp; element 0 is alpha0 itself.
// Gradients flow by backprop through the unrolled solver steps.
std::vector<Var> integrate_on_tape(Tape& tape, const DynFn& f, Var alpha0,
                                   const std::vector<double>& times, std::int64_t substeps);

// Plain-value conveniences over the tape machinery.
Tensor dynamics(ParamStore& params, const PnodeConfig& cfg,
                const Tensor& alpha, const Tensor& mu);
Tensor integrate(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                 const Tensor& mu, const std::vector<double>& times);
Tensor query_time(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                  const Tensor& mu, double t_query, double t0);

Var ar_step_on_tape(Tape& tape, const PnodeBinding& bind, Var alpha, Var embedded);
Tensor ar_rollout(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                  const Tensor& mu, std::int64_t n_steps);

void save_pnode(const std::string& prefix, const ParamStore& params, const PnodeConfig& cfg,
                const std::string& kind = "pnode");
std::pair<ParamStore, PnodeConfig> load_pnode(const std::string& prefix,
                                              const std::string& kind = "pnode");

}  // namespace pinrod
