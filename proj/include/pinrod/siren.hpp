#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pinrod/param_store.hpp"
#include "pinrod/tape.hpp"

namespace pinrod {

// Latent-modulated sine network: depth sine layers followed by an affine
// output layer. Each sine layer l computes sin(w_l * (h W_l + b_l + a Wmod_l))
// where a is the latent code; w_0 = omega0 and w_l = 1 afterwards.
struct SirenConfig {
    std::int64_t in_dim = 2;
    std::int64_t out_dim = 1;
    std::int64_t width = 128;
    std::int64_t depth = 4;       // number of sine layers
    std::int64_t latent_dim = 32;
    double omega0 = 30.0;

    void validate() const;
};

// Parameter paths: dec/l{i}/{W,b,Wmod} for sine layers, dec/out/{W,b}.
// First-layer weights U(-1/in_dim, 1/in_dim), later weights U(+-sqrt(6/fan_in)),
// modulation matrices zero so the initial decode ignores the latent.
ParamStore init_decoder(const SirenConfig& cfg, std::uint64_t seed);

// Forward pass on a tape; latents is S x latent_dim, coords is C x in_dim
// (constant), output is (S*C) x out_dim with snapshot-major row blocks.
// Differentiable w.r.t. the decoder parameters and the latents.
Var decode_on_tape(Tape& tape, ParamStore& params, const SirenConfig& cfg,
                   Var latents, const Tensor& coords);

// Convenience single-snapshot decode: latent (k) x coords (N x in) -> N x out.
Tensor decode(ParamStore& params, const SirenConfig& cfg,
              const Tensor& latent, const Tensor& coords);

// Row-batched decode: latents (B x k) -> B x N x out. B = 1 matches decode
// bitwise (same code path).
Tensor decode_batch(ParamStore& params, const SirenConfig& cfg,
                    const Tensor& latents, const Tensor& coords);

// Checkpoint: ParamStore blob plus a JSON header carrying the config.
void save_decoder(const std::string& prefix, const ParamStore& params, const SirenConfig& cfg);
std::pair<ParamStore, SirenConfig> load_decoder(const std::string& prefix);

}  // namespace pinrod
