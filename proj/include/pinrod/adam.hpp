#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pinrod/param_store.hpp"

namespace pinrod {

// Per-parameter Adam moments, keyed by parameter path. Step counts are kept
// per path so parameters stepped at different cadences (latent codes in
// rotating minibatches) get correct bias correction.
struct AdamState {
    struct Slot {
        std::vector<double> m, v;
        std::int64_t t = 0;
    };
    std::map<std::string, Slot> slots;
};

// Standard Adam with bias correction over every parameter in the store, then
// zeroes their grads. A parameter without a populated grad is a contract
// error naming its path.
void adam_step(ParamStore& store, AdamState& state, double lr,
               std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8);

}  // namespace pinrod
