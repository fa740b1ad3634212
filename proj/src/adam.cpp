#include "pinrod/adam.hpp"

#include <cmath>

namespace pinrod {

void adam_step(ParamStore& store, AdamState& state, double lr,
               std::pair<double, double> betas, double eps) {
    const double b1 = betas.first, b2 = betas.second;
    for (auto& [path, t] : store) {
        if (t->grad.empty()) {
            throw ContractError("adam_step: no gradient for parameter " + path);
        }
        auto& slot = state.slots[path];
        if (slot.m.empty()) {
            slot.m.assign(t->data.size(), 0.0);
            slot.v.assign(t->data.size(), 0.0);
        }
        slot.t += 1;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.t));
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double g = t->grad[i];
            slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
            slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
            const double mhat = slot.m[i] / c1;
            const double vhat = slot.v[i] / c2;
            t->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        t->zero_grad();
    }
}

}  // namespace pinrod
