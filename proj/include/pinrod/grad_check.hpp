#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pinrod/param_store.hpp"
#include "pinrod/tape.hpp"

namespace pinrod {

// Builds a scalar loss on the given tape from the current parameter values.
// Must be deterministic; grad_check evaluates it many times.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckReport {
    struct Entry {
        std::string path;
        double max_rel_err = 0.0;
        std::int64_t worst_index = -1;
        double tape_grad = 0.0;
        double fd_grad = 0.0;
    };
    std::vector<Entry> per_param;
    double max_rel_err = 0.0;
    double tol = 0.0;
    double eps = 0.0;
    bool pass = false;

    std::string to_string() const;
};

// Compares tape gradients against central finite differences for every entry
// of every parameter in the store. Relative error uses the denominator
// max(|tape|, |fd|, 1e-6) so dead directions do not blow up the report.
GradCheckReport grad_check(const LossBuilder& f, ParamStore& params, double eps, double tol);

}  // namespace pinrod
