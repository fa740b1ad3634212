#include "pinrod/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pinrod {

namespace {

double eval_loss(const LossBuilder& f) {
    Tape tape;
    Var loss = f(tape);
    const Tensor& v = tape.val(loss);
    if (!v.is_scalar()) throw ContractError("grad_check: loss builder must produce a scalar");
    return v.data[0];
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, ParamStore& params, double eps, double tol) {
    if (!(eps > 1e-7 && eps < 1e-3)) {
        throw ContractError("grad_check: eps must lie in (1e-7, 1e-3), got " + std::to_string(eps));
    }

    const double l0 = eval_loss(f);
    const double l1 = eval_loss(f);
    if (l0 != l1) {
        throw ContractError("grad_check: two forward passes disagree (" + std::to_string(l0) +
                            " vs " + std::to_string(l1) + "); loss builder is not deterministic");
    }

    params.zero_grad();
    {
        Tape tape;
        Var loss = f(tape);
        tape.backward(loss);
    }

    GradCheckReport report;
    report.tol = tol;
    report.eps = eps;
    for (auto& [path, t] : params) {
        GradCheckReport::Entry entry;
        entry.path = path;
        for (std::size_t i = 0; i < t->data.size(); ++i) {
            const double saved = t->data[i];
            t->data[i] = saved + eps;
            const double fp = eval_loss(f);
            t->data[i] = saved - eps;
            const double fm = eval_loss(f);
            t->data[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double g = t->grad[i];
            const double denom = std::max({std::fabs(g), std::fabs(fd), 1e-6});
            const double rel = std::fabs(g - fd) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = static_cast<std::int64_t>(i);
                entry.tape_grad = g;
                entry.fd_grad = fd;
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_param.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err << " tol=" << tol
       << " eps=" << eps << "\n";
    for (const auto& e : per_param) {
        os << "  " << e.path << ": max_rel_err=" << e.max_rel_err;
        if (e.worst_index >= 0) {
            os << " at [" << e.worst_index << "] tape=" << e.tape_grad << " fd=" << e.fd_grad;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace pinrod
