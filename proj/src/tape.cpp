#include "pinrod/tape.hpp"

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pinrod {

void set_num_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace {

// C (m x n) += A (m x k) * B (k x n). Each output element is accumulated
// sequentially over k by a single thread; parallelism is across rows.
void gemm_acc(const double* A, const double* B, double* C,
              std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static) if (m > 8)
    for (std::int64_t i = 0; i < m; ++i) {
        double* ci = C + i * n;
        const double* ai = A + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double a = ai[kk];
            const double* bk = B + kk * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += a * bk[j];
        }
    }
}

// dA (m x k) += G (m x n) * B^T; rows of G and B are contiguous dots.
void gemm_acc_bt(const double* G, const double* B, double* dA,
                 std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static) if (m > 8)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* gi = G + i * n;
        double* dai = dA + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double* bk = B + kk * n;
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) acc += gi[j] * bk[j];
            dai[kk] += acc;
        }
    }
}

// dB (k x n) += A^T * G (m x n).
void gemm_acc_at(const double* A, const double* G, double* dB,
                 std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static) if (k > 8)
    for (std::int64_t kk = 0; kk < k; ++kk) {
        double* dbk = dB + kk * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const double a = A[i * k + kk];
            const double* gi = G + i * n;
            for (std::int64_t j = 0; j < n; ++j) dbk[j] += a * gi[j];
        }
    }
}

bool is_scalar_operand(const Tensor& t) { return t.size() == 1; }

}  // namespace

void Tape::check_valid(Var v) const {
    if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) {
        throw ContractError("tape: variable " + std::to_string(v) + " not on this tape");
    }
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::leaf(Tensor& t) {
    Node n;
    n.value = Tensor(t.shape, t.data);  // snapshot of the current values
    n.external = &t;
    n.op = Op::Leaf;
    n.needs_grad = t.requires_grad;
    return push(std::move(n));
}

Var Tape::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.op = Op::Const;
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    check_valid(a);
    check_valid(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    const auto m = ta.rows(), k = ta.cols(), k2 = tb.rows(), p = tb.cols();
    if (k != k2) {
        throw ContractError("matmul: inner dimensions disagree: " + shape_str(ta.shape) +
                            " * " + shape_str(tb.shape));
    }
    Node n;
    n.value = Tensor::zeros({m, p});
    gemm_acc(ta.data.data(), tb.data.data(), n.value.data.data(), m, k, p);
    n.parents = {a, b};
    n.op = Op::MatMul;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    check_valid(a);
    check_valid(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Node n;
    if (same_shape(ta, tb) || (is_scalar_operand(ta) && is_scalar_operand(tb))) {
        n.value = ta;
        for (std::int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] += tb.data[i % tb.data.size()];
    } else if (is_scalar_operand(tb)) {
        n.value = ta;
        const double s = tb.data[0];
        for (auto& x : n.value.data) x += s;
    } else if (is_scalar_operand(ta)) {
        n.value = tb;
        const double s = ta.data[0];
        for (auto& x : n.value.data) x += s;
    } else {
        throw ContractError("add: incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    }
    n.value.requires_grad = false;
    n.value.grad.clear();
    n.parents = {a, b};
    n.op = Op::Add;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    check_valid(a);
    check_valid(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Node n;
    if (same_shape(ta, tb) || (is_scalar_operand(ta) && is_scalar_operand(tb))) {
        n.value = ta;
        for (std::int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] -= tb.data[i % tb.data.size()];
    } else if (is_scalar_operand(tb)) {
        n.value = ta;
        const double s = tb.data[0];
        for (auto& x : n.value.data) x -= s;
    } else if (is_scalar_operand(ta)) {
        n.value = tb;
        const double s = ta.data[0];
        for (auto& x : n.value.data) x = s - x;
    } else {
        throw ContractError("sub: incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    }
    n.value.requires_grad = false;
    n.value.grad.clear();
    n.parents = {a, b};
    n.op = Op::Sub;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    check_valid(a);
    check_valid(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    Node n;
    if (same_shape(ta, tb) || (is_scalar_operand(ta) && is_scalar_operand(tb))) {
        n.value = ta;
        for (std::int64_t i = 0; i < n.value.size(); ++i) n.value.data[i] *= tb.data[i % tb.data.size()];
    } else if (is_scalar_operand(tb)) {
        n.value = ta;
        const double s = tb.data[0];
        for (auto& x : n.value.data) x *= s;
    } else if (is_scalar_operand(ta)) {
        n.value = tb;
        const double s = ta.data[0];
        for (auto& x : n.value.data) x *= s;
    } else {
        throw ContractError("mul: incompatible shapes " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    }
    n.value.requires_grad = false;
    n.value.grad.clear();
    n.parents = {a, b};
    n.op = Op::Mul;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
    check_valid(a);
    Node n;
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    n.value.grad.clear();
    for (auto& x : n.value.data) x *= c;
    n.parents = {a};
    n.op = Op::Scale;
    n.scalar = c;
    n.needs_grad = nodes_[a].needs_grad;
    return push(std::move(n));
}

Var Tape::sin(Var a) {
    check_valid(a);
    Node n;
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    n.value.grad.clear();
    for (auto& x : n.value.data) x = std::sin(x);
    n.parents = {a};
    n.op = Op::Sin;
    n.needs_grad = nodes_[a].needs_grad;
    return push(std::move(n));
}

Var Tape::tanh(Var a) {
    check_valid(a);
    Node n;
    n.value = nodes_[a].value;
    n.value.requires_grad = false;
    n.value.grad.clear();
    for (auto& x : n.value.data) x = std::tanh(x);
    n.parents = {a};
    n.op = Op::Tanh;
    n.needs_grad = nodes_[a].needs_grad;
    return push(std::move(n));
}

Var Tape::concat(Var a, Var b) {
    check_valid(a);
    check_valid(b);
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    const auto m = ta.rows(), p = ta.cols(), m2 = tb.rows(), q = tb.cols();
    if (m != m2) {
        throw ContractError("concat: leading dimensions disagree: " + shape_str(ta.shape) +
                            " vs " + shape_str(tb.shape));
    }
    Node n;
    n.value = Tensor::zeros({m, p + q});
    for (std::int64_t i = 0; i < m; ++i) {
        std::memcpy(&n.value.data[i * (p + q)], &ta.data[i * p], sizeof(double) * p);
        std::memcpy(&n.value.data[i * (p + q) + p], &tb.data[i * q], sizeof(double) * q);
    }
    n.parents = {a, b};
    n.op = Op::Concat;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return push(std::move(n));
}

Var Tape::stack_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("stack_rows: no operands");
    std::int64_t total_rows = 0;
    const std::int64_t c = nodes_[parts[0]].value.cols();
    for (Var v : parts) {
        check_valid(v);
        if (nodes_[v].value.cols() != c) {
            throw ContractError("stack_rows: column counts disagree: " +
                                shape_str(nodes_[parts[0]].value.shape) + " vs " +
                                shape_str(nodes_[v].value.shape));
        }
        total_rows += nodes_[v].value.rows();
    }
    Node n;
    n.value = Tensor::zeros({total_rows, c});
    std::int64_t r = 0;
    for (Var v : parts) {
        const Tensor& t = nodes_[v].value;
        std::memcpy(&n.value.data[r * c], t.data.data(), sizeof(double) * t.data.size());
        r += t.rows();
        n.needs_grad = n.needs_grad || nodes_[v].needs_grad;
    }
    n.parents = parts;
    n.op = Op::StackRows;
    return push(std::move(n));
}

Var Tape::repeat_rows(Var a, std::int64_t times) {
    check_valid(a);
    if (times < 1) throw ContractError("repeat_rows: times must be >= 1");
    const Tensor& ta = nodes_[a].value;
    const auto r = ta.rows(), c = ta.cols();
    Node n;
    n.value = Tensor::zeros({r * times, c});
    for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < times; ++j) {
            std::memcpy(&n.value.data[(i * times + j) * c], &ta.data[i * c], sizeof(double) * c);
        }
    }
    n.parents = {a};
    n.op = Op::RepeatRows;
    n.scalar = static_cast<double>(times);
    n.needs_grad = nodes_[a].needs_grad;
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    check_valid(a);
    const Tensor& ta = nodes_[a].value;
    double acc = 0.0;
    for (double x : ta.data) acc += x;
    Node n;
    n.value = Tensor::scalar(acc);
    n.parents = {a};
    n.op = Op::Sum;
    n.needs_grad = nodes_[a].needs_grad;
    return push(std::move(n));
}

Var Tape::mse(Var pred, Var target) {
    check_valid(pred);
    check_valid(target);
    const Tensor& tp = nodes_[pred].value;
    const Tensor& tt = nodes_[target].value;
    if (!same_shape(tp, tt)) {
        throw ContractError("mse: shapes disagree: " + shape_str(tp.shape) + " vs " + shape_str(tt.shape));
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < tp.size(); ++i) {
        const double d = tp.data[i] - tt.data[i];
        acc += d * d;
    }
    Node n;
    n.value = Tensor::scalar(acc / static_cast<double>(tp.size()));
    n.parents = {pred, target};
    n.op = Op::Mse;
    n.needs_grad = nodes_[pred].needs_grad || nodes_[target].needs_grad;
    return push(std::move(n));
}

std::vector<double>& Tape::grad_buf(Var v) {
    Node& n = nodes_[v];
    if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    check_valid(loss);
    if (!nodes_[loss].value.is_scalar()) {
        throw ContractError("backward: loss must be scalar, got " + shape_str(nodes_[loss].value.shape));
    }
    // fresh pass: drop buffers from any previous backward on this tape
    for (auto& n : nodes_) n.grad.clear();
    grad_buf(loss)[0] = 1.0;
    for (Var v = loss; v >= 0; --v) {
        Node& n = nodes_[v];
        if (n.grad.empty() || !n.needs_grad) continue;
        backward_node(v);
    }
}

void Tape::backward_node(Var v) {
    Node& n = nodes_[v];
    const std::vector<double>& g = n.grad;
    auto parent_needs = [&](std::size_t idx) {
        return nodes_[n.parents[idx]].needs_grad;
    };

    switch (n.op) {
        case Op::Leaf:
            if (n.external && n.external->requires_grad) n.external->accumulate_grad(g);
            break;
        case Op::Const:
            break;
        case Op::MatMul: {
            const Tensor& ta = nodes_[n.parents[0]].value;
            const Tensor& tb = nodes_[n.parents[1]].value;
            const auto m = ta.rows(), k = ta.cols(), p = tb.cols();
            if (parent_needs(0)) {
                gemm_acc_bt(g.data(), tb.data.data(), grad_buf(n.parents[0]).data(), m, k, p);
            }
            if (parent_needs(1)) {
                gemm_acc_at(ta.data.data(), g.data(), grad_buf(n.parents[1]).data(), m, k, p);
            }
            break;
        }
        case Op::Add:
        case Op::Sub: {
            const double sign_b = (n.op == Op::Sub) ? -1.0 : 1.0;
            for (int side = 0; side < 2; ++side) {
                if (!parent_needs(side)) continue;
                const double sgn = side == 0 ? 1.0 : sign_b;
                auto& pg = grad_buf(n.parents[side]);
                if (pg.size() == g.size()) {
                    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += sgn * g[i];
                } else {  // scalar operand
                    double acc = 0.0;
                    for (double x : g) acc += x;
                    pg[0] += sgn * acc;
                }
            }
            break;
        }
        case Op::Mul: {
            const Tensor& ta = nodes_[n.parents[0]].value;
            const Tensor& tb = nodes_[n.parents[1]].value;
            for (int side = 0; side < 2; ++side) {
                if (!parent_needs(side)) continue;
                const Tensor& other = side == 0 ? tb : ta;
                auto& pg = grad_buf(n.parents[side]);
                if (pg.size() == g.size()) {
                    if (other.data.size() == g.size()) {
                        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * other.data[i];
                    } else {
                        const double s = other.data[0];
                        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * s;
                    }
                } else {  // this operand is the scalar
                    double acc = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * other.data[i];
                    pg[0] += acc;
                }
            }
            break;
        }
        case Op::Scale: {
            if (!parent_needs(0)) break;
            auto& pg = grad_buf(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += n.scalar * g[i];
            break;
        }
        case Op::Sin: {
            if (!parent_needs(0)) break;
            const Tensor& ta = nodes_[n.parents[0]].value;
            auto& pg = grad_buf(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * std::cos(ta.data[i]);
            break;
        }
        case Op::Tanh: {
            if (!parent_needs(0)) break;
            auto& pg = grad_buf(n.parents[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = n.value.data[i];
                pg[i] += g[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::Concat: {
            const Tensor& ta = nodes_[n.parents[0]].value;
            const Tensor& tb = nodes_[n.parents[1]].value;
            const auto m = ta.rows(), p = ta.cols(), q = tb.cols();
            if (parent_needs(0)) {
                auto& pg = grad_buf(n.parents[0]);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < p; ++j) pg[i * p + j] += g[i * (p + q) + j];
            }
            if (parent_needs(1)) {
                auto& pg = grad_buf(n.parents[1]);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < q; ++j) pg[i * q + j] += g[i * (p + q) + p + j];
            }
            break;
        }
        case Op::StackRows: {
            std::int64_t r = 0;
            const std::int64_t c = n.value.cols();
            for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
                const Tensor& tp = nodes_[n.parents[pi]].value;
                if (parent_needs(pi)) {
                    auto& pg = grad_buf(n.parents[pi]);
                    for (std::size_t i = 0; i < tp.data.size(); ++i) pg[i] += g[r * c + i];
                }
                r += tp.rows();
            }
            break;
        }
        case Op::RepeatRows: {
            if (!parent_needs(0)) break;
            const Tensor& ta = nodes_[n.parents[0]].value;
            const auto r = ta.rows(), c = ta.cols();
            const auto times = static_cast<std::int64_t>(n.scalar);
            auto& pg = grad_buf(n.parents[0]);
            for (std::int64_t i = 0; i < r; ++i) {
                for (std::int64_t j = 0; j < times; ++j) {
                    const double* gs = &g[(i * times + j) * c];
                    double* ps = &pg[i * c];
                    for (std::int64_t t = 0; t < c; ++t) ps[t] += gs[t];
                }
            }
            break;
        }
        case Op::Sum: {
            if (!parent_needs(0)) break;
            auto& pg = grad_buf(n.parents[0]);
            const double s = g[0];
            for (auto& x : pg) x += s;
            break;
        }
        case Op::Mse: {
            const Tensor& tp = nodes_[n.parents[0]].value;
            const Tensor& tt = nodes_[n.parents[1]].value;
            const double c = 2.0 * g[0] / static_cast<double>(tp.size());
            if (parent_needs(0)) {
                auto& pg = grad_buf(n.parents[0]);
                for (std::int64_t i = 0; i < tp.size(); ++i) pg[i] += c * (tp.data[i] - tt.data[i]);
            }
            if (parent_needs(1)) {
                auto& pg = grad_buf(n.parents[1]);
                for (std::int64_t i = 0; i < tp.size(); ++i) pg[i] -= c * (tp.data[i] - tt.data[i]);
            }
            break;
        }
    }
}

}  // namespace pinrod
