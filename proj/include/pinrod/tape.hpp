#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pinrod/tensor.hpp"

namespace pinrod {

using Var = std::int32_t;

// Reverse-mode tape over 2-d tensors. Nodes are recorded in topological order
// by construction; backward() walks them once in reverse. All kernels use a
// fixed per-element reduction order, so results are bitwise reproducible for
// any thread count.
class Tape {
public:
    // Binds an external tensor (parameter or differentiable input). Gradients
    // accumulate into t.grad when t.requires_grad is set.
    Var leaf(Tensor& t);

    // Owned constant; no gradient flows into it.
    Var constant(Tensor t);

    Var matmul(Var a, Var b);

    // Elementwise ops. add/sub/mul accept equal shapes or a scalar on either
    // side; no other broadcasting.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var sin(Var a);
    Var tanh(Var a);

    // Row-wise concatenation of (m x p) and (m x q) into (m x (p+q)).
    Var concat(Var a, Var b);

    // Stacks same-width blocks vertically; total rows = sum of operand rows.
    Var stack_rows(const std::vector<Var>& parts);

    // (r x c) -> (r*times x c), row i repeated as a contiguous block.
    Var repeat_rows(Var a, std::int64_t times);

    Var sum(Var a);
    Var mse(Var pred, Var target);

    const Tensor& val(Var v) const { return nodes_[v].value; }

    // Populates grads of every reachable requires_grad leaf. Grads accumulate
    // across calls; callers zero them between steps.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf, Const, MatMul, Add, Sub, Mul, Scale, Sin, Tanh,
        Concat, StackRows, RepeatRows, Sum, Mse,
    };

    struct Node {
        Tensor value;
        std::vector<double> grad;  // allocated during backward when needed
        Tensor* external = nullptr;
        std::vector<Var> parents;
        Op op = Op::Const;
        double scalar = 0.0;       // Scale factor / RepeatRows times
        bool needs_grad = false;
    };

    Var push(Node n);
    Node& node(Var v) { return nodes_[v]; }
    void check_valid(Var v) const;
    void backward_node(Var v);
    std::vector<double>& grad_buf(Var v);

    std::vector<Node> nodes_;
};

// Thread pool width for the matmul kernels (OpenMP). 0 = library default.
void set_num_threads(int n);

}  // namespace pinrod
