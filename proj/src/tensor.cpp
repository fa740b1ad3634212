#include "pinrod/tensor.hpp"

#include <cmath>
#include <sstream>

namespace pinrod {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw ContractError("tensor shape has non-positive dimension " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ContractError("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::row(std::vector<double> d) {
    Shape s{1, static_cast<std::int64_t>(d.size())};
    return Tensor(std::move(s), std::move(d));
}

std::int64_t Tensor::rows() const {
    if (shape.size() == 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw ContractError("expected 1-d or 2-d tensor, got " + shape_str(shape));
}

std::int64_t Tensor::cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw ContractError("expected 1-d or 2-d tensor, got " + shape_str(shape));
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    for (auto& g : grad) g = 0.0;
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void assert_finite(const std::vector<double>& v, const std::string& what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(what + ": non-finite value " + std::to_string(v[i]) +
                               " at index " + std::to_string(i));
        }
    }
}

void assert_finite(const Tensor& t, const std::string& what) {
    assert_finite(t.data, what);
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape;
}

}  // namespace pinrod
