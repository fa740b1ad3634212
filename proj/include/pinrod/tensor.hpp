#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "pinrod/errors.hpp"

namespace pinrod {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f64 tensor. Values are treated as immutable once an op has
// consumed them; only the grad slot mutates during training.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty, or same length as data

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> d);  // shape {1, n}

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return size() == 1; }

    // 2-d view helpers; 1-d tensors count as a single row.
    std::int64_t rows() const;
    std::int64_t cols() const;

    double& at(std::int64_t r, std::int64_t c) { return data[r * cols() + c]; }
    double at(std::int64_t r, std::int64_t c) const { return data[r * cols() + c]; }

    void ensure_grad();   // allocates zeros if absent
    void zero_grad();     // zeroes in place if present
    void accumulate_grad(const std::vector<double>& g);
};

// Raises NumericError naming the first offending flat index if any value is
// NaN or Inf.
void assert_finite(const Tensor& t, const std::string& what);
void assert_finite(const std::vector<double>& v, const std::string& what);

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace pinrod
