#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace circuitgcl {

using Real = double;

/// Dense row-major 2-D array with an optional gradient slot of the same shape.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, Real fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
        }
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<Real> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged initializer for tensor");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor(r, c, std::move(data));
    }

    static Tensor column(std::span<const Real> v) {
        return Tensor(v.size(), 1, std::vector<Real>(v.begin(), v.end()));
    }

    static Tensor row_vector(std::span<const Real> v) {
        return Tensor(1, v.size(), std::vector<Real>(v.begin(), v.end()));
    }

    static Tensor scalar(Real v) { return Tensor(1, 1, v); }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    Real& operator[](std::size_t i) noexcept { return data_[i]; }
    Real operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }
    std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Real item() const {
        if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string());
        return data_[0];
    }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<const Real> grad() const {
        if (!grad_) throw ContractError("tensor has no gradient");
        return *grad_;
    }
    void set_grad(std::vector<Real> g) {
        if (g.size() != data_.size()) throw DimensionError("gradient shape does not match " + shape_string());
        grad_ = std::move(g);
    }
    void clear_grad() noexcept { grad_.reset(); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
    }

    std::string shape_string() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    /// Value equality (gradients ignored).
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Real> data_;
    std::optional<std::vector<Real>> grad_;
};

inline Real max_abs_difference(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    Real m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace circuitgcl
