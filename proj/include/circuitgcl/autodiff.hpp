#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace circuitgcl {

namespace debug {
/// Negative-control switch for the gradient checker: when set, the tanh
/// backward rule returns the negated derivative. Never set outside tests and
/// the `gradcheck --inject-bug` command.
inline std::atomic<bool>& gradient_fault() {
    static std::atomic<bool> flag{false};
    return flag;
}
}  // namespace debug

/// Numerically stable log(sum(exp(v))).
inline Real logsumexp(std::span<const Real> v) {
    if (v.empty()) throw ArgumentError("logsumexp of an empty vector");
    const Real m = *std::max_element(v.begin(), v.end());
    if (std::isinf(m)) return m;
    Real s = 0.0;
    for (Real x : v) s += std::exp(x - m);
    return m + std::log(s);
}

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    std::size_t index() const noexcept { return index_; }

private:
    friend class Tape;
    explicit Var(std::size_t i) : index_(i) {}
    std::size_t index_ = std::numeric_limits<std::size_t>::max();
};

/// Append-only record of primitive applications for reverse-mode
/// differentiation. One tape per forward pass; not thread-safe.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out, const std::vector<Real>& out_grad)>;

    /// Records an input. `requires_grad` leaves receive gradients on backward().
    Var leaf(Tensor value, bool requires_grad = true) {
        value.clear_grad();
        nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
        return Var(nodes_.size() - 1);
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Binds an external parameter tensor; repeated calls with the same
    /// tensor return the same leaf.
    Var watch(const Tensor& param, bool requires_grad = true) {
        if (auto it = watched_.find(&param); it != watched_.end()) return Var(it->second);
        Var v = leaf(param, requires_grad);
        watched_.emplace(&param, v.index());
        return v;
    }

    const Tensor& value(Var v) const { return node(v).value; }
    Real scalar(Var v) const { return node(v).value.item(); }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Records a primitive result. The backward rule is kept only when some
    /// parent requires gradients.
    Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
        bool rg = false;
        for (Var p : parents) rg = rg || node(p).requires_grad;
        nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(fn) : BackwardFn{}});
        return Var(nodes_.size() - 1);
    }

    /// Populates gradients of `output` with respect to every node that
    /// requires them. `output` must be 1x1.
    void backward(Var output) {
        Node& out = node(output);
        if (out.value.size() != 1 || out.value.rows() != 1) {
            throw ContractError("backward() requires a scalar output, got " + out.value.shape_string());
        }
        for (auto& n : nodes_) n.grad.clear();
        out.grad.assign(1, 1.0);
        for (std::size_t i = output.index() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.empty() || !n.backward) continue;
            n.backward(*this, n.value, n.grad);
        }
    }

    /// Gradient buffer of `v`; empty span when no gradient reached it.
    std::span<const Real> grad(Var v) const { return node(v).grad; }

    Tensor gradient(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols(), 0.0);
        return Tensor(n.value.rows(), n.value.cols(), n.grad);
    }

    Tensor gradient_of(const Tensor& param) const {
        auto it = watched_.find(&param);
        if (it == watched_.end()) throw ContractError("tensor was not watched on this tape");
        return gradient(Var(it->second));
    }

    /// Accumulation buffer for a parent inside a backward rule; nullptr when
    /// the parent does not need gradients.
    Real* accum(Var v) {
        Node& n = node(v);
        if (!n.requires_grad) return nullptr;
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad.data();
    }

private:
    struct Node {
        Tensor value;
        std::vector<Real> grad;
        bool requires_grad;
        BackwardFn backward;
    };

    Node& node(Var v) {
        if (v.index() >= nodes_.size()) throw ContractError("variable does not belong to this tape");
        return nodes_[v.index()];
    }
    const Node& node(Var v) const {
        if (v.index() >= nodes_.size()) throw ContractError("variable does not belong to this tape");
        return nodes_[v.index()];
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> watched_;
};

namespace detail {

using RowMajor = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline ConstMatMap map(const Tensor& t) {
    return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap map(Tensor& t) {
    return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatMap map(Real* p, std::size_t r, std::size_t c) {
    return MatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline ConstMatMap map(const Real* p, std::size_t r, std::size_t c) {
    return ConstMatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
    Tensor y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Every primitive records its local gradient rule on the tape.
// ---------------------------------------------------------------------------

inline Var matmul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.cols() != B.rows()) {
        throw DimensionError("matmul: " + A.shape_string() + " x " + B.shape_string());
    }
    Tensor C(A.rows(), B.cols());
    if (!C.empty() && A.cols() > 0) detail::map(C).noalias() = detail::map(A) * detail::map(B);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    return t.record(std::move(C), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        auto G = detail::map(g.data(), m, n);
        if (Real* da = tp.accum(a)) {
            detail::map(da, m, k).noalias() += G * detail::map(tp.value(b)).transpose();
        }
        if (Real* db = tp.accum(b)) {
            detail::map(db, k, n).noalias() += detail::map(tp.value(a)).transpose() * G;
        }
    });
}

inline Var add(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require_same_shape(A, B, "add");
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] + B[i];
    return t.record(std::move(C), {a, b}, [a, b](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        if (Real* da = tp.accum(a)) for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        if (Real* db = tp.accum(b)) for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require_same_shape(A, B, "sub");
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] - B[i];
    return t.record(std::move(C), {a, b}, [a, b](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        if (Real* da = tp.accum(a)) for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
        if (Real* db = tp.accum(b)) for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    });
}

/// Elementwise product.
inline Var mul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    detail::require_same_shape(A, B, "mul");
    Tensor C(A.rows(), A.cols());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
    return t.record(std::move(C), {a, b}, [a, b](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        if (Real* da = tp.accum(a)) {
            const Tensor& B = tp.value(b);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * B[i];
        }
        if (Real* db = tp.accum(b)) {
            const Tensor& A = tp.value(a);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * A[i];
        }
    });
}

/// x + 1 r, with r a 1xC row broadcast over every row of x.
inline Var add_row(Tape& t, Var x, Var r) {
    const Tensor& X = t.value(x);
    const Tensor& R = t.value(r);
    if (R.rows() != 1 || R.cols() != X.cols()) {
        throw DimensionError("add_row: " + X.shape_string() + " + row " + R.shape_string());
    }
    Tensor Y = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) Y(i, j) += R[j];
    const std::size_t rows = X.rows(), cols = X.cols();
    return t.record(std::move(Y), {x, r}, [x, r, rows, cols](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        if (Real* dx = tp.accum(x)) for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        if (Real* dr = tp.accum(r))
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) dr[j] += g[i * cols + j];
    });
}

/// x * (1 r) elementwise, r a 1xC row.
inline Var mul_row(Tape& t, Var x, Var r) {
    const Tensor& X = t.value(x);
    const Tensor& R = t.value(r);
    if (R.rows() != 1 || R.cols() != X.cols()) {
        throw DimensionError("mul_row: " + X.shape_string() + " * row " + R.shape_string());
    }
    Tensor Y = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) Y(i, j) *= R[j];
    const std::size_t rows = X.rows(), cols = X.cols();
    return t.record(std::move(Y), {x, r}, [x, r, rows, cols](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        const Tensor& X = tp.value(x);
        const Tensor& R = tp.value(r);
        if (Real* dx = tp.accum(x))
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[i * cols + j] * R[j];
        if (Real* dr = tp.accum(r))
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) dr[j] += g[i * cols + j] * X(i, j);
    });
}

/// x + c 1^T, with c a Bx1 column broadcast over every column of x.
inline Var add_col(Tape& t, Var x, Var c) {
    const Tensor& X = t.value(x);
    const Tensor& C = t.value(c);
    if (C.cols() != 1 || C.rows() != X.rows()) {
        throw DimensionError("add_col: " + X.shape_string() + " + column " + C.shape_string());
    }
    Tensor Y = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) Y(i, j) += C[i];
    const std::size_t rows = X.rows(), cols = X.cols();
    return t.record(std::move(Y), {x, c}, [x, c, rows, cols](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        if (Real* dx = tp.accum(x)) for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
        if (Real* dc = tp.accum(c))
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) dc[i] += g[i * cols + j];
    });
}

/// Repeats a Bx1 column into B x n.
inline Var repeat_cols(Tape& t, Var x, std::size_t n) {
    const Tensor& X = t.value(x);
    if (X.cols() != 1) throw DimensionError("repeat_cols expects a column, got " + X.shape_string());
    Tensor Y(X.rows(), n);
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) Y(i, j) = X[i];
    return t.record(std::move(Y), {x}, [x, n](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const std::size_t rows = g.size() / std::max<std::size_t>(n, 1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < n; ++j) dx[i] += g[i * n + j];
    });
}

inline Var scale(Tape& t, Var x, Real s) {
    Tensor Y = detail::map_values(t.value(x), [s](Real v) { return v * s; });
    return t.record(std::move(Y), {x}, [x, s](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * s;
    });
}

inline Var add_scalar(Tape& t, Var x, Real s) {
    Tensor Y = detail::map_values(t.value(x), [s](Real v) { return v + s; });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
}

inline Var tanh(Tape& t, Var x) {
    Tensor Y = detail::map_values(t.value(x), [](Real v) { return std::tanh(v); });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor& out, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Real sign = debug::gradient_fault().load() ? -1.0 : 1.0;
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += sign * g[i] * (1.0 - out[i] * out[i]);
    });
}

/// Parametric ReLU with one learnable slope (1x1) shared by all entries.
inline Var prelu(Tape& t, Var x, Var slope) {
    const Tensor& S = t.value(slope);
    if (S.size() != 1) throw DimensionError("prelu slope must be 1x1, got " + S.shape_string());
    const Real a = S[0];
    Tensor Y = detail::map_values(t.value(x), [a](Real v) { return v > 0.0 ? v : a * v; });
    return t.record(std::move(Y), {x, slope}, [x, slope](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        const Tensor& X = tp.value(x);
        const Real a = tp.value(slope)[0];
        if (Real* dx = tp.accum(x))
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (X[i] > 0.0 ? 1.0 : a);
        if (Real* ds = tp.accum(slope)) {
            Real acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (X[i] <= 0.0) acc += g[i] * X[i];
            ds[0] += acc;
        }
    });
}

inline Var square(Tape& t, Var x) {
    Tensor Y = detail::map_values(t.value(x), [](Real v) { return v * v; });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Tensor& X = tp.value(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += 2.0 * X[i] * g[i];
    });
}

/// |x|; the subgradient at 0 is 0.
inline Var abs(Tape& t, Var x) {
    Tensor Y = detail::map_values(t.value(x), [](Real v) { return std::abs(v); });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Tensor& X = tp.value(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (X[i] > 0.0 ? 1.0 : (X[i] < 0.0 ? -1.0 : 0.0));
    });
}

inline Var exp(Tape& t, Var x) {
    Tensor Y = detail::map_values(t.value(x), [](Real v) { return std::exp(v); });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor& out, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * out[i];
    });
}

inline Var log(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    for (std::size_t i = 0; i < X.size(); ++i)
        if (!(X[i] > 0.0)) throw NumericError("log of non-positive value");
    Tensor Y = detail::map_values(X, [](Real v) { return std::log(v); });
    return t.record(std::move(Y), {x}, [x](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Tensor& X = tp.value(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / X[i];
    });
}

/// x^p for x >= 0. At x == 0 the derivative is taken as 0 (p >= 1) so that
/// (1 - p_t)^gamma stays finite when p_t saturates.
inline Var pow_scalar(Tape& t, Var x, Real p) {
    const Tensor& X = t.value(x);
    for (std::size_t i = 0; i < X.size(); ++i)
        if (X[i] < 0.0) throw NumericError("pow_scalar of negative base");
    Tensor Y = detail::map_values(X, [p](Real v) { return p == 0.0 ? 1.0 : std::pow(v, p); });
    return t.record(std::move(Y), {x}, [x, p](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Tensor& X = tp.value(x);
        if (p == 0.0) return;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (X[i] == 0.0) {
                if (p == 1.0) dx[i] += g[i];
                continue;
            }
            dx[i] += g[i] * p * std::pow(X[i], p - 1.0);
        }
    });
}

inline Var sum(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Real s = 0.0;
    for (Real v : X.data()) s += v;
    return t.record(Tensor::scalar(s), {x}, [x](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const std::size_t n = tp.value(x).size();
        for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
    });
}

inline Var mean(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    if (X.empty()) throw ArgumentError("mean of an empty tensor");
    const Real n = static_cast<Real>(X.size());
    Real s = 0.0;
    for (Real v : X.data()) s += v;
    return t.record(Tensor::scalar(s / n), {x}, [x, n](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const std::size_t sz = tp.value(x).size();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += g[0] / n;
    });
}

/// Per-row sums, Bx1.
inline Var row_sum(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor Y(X.rows(), 1);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        Real s = 0.0;
        for (Real v : X.row(i)) s += v;
        Y[i] = s;
    }
    const std::size_t cols = X.cols();
    return t.record(std::move(Y), {x}, [x, cols](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[i];
    });
}

/// Mean over rows, 1xC.
inline Var column_mean(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    if (X.rows() == 0) throw ArgumentError("column_mean of a tensor with no rows");
    Tensor Y(1, X.cols());
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) Y[j] += X(i, j);
    const Real n = static_cast<Real>(X.rows());
    for (std::size_t j = 0; j < X.cols(); ++j) Y[j] /= n;
    const std::size_t rows = X.rows(), cols = X.cols();
    return t.record(std::move(Y), {x}, [x, rows, cols, n](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[j] / n;
    });
}

/// Each row divided by max(||row||_2, eps).
inline Var rowwise_l2_normalize(Tape& t, Var x, Real eps = 1e-8) {
    if (!(eps > 0.0)) throw ArgumentError("rowwise_l2_normalize: eps must be positive");
    const Tensor& X = t.value(x);
    Tensor Y(X.rows(), X.cols());
    std::vector<Real> denom(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        Real ss = 0.0;
        for (Real v : X.row(i)) ss += v * v;
        denom[i] = std::max(std::sqrt(ss), eps);
        for (std::size_t j = 0; j < X.cols(); ++j) Y(i, j) = X(i, j) / denom[i];
    }
    const std::size_t cols = X.cols();
    return t.record(std::move(Y), {x},
                    [x, cols, eps, denom = std::move(denom)](Tape& tp, const Tensor&, const std::vector<Real>& g) {
                        Real* dx = tp.accum(x);
                        const Tensor& X = tp.value(x);
                        for (std::size_t i = 0; i < denom.size(); ++i) {
                            const Real d = denom[i];
                            const Real* gi = g.data() + i * cols;
                            Real* di = dx + i * cols;
                            if (d > eps) {
                                // y = x/|x|:  dx = (g - y (y.g)) / |x|
                                Real yg = 0.0;
                                for (std::size_t j = 0; j < cols; ++j) yg += X(i, j) / d * gi[j];
                                for (std::size_t j = 0; j < cols; ++j) di[j] += (gi[j] - X(i, j) / d * yg) / d;
                            } else {
                                for (std::size_t j = 0; j < cols; ++j) di[j] += gi[j] / eps;
                            }
                        }
                    });
}


/// Row-wise logsumexp, Bx1.
inline Var logsumexp_rows(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    if (X.cols() == 0) throw ArgumentError("logsumexp of an empty row");
    Tensor Y(X.rows(), 1);
    for (std::size_t i = 0; i < X.rows(); ++i) Y[i] = logsumexp(X.row(i));
    const std::size_t cols = X.cols();
    return t.record(std::move(Y), {x}, [x, cols](Tape& tp, const Tensor& out, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        const Tensor& X = tp.value(x);
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[i] * std::exp(X(i, j) - out[i]);
    });
}

/// Row-wise softmax.
inline Var softmax_rows(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor Y(X.rows(), X.cols());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        if (X.cols() == 0) break;
        const Real lse = logsumexp(X.row(i));
        for (std::size_t j = 0; j < X.cols(); ++j) Y(i, j) = std::exp(X(i, j) - lse);
    }
    const std::size_t cols = X.cols();
    return t.record(std::move(Y), {x}, [x, cols](Tape& tp, const Tensor& out, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            Real gs = 0.0;
            for (std::size_t j = 0; j < cols; ++j) gs += g[i * cols + j] * out(i, j);
            for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += out(i, j) * (g[i * cols + j] - gs);
        }
    });
}

/// Selects column `cols[i]` from row i, Bx1.
inline Var pick(Tape& t, Var x, std::span<const std::size_t> cols) {
    const Tensor& X = t.value(x);
    if (cols.size() != X.rows()) {
        throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + X.shape_string());
    }
    Tensor Y(X.rows(), 1);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        if (cols[i] >= X.cols()) throw ArgumentError("pick: column index out of range");
        Y[i] = X(i, cols[i]);
    }
    const std::size_t width = X.cols();
    return t.record(std::move(Y), {x},
                    [x, width, idx = std::vector<std::size_t>(cols.begin(), cols.end())](
                        Tape& tp, const Tensor&, const std::vector<Real>& g) {
                        Real* dx = tp.accum(x);
                        for (std::size_t i = 0; i < idx.size(); ++i) dx[i * width + idx[i]] += g[i];
                    });
}

/// Gathers rows by index (duplicates allowed).
inline Var gather_rows(Tape& t, Var x, std::span<const std::size_t> rows) {
    const Tensor& X = t.value(x);
    const std::size_t cols = X.cols();
    Tensor Y(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= X.rows()) throw ArgumentError("gather_rows: row index out of range");
        std::copy_n(X.row(rows[i]).begin(), cols, Y.row(i).begin());
    }
    return t.record(std::move(Y), {x},
                    [x, cols, idx = std::vector<std::size_t>(rows.begin(), rows.end())](
                        Tape& tp, const Tensor&, const std::vector<Real>& g) {
                        Real* dx = tp.accum(x);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < cols; ++j) dx[idx[i] * cols + j] += g[i * cols + j];
                    });
}

/// [a | b] column concatenation.
inline Var concat_cols(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rows() != B.rows()) {
        throw DimensionError("concat_cols: " + A.shape_string() + " | " + B.shape_string());
    }
    const std::size_t ca = A.cols(), cb = B.cols();
    Tensor Y(A.rows(), ca + cb);
    for (std::size_t i = 0; i < A.rows(); ++i) {
        std::copy_n(A.row(i).begin(), ca, Y.row(i).begin());
        std::copy_n(B.row(i).begin(), cb, Y.row(i).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return t.record(std::move(Y), {a, b}, [a, b, ca, cb](Tape& tp, const Tensor& out, const std::vector<Real>& g) {
        const std::size_t w = ca + cb;
        if (Real* da = tp.accum(a))
            for (std::size_t i = 0; i < out.rows(); ++i)
                for (std::size_t j = 0; j < ca; ++j) da[i * ca + j] += g[i * w + j];
        if (Real* db = tp.accum(b))
            for (std::size_t i = 0; i < out.rows(); ++i)
                for (std::size_t j = 0; j < cb; ++j) db[i * cb + j] += g[i * w + ca + j];
    });
}

/// Compressed neighbor lists: neighbors of i are targets[offsets[i] .. offsets[i+1]).
struct AdjacencyView {
    std::span<const std::uint64_t> offsets;
    std::span<const std::uint32_t> targets;
    std::size_t nodes() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// Row i of the result is the mean of rows adj(i) of x; zero for isolated
/// nodes. The adjacency storage must outlive the tape.
inline Var neighbor_mean(Tape& t, Var x, AdjacencyView adj) {
    const Tensor& X = t.value(x);
    if (adj.nodes() != X.rows()) {
        throw DimensionError("neighbor_mean: adjacency over " + std::to_string(adj.nodes()) + " nodes, features " +
                             X.shape_string());
    }
    const std::size_t cols = X.cols();
    Tensor Y(X.rows(), cols);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto b = adj.offsets[i], e = adj.offsets[i + 1];
        if (b == e) continue;
        auto yi = Y.row(i);
        for (auto k = b; k < e; ++k) {
            auto xj = X.row(adj.targets[k]);
            for (std::size_t c = 0; c < cols; ++c) yi[c] += xj[c];
        }
        const Real inv = 1.0 / static_cast<Real>(e - b);
        for (std::size_t c = 0; c < cols; ++c) yi[c] *= inv;
    }
    return t.record(std::move(Y), {x}, [x, adj, cols](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < adj.nodes(); ++i) {
            const auto b = adj.offsets[i], e = adj.offsets[i + 1];
            if (b == e) continue;
            const Real inv = 1.0 / static_cast<Real>(e - b);
            const Real* gi = g.data() + i * cols;
            for (auto k = b; k < e; ++k) {
                Real* dj = dx + static_cast<std::size_t>(adj.targets[k]) * cols;
                for (std::size_t c = 0; c < cols; ++c) dj[c] += gi[c] * inv;
            }
        }
    });
}

/// Inverted dropout: each entry is zeroed with probability `rate` and the
/// survivors scaled by 1/(1-rate). The mask is a pure function of
/// (seed, entry index). Identity when `rate` is 0.
inline Var dropout(Tape& t, Var x, Real rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    const Tensor& X = t.value(x);
    const Real keep_scale = 1.0 / (1.0 - rate);
    std::vector<Real> mask(X.size());
    Tensor Y(X.rows(), X.cols());
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double u = static_cast<double>(mix64(seed ^ mix64(i)) >> 11) * 0x1.0p-53;
        mask[i] = u < rate ? 0.0 : keep_scale;
        Y[i] = X[i] * mask[i];
    }
    return t.record(std::move(Y), {x}, [x, mask = std::move(mask)](Tape& tp, const Tensor&, const std::vector<Real>& g) {
        Real* dx = tp.accum(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    });
}

/// Copy of x with no gradient path back to it.
inline Var detach(Tape& t, Var x) { return t.constant(t.value(x)); }

}  // namespace circuitgcl
