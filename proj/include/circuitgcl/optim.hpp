#pragma once

#include <cmath>
#include <vector>

#include "tensor.hpp"

namespace circuitgcl {

inline void check_step_args(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw ArgumentError("optimizer: parameter and gradient counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i])) {
            throw DimensionError("optimizer: gradient " + grads[i].shape_string() + " for parameter " +
                                 params[i]->shape_string());
        }
    }
}

/// Plain gradient descent.
struct Sgd {
    Real lr;

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) const {
        check_step_args(params, grads);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->data();
            auto g = grads[i].data();
            for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
        }
    }
};

/// Adam with bias correction.
class Adam {
public:
    explicit Adam(Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
        check_step_args(params, grads);
        if (m_.empty()) {
            for (const Tensor* p : params) {
                m_.emplace_back(p->size(), 0.0);
                v_.emplace_back(p->size(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw ArgumentError("Adam: parameter list changed between steps");
        ++t_;
        const Real c1 = 1.0 - std::pow(b1_, static_cast<Real>(t_));
        const Real c2 = 1.0 - std::pow(b2_, static_cast<Real>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->data();
            auto g = grads[i].data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
                v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
                p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
            }
        }
    }

    std::size_t steps() const { return t_; }

private:
    Real lr_, b1_, b2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<Real>> m_, v_;
};

}  // namespace circuitgcl
