#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "gmm.hpp"

namespace circuitgcl {

enum class LossKind : std::uint8_t { MSE = 0, GAI = 1, BMC = 2, CE = 3, Focal = 4, BalancedSoftmaxCE = 5 };

inline std::string_view to_string(LossKind l) {
    switch (l) {
        case LossKind::MSE: return "mse";
        case LossKind::GAI: return "gai";
        case LossKind::BMC: return "bmc";
        case LossKind::CE: return "ce";
        case LossKind::Focal: return "focal";
        case LossKind::BalancedSoftmaxCE: return "bsmce";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
    for (auto k : {LossKind::MSE, LossKind::GAI, LossKind::BMC, LossKind::CE, LossKind::Focal,
                   LossKind::BalancedSoftmaxCE}) {
        if (to_string(k) == s) return k;
    }
    throw ArgumentError("unknown loss '" + std::string(s) + "' (expected mse, gai, bmc, ce, focal or bsmce)");
}

inline bool is_regression_loss(LossKind l) { return l == LossKind::MSE || l == LossKind::GAI || l == LossKind::BMC; }

struct LossConfig {
    Real sigma_noise = 0.001;
    Real focal_gamma = 2.0;
    std::size_t gmm_components = 8;
    /// p_train(y) per class for balanced softmax; empty for regression.
    std::vector<Real> class_prior;

    Real temperature() const { return 2.0 * sigma_noise * sigma_noise; }

    void validate() const {
        if (!(sigma_noise > 0.0)) throw ArgumentError("sigma_noise must be positive");
        if (!(focal_gamma >= 0.0)) throw ArgumentError("focal gamma must be non-negative");
        if (!class_prior.empty()) {
            Real total = 0.0;
            for (Real p : class_prior) {
                if (!(p > 0.0)) throw ArgumentError("class prior entries must be positive");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("class prior must sum to 1");
        }
    }
};

namespace detail {

inline void require_column(const Tensor& t, const char* what) {
    if (t.cols() != 1) throw DimensionError(std::string(what) + " must be a column, got " + t.shape_string());
}

inline void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + " contains non-finite values");
}

inline void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) throw ArgumentError("label count does not match logits rows");
    for (std::size_t y : labels) {
        if (y >= classes) {
            throw ArgumentError("class label " + std::to_string(y) + " out of range for " + std::to_string(classes) +
                                " classes");
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Regression losses. Predictions and targets are Bx1 columns; every loss is
// the mean over the batch.
// ---------------------------------------------------------------------------

inline Var mse_loss(Tape& t, Var pred, Var target) {
    const Tensor& P = t.value(pred);
    const Tensor& Y = t.value(target);
    if (!P.same_shape(Y)) {
        throw ArgumentError("mse_loss: prediction " + P.shape_string() + " vs target " + Y.shape_string());
    }
    if (P.size() == 0) throw ArgumentError("mse_loss: empty batch");
    return mean(t, square(t, sub(t, pred, target)));
}

/// -log N(y; y_hat, s^2) + log sum_i w_i N(y_hat; mu_i, var_i + s^2).
inline Var gai_loss(Tape& t, Var pred, Var target, const GmmPrior& prior, Real sigma_noise) {
    prior.validate();
    if (!(sigma_noise > 0.0)) throw ArgumentError("gai_loss: sigma_noise must be positive");
    const Tensor& P = t.value(pred);
    detail::require_column(P, "gai_loss prediction");
    if (!P.same_shape(t.value(target))) throw ArgumentError("gai_loss: prediction and target shapes differ");
    if (P.size() == 0) throw ArgumentError("gai_loss: empty batch");
    detail::require_finite(P, "gai_loss prediction");
    detail::require_finite(t.value(target), "gai_loss target");

    const Real s2 = sigma_noise * sigma_noise;
    const std::size_t K = prior.k();
    Tensor neg_mu(1, K), inv2s(1, K), consts(1, K);
    for (std::size_t i = 0; i < K; ++i) {
        const Real s = prior.variances[i] + s2;
        neg_mu[i] = -prior.means[i];
        inv2s[i] = -1.0 / (2.0 * s);
        consts[i] = std::log(prior.weights[i]) - 0.5 * std::log(2.0 * std::numbers::pi * s);
    }
    // Likelihood term.
    Var nll = add_scalar(t, scale(t, square(t, sub(t, target, pred)), 1.0 / (2.0 * s2)),
                         0.5 * std::log(2.0 * std::numbers::pi * s2));
    // Prior-integral term.
    Var d = add_row(t, repeat_cols(t, pred, K), t.constant(neg_mu));
    Var logits = add_row(t, mul_row(t, square(t, d), t.constant(inv2s)), t.constant(consts));
    Var log_marginal = logsumexp_rows(t, logits);
    return mean(t, add(t, nll, log_marginal));
}

/// Batch Monte-Carlo balanced MSE: row i is a softmax over the batch targets
/// of -(y_hat_i - y_j)^2 / tau, scored at j = i.
inline Var bmc_loss(Tape& t, Var pred, Var target, Real sigma_noise) {
    if (!(sigma_noise > 0.0)) throw ArgumentError("bmc_loss: temperature must be positive");
    const Tensor& P = t.value(pred);
    detail::require_column(P, "bmc_loss prediction");
    const Tensor& Y = t.value(target);
    if (!P.same_shape(Y)) throw ArgumentError("bmc_loss: prediction and target shapes differ");
    const std::size_t B = P.rows();
    if (B == 0) throw ArgumentError("bmc_loss: empty batch");
    detail::require_finite(P, "bmc_loss prediction");
    const Real tau = 2.0 * sigma_noise * sigma_noise;
    Tensor neg_y(1, B);
    for (std::size_t j = 0; j < B; ++j) neg_y[j] = -Y[j];
    Var d = add_row(t, repeat_cols(t, pred, B), t.constant(neg_y));
    Var logits = scale(t, square(t, d), -1.0 / tau);
    std::vector<std::size_t> diag(B);
    for (std::size_t i = 0; i < B; ++i) diag[i] = i;
    return mean(t, sub(t, logsumexp_rows(t, logits), pick(t, logits, diag)));
}

// ---------------------------------------------------------------------------
// Classification losses over BxC logits.
// ---------------------------------------------------------------------------

inline Var cross_entropy(Tape& t, Var logits, std::span<const std::size_t> labels) {
    const Tensor& L = t.value(logits);
    detail::check_labels(labels, L.rows(), L.cols());
    if (L.rows() == 0) throw ArgumentError("cross_entropy: empty batch");
    return mean(t, sub(t, logsumexp_rows(t, logits), pick(t, logits, labels)));
}

/// Cross-entropy on logits + log prior.
inline Var balanced_softmax_ce(Tape& t, Var logits, std::span<const std::size_t> labels,
                               std::span<const Real> class_prior) {
    const Tensor& L = t.value(logits);
    if (class_prior.size() != L.cols()) {
        throw ArgumentError("balanced_softmax_ce: prior has " + std::to_string(class_prior.size()) +
                            " entries for " + std::to_string(L.cols()) + " classes");
    }
    Tensor log_prior(1, class_prior.size());
    for (std::size_t c = 0; c < class_prior.size(); ++c) {
        if (!(class_prior[c] > 0.0)) throw ArgumentError("balanced_softmax_ce: class prior entries must be positive");
        log_prior[c] = std::log(class_prior[c]);
    }
    return cross_entropy(t, add_row(t, logits, t.constant(log_prior)), labels);
}

/// -(1 - p_t)^gamma log p_t.
inline Var focal_loss(Tape& t, Var logits, std::span<const std::size_t> labels, Real gamma) {
    if (!(gamma >= 0.0)) throw ArgumentError("focal_loss: gamma must be non-negative");
    const Tensor& L = t.value(logits);
    detail::check_labels(labels, L.rows(), L.cols());
    if (L.rows() == 0) throw ArgumentError("focal_loss: empty batch");
    Var log_pt = sub(t, pick(t, logits, labels), logsumexp_rows(t, logits));
    if (gamma == 0.0) return scale(t, mean(t, log_pt), -1.0);
    Var one_minus = add_scalar(t, scale(t, exp(t, log_pt), -1.0), 1.0);
    return scale(t, mean(t, mul(t, pow_scalar(t, one_minus, gamma), log_pt)), -1.0);
}

// ---------------------------------------------------------------------------
// Scalar forms.
// ---------------------------------------------------------------------------

inline Real mse_loss(std::span<const Real> pred, std::span<const Real> y) {
    if (pred.size() != y.size()) throw ArgumentError("mse_loss: length mismatch");
    Tape t;
    return t.scalar(mse_loss(t, t.constant(Tensor::column(pred)), t.constant(Tensor::column(y))));
}

inline Real gai_loss(Real y_pred, Real y, const GmmPrior& prior, const LossConfig& cfg) {
    if (!std::isfinite(y_pred) || !std::isfinite(y)) throw NumericError("gai_loss: non-finite input");
    Tape t;
    return t.scalar(gai_loss(t, t.constant(Tensor::scalar(y_pred)), t.constant(Tensor::scalar(y)), prior, cfg.sigma_noise));
}

/// sum_i w_i N(y_hat; mu_i, var_i + sigma^2): the closed form of the prior
/// integral inside GAI.
inline Real gai_marginal(Real y_pred, const GmmPrior& prior, Real sigma_noise) {
    return prior.density(y_pred, sigma_noise * sigma_noise);
}

/// Single-sample BMC loss against an explicit batch that must contain y.
inline Real bmc_loss(Real y_pred, Real y, std::span<const Real> batch_labels, const LossConfig& cfg) {
    if (batch_labels.empty()) throw ArgumentError("bmc_loss: empty batch");
    const Real tau = cfg.temperature();
    if (!(tau > 0.0)) throw ArgumentError("bmc_loss: temperature must be positive");
    if (std::find(batch_labels.begin(), batch_labels.end(), y) == batch_labels.end()) {
        throw ArgumentError("bmc_loss: the target must be a member of the batch");
    }
    std::vector<Real> logits;
    logits.reserve(batch_labels.size());
    for (Real b : batch_labels) logits.push_back(-(y_pred - b) * (y_pred - b) / tau);
    return logsumexp(logits) + (y_pred - y) * (y_pred - y) / tau;
}

inline Real balanced_softmax_ce(std::span<const Real> logits, std::size_t label, const LossConfig& cfg) {
    Tape t;
    const std::size_t y[1] = {label};
    return t.scalar(balanced_softmax_ce(t, t.constant(Tensor::row_vector(logits)), y, cfg.class_prior));
}

inline Real cross_entropy(std::span<const Real> logits, std::size_t label) {
    Tape t;
    const std::size_t y[1] = {label};
    return t.scalar(cross_entropy(t, t.constant(Tensor::row_vector(logits)), y));
}

inline Real focal_loss(std::span<const Real> logits, std::size_t label, Real gamma) {
    Tape t;
    const std::size_t y[1] = {label};
    return t.scalar(focal_loss(t, t.constant(Tensor::row_vector(logits)), y, gamma));
}

/// Laplace-smoothed class frequencies: (count_c + 1) / (n + C).
inline std::vector<Real> class_prior_from_labels(std::span<const std::size_t> labels, std::size_t n_classes) {
    std::vector<Real> p(n_classes, 1.0);
    for (std::size_t y : labels) {
        if (y >= n_classes) throw ArgumentError("class label out of range");
        p[y] += 1.0;
    }
    const Real total = static_cast<Real>(labels.size() + n_classes);
    for (Real& v : p) v /= total;
    return p;
}

}  // namespace circuitgcl
