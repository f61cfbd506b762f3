#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "autodiff.hpp"

namespace circuitgcl {

inline constexpr Real kVarianceFloor = 1e-8;

/// One-dimensional Gaussian mixture.
struct GmmPrior {
    std::vector<Real> weights;
    std::vector<Real> means;
    std::vector<Real> variances;

    std::size_t k() const { return weights.size(); }

    void validate() const {
        if (weights.empty() || weights.size() != means.size() || weights.size() != variances.size()) {
            throw ArgumentError("GMM prior needs equal-length, non-empty weights, means and variances");
        }
        Real total = 0.0;
        for (std::size_t i = 0; i < k(); ++i) {
            if (!(weights[i] >= 0.0) || !std::isfinite(means[i])) throw ArgumentError("GMM prior has invalid component");
            if (!(variances[i] >= kVarianceFloor)) throw ArgumentError("GMM variance below floor");
            total += weights[i];
        }
        if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("GMM weights must sum to 1");
    }

    /// log of sum_i w_i N(x; mu_i, var_i + extra_var).
    Real log_density(Real x, Real extra_var = 0.0) const {
        std::vector<Real> terms(k());
        for (std::size_t i = 0; i < k(); ++i) {
            const Real s = variances[i] + extra_var;
            const Real d = x - means[i];
            terms[i] = std::log(weights[i]) - 0.5 * std::log(2.0 * std::numbers::pi * s) - d * d / (2.0 * s);
        }
        return logsumexp(terms);
    }

    Real density(Real x, Real extra_var = 0.0) const { return std::exp(log_density(x, extra_var)); }

    friend bool operator==(const GmmPrior&, const GmmPrior&) = default;
};

inline nlohmann::ordered_json gmm_to_json(const GmmPrior& p) {
    nlohmann::ordered_json j;
    j["K"] = p.k();
    j["weights"] = p.weights;
    j["means"] = p.means;
    j["variances"] = p.variances;
    return j;
}

inline GmmPrior gmm_from_json(const nlohmann::json& j) {
    GmmPrior p{j.at("weights").get<std::vector<Real>>(), j.at("means").get<std::vector<Real>>(),
               j.at("variances").get<std::vector<Real>>()};
    if (j.at("K").get<std::size_t>() != p.k()) throw ArgumentError("GMM JSON: K disagrees with component arrays");
    p.validate();
    return p;
}

struct GmmFitOptions {
    std::size_t max_iter = 500;
    Real tol = 1e-7;  // on the mean per-sample log-likelihood
};

/// EM fit with quantile initialization and a variance floor. The procedure is
/// deterministic, so the seed does not influence the result; it is accepted
/// for interface symmetry with the other fitting routines.
inline GmmPrior fit_gmm(std::span<const Real> labels, std::size_t K, std::uint64_t /*seed*/ = 0,
                        const GmmFitOptions& opt = {}) {
    if (labels.empty()) throw ArgumentError("fit_gmm: no labels");
    if (K == 0) throw ArgumentError("fit_gmm: K must be positive");
    const std::set<Real> distinct(labels.begin(), labels.end());
    if (K > distinct.size()) {
        throw ArgumentError("fit_gmm: K = " + std::to_string(K) + " exceeds the " + std::to_string(distinct.size()) +
                            " distinct label values");
    }
    const std::size_t n = labels.size();
    std::vector<Real> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end());

    Real mean_all = 0.0;
    for (Real v : sorted) mean_all += v;
    mean_all /= static_cast<Real>(n);
    Real var_all = 0.0;
    for (Real v : sorted) var_all += (v - mean_all) * (v - mean_all);
    var_all = std::max(var_all / static_cast<Real>(n), kVarianceFloor);

    GmmPrior p;
    p.weights.assign(K, 1.0 / static_cast<Real>(K));
    p.variances.assign(K, std::max(var_all / static_cast<Real>(K * K), kVarianceFloor));
    for (std::size_t i = 0; i < K; ++i) {
        const Real q = (static_cast<Real>(i) + 0.5) / static_cast<Real>(K);
        p.means.push_back(sorted[std::min(n - 1, static_cast<std::size_t>(q * static_cast<Real>(n)))]);
    }

    std::vector<Real> resp(n * K), logp(K);
    Real prev_ll = -std::numeric_limits<Real>::infinity();
    for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
        Real ll = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < K; ++i) {
                const Real d = labels[j] - p.means[i];
                logp[i] = std::log(std::max(p.weights[i], 1e-300)) -
                          0.5 * std::log(2.0 * std::numbers::pi * p.variances[i]) - d * d / (2.0 * p.variances[i]);
            }
            const Real lse = logsumexp(logp);
            ll += lse;
            for (std::size_t i = 0; i < K; ++i) resp[j * K + i] = std::exp(logp[i] - lse);
        }
        ll /= static_cast<Real>(n);

        for (std::size_t i = 0; i < K; ++i) {
            Real nk = 0.0, mu = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                nk += resp[j * K + i];
                mu += resp[j * K + i] * labels[j];
            }
            if (nk <= 0.0) {
                // Empty component: keep its mean, floor its variance, zero weight.
                p.weights[i] = 0.0;
                p.variances[i] = kVarianceFloor;
                continue;
            }
            mu /= nk;
            Real var = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const Real d = labels[j] - mu;
                var += resp[j * K + i] * d * d;
            }
            p.weights[i] = nk / static_cast<Real>(n);
            p.means[i] = mu;
            p.variances[i] = std::max(var / nk, kVarianceFloor);
        }
        Real wsum = 0.0;
        for (Real w : p.weights) wsum += w;
        for (Real& w : p.weights) w /= wsum;

        if (std::abs(ll - prev_ll) < opt.tol) break;
        prev_ll = ll;
    }
    GmmPrior out;
    for (std::size_t i = 0; i < K; ++i) {
        if (p.weights[i] <= 0.0) continue;
        out.weights.push_back(p.weights[i]);
        out.means.push_back(p.means[i]);
        out.variances.push_back(p.variances[i]);
    }
    return out;
}

}  // namespace circuitgcl
