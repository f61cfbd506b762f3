#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "losses.hpp"
#include "rsm.hpp"

namespace circuitgcl {

/// Outcome of one verification oracle. `worst` is the largest observed error
/// in the oracle's own metric; `pass` is worst < tolerance.
struct OracleResult {
    std::string name;
    Real worst = 0.0;
    Real tolerance = 0.0;
    bool pass = false;
    std::size_t trials = 0;
};

inline bool all_pass(const std::vector<OracleResult>& rs) {
    for (const auto& r : rs) {
        if (!r.pass) return false;
    }
    return !rs.empty();
}

namespace oracle_detail {

inline Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, Real lo, Real hi) {
    Tensor t(r, c);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// sum(w .* y) with fixed random weights so every output entry contributes.
inline Var weighted_sum(Tape& t, Var y, std::uint64_t seed) {
    Rng rng(seed);
    const Tensor& Y = t.value(y);
    Var w = t.constant(random_tensor(rng, Y.rows(), Y.cols(), 0.5, 1.5));
    return sum(t, mul(t, y, w));
}

struct GradCase {
    std::string name;
    TapeFunction f;
    std::size_t rows, cols;
    Real lo = -1.5, hi = 1.5;
};

inline OracleResult run_grad_case(const GradCase& c, std::size_t points, Real tol, std::uint64_t seed) {
    Rng rng(derive_seed(seed, std::hash<std::string>{}(c.name)));
    OracleResult r{c.name, 0.0, tol, false, points};
    for (std::size_t p = 0; p < points; ++p) {
        const Tensor x = random_tensor(rng, c.rows, c.cols, c.lo, c.hi);
        r.worst = std::max(r.worst, finite_diff_check(c.f, x, 1e-5).max_relative_error);
    }
    r.pass = r.worst < tol;
    return r;
}

}  // namespace oracle_detail

/// Finite-difference checks of every differentiable tape primitive.
inline std::vector<OracleResult> primitive_gradchecks(Real tol = 1e-4, std::size_t points = 10, std::uint64_t seed = 0) {
    using oracle_detail::weighted_sum;
    Rng rng(derive_seed(seed, 99));
    const auto right = oracle_detail::random_tensor(rng, 4, 3, -1.5, 1.5);
    const auto left = oracle_detail::random_tensor(rng, 2, 5, -1.5, 1.5);
    const auto other = oracle_detail::random_tensor(rng, 5, 4, -1.5, 1.5);
    const auto row = oracle_detail::random_tensor(rng, 1, 4, -1.5, 1.5);
    const auto colv = oracle_detail::random_tensor(rng, 5, 1, -1.5, 1.5);
    // Path graph 0-1-2-3 plus an isolated node 4.
    static const std::vector<std::uint64_t> offsets{0, 1, 3, 5, 6, 6};
    static const std::vector<std::uint32_t> targets{1, 0, 2, 1, 3, 2};
    const AdjacencyView adj{offsets, targets};
    static const std::vector<std::size_t> picks{2, 0, 3, 3, 1};
    static const std::vector<std::size_t> rows{4, 0, 0, 2};

    std::vector<oracle_detail::GradCase> cases{
        {"matmul_left", [=](Tape& t, Var x) { return weighted_sum(t, matmul(t, x, t.constant(right)), 1); }, 5, 4},
        {"matmul_right", [=](Tape& t, Var x) { return weighted_sum(t, matmul(t, t.constant(left), x), 2); }, 5, 3},
        {"add", [=](Tape& t, Var x) { return weighted_sum(t, add(t, x, t.constant(other)), 3); }, 5, 4},
        {"sub", [=](Tape& t, Var x) { return weighted_sum(t, sub(t, t.constant(other), x), 4); }, 5, 4},
        {"mul", [=](Tape& t, Var x) { return weighted_sum(t, mul(t, x, x), 5); }, 5, 4},
        {"add_row", [=](Tape& t, Var r) { return weighted_sum(t, add_row(t, t.constant(other), r), 6); }, 1, 4},
        {"mul_row", [=](Tape& t, Var r) { return weighted_sum(t, mul_row(t, t.constant(other), r), 7); }, 1, 4},
        {"mul_row_input", [=](Tape& t, Var x) { return weighted_sum(t, mul_row(t, x, t.constant(row)), 8); }, 5, 4},
        {"add_col", [=](Tape& t, Var c) { return weighted_sum(t, add_col(t, t.constant(other), c), 9); }, 5, 1},
        {"repeat_cols", [=](Tape& t, Var c) { return weighted_sum(t, repeat_cols(t, c, 3), 10); }, 5, 1},
        {"scale", [=](Tape& t, Var x) { return weighted_sum(t, scale(t, x, -2.5), 11); }, 3, 3},
        {"add_scalar", [=](Tape& t, Var x) { return weighted_sum(t, square(t, add_scalar(t, x, 0.7)), 12); }, 3, 3},
        {"tanh", [=](Tape& t, Var x) { return weighted_sum(t, tanh(t, x), 13); }, 5, 4},
        {"prelu_input",
         [=](Tape& t, Var x) { return weighted_sum(t, prelu(t, x, t.constant(Tensor::scalar(0.25))), 14); }, 5, 4},
        {"prelu_slope", [=](Tape& t, Var a) { return weighted_sum(t, prelu(t, t.constant(other), a), 15); }, 1, 1},
        {"square", [=](Tape& t, Var x) { return weighted_sum(t, square(t, x), 16); }, 3, 3},
        {"abs", [=](Tape& t, Var x) { return weighted_sum(t, abs(t, x), 17); }, 3, 3, 0.2, 1.5},
        {"exp", [=](Tape& t, Var x) { return weighted_sum(t, exp(t, x), 18); }, 3, 3},
        {"log", [=](Tape& t, Var x) { return weighted_sum(t, log(t, x), 19); }, 3, 3, 0.2, 2.0},
        {"pow_scalar", [=](Tape& t, Var x) { return weighted_sum(t, pow_scalar(t, x, 2.5), 20); }, 3, 3, 0.2, 2.0},
        {"sum", [=](Tape& t, Var x) { return sum(t, mul(t, x, x)); }, 5, 4},
        {"mean", [=](Tape& t, Var x) { return mean(t, mul(t, x, t.constant(other))); }, 5, 4},
        {"row_sum", [=](Tape& t, Var x) { return weighted_sum(t, square(t, row_sum(t, x)), 21); }, 4, 3},
        {"column_mean", [=](Tape& t, Var x) { return weighted_sum(t, square(t, column_mean(t, x)), 22); }, 4, 3},
        {"rowwise_l2_normalize", [=](Tape& t, Var x) { return weighted_sum(t, rowwise_l2_normalize(t, x, 1e-8), 23); },
         5, 4},
        {"logsumexp_rows", [=](Tape& t, Var x) { return weighted_sum(t, logsumexp_rows(t, x), 24); }, 5, 4},
        {"softmax_rows", [=](Tape& t, Var x) { return weighted_sum(t, softmax_rows(t, x), 25); }, 5, 4},
        {"pick", [=](Tape& t, Var x) { return weighted_sum(t, pick(t, x, picks), 26); }, 5, 4},
        {"gather_rows", [=](Tape& t, Var x) { return weighted_sum(t, gather_rows(t, x, rows), 27); }, 5, 4},
        {"concat_cols", [=](Tape& t, Var x) { return weighted_sum(t, concat_cols(t, x, t.constant(colv)), 28); }, 5, 4},
        {"neighbor_mean", [=](Tape& t, Var x) { return weighted_sum(t, neighbor_mean(t, x, adj), 29); }, 5, 4},
        {"dropout", [=](Tape& t, Var x) { return weighted_sum(t, dropout(t, x, 0.3, 1234), 30); }, 5, 4},
    };
    std::vector<OracleResult> out;
    for (const auto& c : cases) out.push_back(oracle_detail::run_grad_case(c, points, tol, seed));
    return out;
}

/// Finite-difference checks of the four rebalancing losses (and the
/// pre-training losses) with respect to their predictions / logits.
inline std::vector<OracleResult> loss_gradchecks(Real tol = 1e-4, std::size_t points = 10, std::uint64_t seed = 0) {
    Rng rng(derive_seed(seed, 7));
    const GmmPrior prior{{0.5, 0.3, 0.2}, {0.2, 0.5, 0.85}, {0.01, 0.02, 0.005}};
    const auto y = oracle_detail::random_tensor(rng, 8, 1, 0.0, 1.0);
    static const std::vector<std::size_t> labels{0, 2, 1, 1, 3, 0};
    static const std::vector<Real> prior_c{0.6, 0.25, 0.1, 0.05};
    const auto target = oracle_detail::random_tensor(rng, 6, 4, -1.0, 1.0);
    const auto h_norm = normalize_rows(oracle_detail::random_tensor(rng, 6, 4, -1.0, 1.0));

    std::vector<oracle_detail::GradCase> cases{
        {"gai_loss", [=](Tape& t, Var p) { return gai_loss(t, p, t.constant(y), prior, 0.1); }, 8, 1, 0.0, 1.0},
        {"bmc_loss", [=](Tape& t, Var p) { return bmc_loss(t, p, t.constant(y), 0.3); }, 8, 1, 0.0, 1.0},
        {"balanced_softmax_ce", [=](Tape& t, Var l) { return balanced_softmax_ce(t, l, labels, prior_c); }, 6, 4},
        {"focal_loss", [=](Tape& t, Var l) { return focal_loss(t, l, labels, 2.0); }, 6, 4},
        {"mse_loss", [=](Tape& t, Var p) { return mse_loss(t, p, t.constant(y)); }, 8, 1, 0.0, 1.0},
        {"cross_entropy", [=](Tape& t, Var l) { return cross_entropy(t, l, labels); }, 6, 4},
        {"alignment_loss", [=](Tape& t, Var z) { return alignment_loss(t, z, t.constant(target)); }, 6, 4},
        {"scattering_loss",
         [=](Tape& t, Var h) {
             return scattering_loss(t, h, t.constant(scatter_center(h_norm)));
         },
         6, 4},
    };
    std::vector<OracleResult> out;
    for (const auto& c : cases) out.push_back(oracle_detail::run_grad_case(c, points, tol, seed));
    return out;
}

/// log of the trapezoid estimate of  integral N(y'; y_hat, s^2) p(y') dy'.
/// The grid covers +-40 widths of every component's product Gaussian and is
/// ten points per narrowest width; summation is shifted by the max log term.
inline Real gai_integral_by_quadrature(Real y_hat, const GmmPrior& prior, Real sigma) {
    const Real s2 = sigma * sigma;
    Real lo = std::numeric_limits<Real>::infinity(), hi = -lo, w_min = lo;
    for (std::size_t i = 0; i < prior.k(); ++i) {
        const Real v = prior.variances[i];
        const Real centre = (y_hat * v + prior.means[i] * s2) / (v + s2);
        const Real w = std::sqrt(v * s2 / (v + s2));
        lo = std::min(lo, centre - 40.0 * w);
        hi = std::max(hi, centre + 40.0 * w);
        w_min = std::min(w_min, w);
    }
    const Real h0 = w_min / 10.0;
    const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / h0));
    const Real h = (hi - lo) / static_cast<Real>(n);
    std::vector<Real> logf(n + 1);
    Real m = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j <= n; ++j) {
        const Real x = lo + h * static_cast<Real>(j);
        const Real d = x - y_hat;
        logf[j] = -0.5 * std::log(2.0 * std::numbers::pi * s2) - d * d / (2.0 * s2) + prior.log_density(x);
        m = std::max(m, logf[j]);
    }
    Real acc = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
        const Real w = (j == 0 || j == n) ? 0.5 : 1.0;
        acc += w * std::exp(logf[j] - m);
    }
    return m + std::log(acc * h);
}

/// Closed-form prior term of GAI against quadrature over random priors,
/// K in {1,2,3}. Error is on the log scale (the loss term itself).
inline OracleResult gai_quadrature_oracle(Real tol = 1e-6, std::size_t n_priors = 100, std::uint64_t seed = 0) {
    Rng rng(derive_seed(seed, 0x9a1));
    OracleResult r{"gai_quadrature", 0.0, tol, false, n_priors};
    for (std::size_t trial = 0; trial < n_priors; ++trial) {
        const std::size_t K = 1 + trial % 3;
        GmmPrior p;
        Real total = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
            p.weights.push_back(rng.uniform(0.1, 1.0));
            total += p.weights.back();
            p.means.push_back(rng.uniform(0.0, 1.0));
            p.variances.push_back(std::pow(10.0, rng.uniform(-4.0, -1.0)));
        }
        for (Real& w : p.weights) w /= total;
        const Real sigma = std::pow(10.0, rng.uniform(-2.0, -0.5));
        const Real y_hat = rng.uniform(0.0, 1.0);
        const Real closed = std::log(gai_marginal(y_hat, p, sigma));
        const Real quad = gai_integral_by_quadrature(y_hat, p, sigma);
        r.worst = std::max(r.worst, std::abs(closed - quad));
    }
    r.pass = r.worst < tol;
    return r;
}

/// The uniform-prior and degenerate-case reductions of the loss family.
inline std::vector<OracleResult> reduction_oracles(std::uint64_t seed = 0) {
    Rng rng(derive_seed(seed, 0x2ed));
    std::vector<OracleResult> out;

    {
        OracleResult r{"bsmce_uniform_equals_ce", 0.0, 1e-9, false, 100};
        for (std::size_t i = 0; i < r.trials; ++i) {
            const std::size_t C = 2 + i % 5;
            std::vector<Real> logits(C);
            for (Real& v : logits) v = rng.uniform(-5.0, 5.0);
            LossConfig cfg;
            cfg.class_prior.assign(C, 1.0 / static_cast<Real>(C));
            const std::size_t y = rng.below(C);
            r.worst = std::max(r.worst, std::abs(balanced_softmax_ce(logits, y, cfg) - cross_entropy(logits, y)));
        }
        r.pass = r.worst < r.tolerance;
        out.push_back(r);
    }
    {
        // GAI gradient scaled by 2 sigma^2 against the MSE gradient, both by
        // central differences, under a prior of variance 1e6.
        OracleResult r{"gai_gradient_matches_mse_at_flat_prior", 0.0, 1e-2, false, 20};
        const GmmPrior flat{{1.0}, {0.5}, {1e6}};
        LossConfig cfg;
        cfg.sigma_noise = 0.1;
        const Real h = 1e-6;
        for (std::size_t i = 0; i < r.trials; ++i) {
            const Real y = rng.uniform(0.0, 1.0);
            Real yp = rng.uniform(0.0, 1.0);
            if (std::abs(yp - y) < 0.05) yp = y + 0.05;
            const Real g_gai = (gai_loss(yp + h, y, flat, cfg) - gai_loss(yp - h, y, flat, cfg)) / (2.0 * h);
            const Real g_mse = ((yp + h - y) * (yp + h - y) - (yp - h - y) * (yp - h - y)) / (2.0 * h);
            const Real scaled = g_gai * 2.0 * cfg.sigma_noise * cfg.sigma_noise;
            r.worst = std::max(r.worst, std::abs(scaled - g_mse) / std::abs(g_mse));
        }
        r.pass = r.worst < r.tolerance;
        out.push_back(r);
    }
    {
        OracleResult r{"bmc_singleton_batch_is_zero", 0.0, 0.0, false, 50};
        LossConfig cfg;
        cfg.sigma_noise = 0.05;
        for (std::size_t i = 0; i < r.trials; ++i) {
            const Real y = rng.uniform(0.0, 1.0);
            const Real yp = rng.uniform(-1.0, 2.0);
            const Real batch[1] = {y};
            r.worst = std::max(r.worst, std::abs(bmc_loss(yp, y, batch, cfg)));
        }
        r.pass = r.worst == 0.0;
        out.push_back(r);
    }
    {
        OracleResult r{"focal_gamma0_equals_ce", 0.0, 1e-9, false, 100};
        for (std::size_t i = 0; i < r.trials; ++i) {
            const std::size_t C = 2 + i % 5;
            std::vector<Real> logits(C);
            for (Real& v : logits) v = rng.uniform(-5.0, 5.0);
            const std::size_t y = rng.below(C);
            r.worst = std::max(r.worst, std::abs(focal_loss(logits, y, 0.0) - cross_entropy(logits, y)));
        }
        r.pass = r.worst < r.tolerance;
        out.push_back(r);
    }
    return out;
}

}  // namespace circuitgcl
