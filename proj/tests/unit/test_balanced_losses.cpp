#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "circuitgcl/losses.hpp"
#include "circuitgcl/oracles.hpp"

using namespace circuitgcl;

namespace {

GmmPrior unit_prior() { return GmmPrior{{1.0}, {0.0}, {1.0}}; }

std::vector<Real> two_clusters(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<Real> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(rng.normal(i % 2 ? 0.8 : 0.2, 0.01));
    return v;
}

}  // namespace

TEST(Mse, Examples) {
    const std::vector<Real> a{0.1, 0.5, 0.9};
    EXPECT_EQ(mse_loss(a, a), 0.0);
    EXPECT_DOUBLE_EQ(mse_loss(std::vector<Real>{0.0}, std::vector<Real>{2.0}), 4.0);
    EXPECT_THROW(mse_loss(std::vector<Real>{0.0, 1.0}, std::vector<Real>{0.0}), ArgumentError);
}

TEST(FitGmm, DegenerateClusterHasFlooredVariance) {
    const std::vector<Real> labels(50, 0.37);
    const auto p = fit_gmm(labels, 1);
    ASSERT_EQ(p.k(), 1u);
    EXPECT_DOUBLE_EQ(p.means[0], 0.37);
    EXPECT_DOUBLE_EQ(p.variances[0], kVarianceFloor);
    EXPECT_DOUBLE_EQ(p.weights[0], 1.0);
}

TEST(FitGmm, RecoversTwoGeneratingClusters) {
    const auto labels = two_clusters(3, 400);
    auto p = fit_gmm(labels, 2);
    ASSERT_EQ(p.k(), 2u);
    const Real lo = std::min(p.means[0], p.means[1]);
    const Real hi = std::max(p.means[0], p.means[1]);
    EXPECT_NEAR(lo, 0.2, 0.02);
    EXPECT_NEAR(hi, 0.8, 0.02);
    EXPECT_NEAR(p.weights[0], 0.5, 0.05);
    EXPECT_NO_THROW(p.validate());
}

TEST(FitGmm, MoreComponentsThanDistinctValuesIsArgumentError) {
    const std::vector<Real> labels{0.1, 0.1, 0.9, 0.9};
    EXPECT_THROW(fit_gmm(labels, 3), ArgumentError);
    EXPECT_THROW(fit_gmm(std::vector<Real>{}, 1), ArgumentError);
}

TEST(FitGmm, DensityIntegratesToOne) {
    Rng rng(11);
    std::vector<Real> labels;
    for (int i = 0; i < 500; ++i) labels.push_back(std::clamp(rng.normal(0.5, 0.12), 0.0, 1.0));
    const auto p = fit_gmm(labels, 4);
    // Trapezoid over a range wide enough that the outside mass is negligible.
    const std::size_t n = 20000;
    const Real a = -1.0, b = 2.0, h = (b - a) / n;
    Real acc = 0.0;
    for (std::size_t j = 0; j <= n; ++j) acc += (j == 0 || j == n ? 0.5 : 1.0) * p.density(a + h * j);
    EXPECT_NEAR(acc * h, 1.0, 1e-6);
}

TEST(FitGmm, JsonRoundTrip) {
    const auto p = fit_gmm(two_clusters(5, 100), 2);
    EXPECT_EQ(gmm_from_json(nlohmann::json::parse(gmm_to_json(p).dump())), p);
}

TEST(Gai, HandEvaluatedExample) {
    LossConfig cfg;
    cfg.sigma_noise = 1.0;
    const Real expected = 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(4.0 * std::numbers::pi);
    EXPECT_NEAR(gai_loss(0.0, 0.0, unit_prior(), cfg), expected, 1e-12);
    EXPECT_NEAR(expected, -0.34657, 1e-5);
}

TEST(Gai, NonFiniteInputIsNumericError) {
    LossConfig cfg;
    EXPECT_THROW(gai_loss(std::nan(""), 0.0, unit_prior(), cfg), NumericError);
    EXPECT_THROW(gai_loss(0.0, INFINITY, unit_prior(), cfg), NumericError);
}

TEST(Gai, PriorTermMatchesQuadrature) {
    const auto r = gai_quadrature_oracle(1e-6, 100, 4);
    EXPECT_TRUE(r.pass) << "worst log error " << r.worst;
}

TEST(Gai, BatchMeanMatchesScalarForm) {
    const GmmPrior p{{0.7, 0.3}, {0.3, 0.8}, {0.01, 0.004}};
    LossConfig cfg;
    cfg.sigma_noise = 0.05;
    const std::vector<Real> pred{0.2, 0.5, 0.9}, y{0.25, 0.4, 1.0};
    Tape t;
    const Real batch = t.scalar(gai_loss(t, t.constant(Tensor::column(pred)), t.constant(Tensor::column(y)), p, 0.05));
    Real expect = 0.0;
    for (std::size_t i = 0; i < 3; ++i) expect += gai_loss(pred[i], y[i], p, cfg) / 3.0;
    EXPECT_NEAR(batch, expect, 1e-12);
}

TEST(Bmc, Examples) {
    LossConfig cfg;
    cfg.sigma_noise = 1.0;
    const std::vector<Real> single{0.3};
    EXPECT_EQ(bmc_loss(0.9, 0.3, single, cfg), 0.0);
    const std::vector<Real> batch{0.0, 1.0};
    EXPECT_NEAR(bmc_loss(0.0, 0.0, batch, cfg), std::log(1.0 + std::exp(-0.5)), 1e-12);
    EXPECT_NEAR(bmc_loss(0.0, 0.0, batch, cfg), 0.47408, 1e-5);
}

TEST(Bmc, Errors) {
    LossConfig cfg;
    EXPECT_THROW(bmc_loss(0.0, 0.0, std::vector<Real>{}, cfg), ArgumentError);
    cfg.sigma_noise = 0.0;
    EXPECT_THROW(bmc_loss(0.0, 0.0, std::vector<Real>{0.0}, cfg), ArgumentError);
    LossConfig ok;
    EXPECT_THROW(bmc_loss(0.0, 0.5, std::vector<Real>{0.0, 1.0}, ok), ArgumentError);
}

TEST(Bmc, NonNegativeAndTranslationInvariant) {
    Rng rng(21);
    LossConfig cfg;
    cfg.sigma_noise = 0.2;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Real> batch(8);
        for (Real& v : batch) v = rng.uniform(0.0, 1.0);
        const Real y = batch[rng.below(batch.size())];
        const Real yp = rng.uniform(-0.5, 1.5);
        const Real base = bmc_loss(yp, y, batch, cfg);
        EXPECT_GE(base, 0.0);
        const Real shift = rng.uniform(-3.0, 3.0);
        std::vector<Real> moved = batch;
        for (Real& v : moved) v += shift;
        EXPECT_NEAR(bmc_loss(yp + shift, y + shift, moved, cfg), base, 1e-9);
    }
}

TEST(BalancedSoftmax, Examples) {
    LossConfig cfg;
    cfg.class_prior = {0.9, 0.1};
    const std::vector<Real> logits{0.0, 0.0};
    EXPECT_NEAR(balanced_softmax_ce(logits, 1, cfg), -std::log(0.1), 1e-12);
    EXPECT_NEAR(balanced_softmax_ce(logits, 1, cfg), 2.30259, 1e-5);
    cfg.class_prior = {1.0, 0.0};
    EXPECT_THROW(balanced_softmax_ce(logits, 0, cfg), ArgumentError);
    cfg.class_prior = {0.5, 0.5};
    EXPECT_THROW(balanced_softmax_ce(logits, 2, cfg), ArgumentError);
}

TEST(BalancedSoftmax, MinimizerIsShiftedAgainstThePrior) {
    // Two classes, prior 0.9/0.1, labels drawn balanced. Minimize the expected
    // loss over a shared logit pair by gradient descent for both losses.
    const std::vector<Real> prior{0.9, 0.1};
    const std::vector<std::size_t> labels{0, 1};
    auto minimize = [&](bool balanced) {
        Tensor logits(1, 2);
        for (int it = 0; it < 2000; ++it) {
            Tape t;
            Var l = t.leaf(Tensor::from_rows({{logits[0], logits[1]}, {logits[0], logits[1]}}));
            Var loss = balanced ? balanced_softmax_ce(t, l, labels, prior) : cross_entropy(t, l, labels);
            t.backward(loss);
            const Tensor& g = t.gradient(l);
            logits[0] -= 0.5 * (g(0, 0) + g(1, 0));
            logits[1] -= 0.5 * (g(0, 1) + g(1, 1));
        }
        return logits[1] - logits[0];
    };
    const Real plain = minimize(false);
    const Real adjusted = minimize(true);
    EXPECT_NEAR(plain, 0.0, 1e-6);
    EXPECT_GT(adjusted, plain + 1.0);
    EXPECT_NEAR(adjusted, std::log(9.0), 1e-4);
}

TEST(BalancedSoftmax, ClassPriorFromLabelsIsSmoothed) {
    const std::vector<std::size_t> y{0, 0, 0, 1};
    const auto p = class_prior_from_labels(y, 3);
    EXPECT_DOUBLE_EQ(p[0], 4.0 / 7.0);
    EXPECT_DOUBLE_EQ(p[1], 2.0 / 7.0);
    EXPECT_DOUBLE_EQ(p[2], 1.0 / 7.0);
    LossConfig cfg;
    cfg.class_prior = p;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Focal, Examples) {
    const std::vector<Real> logits{0.0, 0.0};
    EXPECT_NEAR(focal_loss(logits, 0, 2.0), 0.25 * std::log(2.0), 1e-12);
    EXPECT_NEAR(focal_loss(logits, 0, 2.0), 0.17329, 1e-5);
    EXPECT_LT(focal_loss(std::vector<Real>{30.0, 0.0}, 0, 2.0), 1e-20);
    EXPECT_THROW(focal_loss(logits, 5, 2.0), ArgumentError);
    EXPECT_THROW(focal_loss(logits, 0, -1.0), ArgumentError);
}

TEST(Reductions, AllIdentitiesHold) {
    for (const auto& r : reduction_oracles(3)) EXPECT_TRUE(r.pass) << r.name << " worst " << r.worst;
}

TEST(GradCheck, LossFamily) {
    for (const auto& r : loss_gradchecks(1e-4, 10, 5)) EXPECT_TRUE(r.pass) << r.name << " worst " << r.worst;
}

TEST(LossConfig, TemperatureAndValidation) {
    LossConfig cfg;
    EXPECT_EQ(cfg.sigma_noise, 0.001);
    EXPECT_EQ(cfg.temperature(), 2.0 * 0.001 * 0.001);
    cfg.class_prior = {0.5, 0.4};
    EXPECT_THROW(cfg.validate(), ArgumentError);
    cfg.class_prior = {};
    cfg.sigma_noise = -1.0;
    EXPECT_THROW(cfg.validate(), ArgumentError);
}
