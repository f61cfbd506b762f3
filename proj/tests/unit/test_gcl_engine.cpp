#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "circuitgcl/graph_io.hpp"
#include "circuitgcl/rsm.hpp"
#include "circuitgcl/synth.hpp"

using namespace circuitgcl;

namespace {

HomoGraph small_design(std::uint64_t seed, std::size_t cells = 30) {
    SynthConfig cfg;
    cfg.n_cells = cells;
    cfg.seed = seed;
    return homogenize(synth_generate(cfg));
}

PretrainConfig quick_config(std::uint64_t seed) {
    PretrainConfig cfg;
    cfg.hidden_dim = 16;
    cfg.n_layers = 2;
    cfg.epochs = 10;
    cfg.learning_rate = 0.1;
    cfg.seed = seed;
    return cfg;
}

Tensor random_rows(Rng& rng, std::size_t n, std::size_t k) {
    Tensor t(n, k);
    for (auto& v : t.data()) v = rng.normal(0.0, 1.0);
    return t;
}

}  // namespace

TEST(Encoder, OutputShapeAndFiniteness) {
    const auto g = small_design(1);
    Rng rng(2);
    const auto p = EncoderParams::init(8, 3, Activation::Tanh, 0.3, rng);
    const Tensor h = encode(p, g);
    EXPECT_EQ(h.rows(), g.n);
    EXPECT_EQ(h.cols(), 8u);
    EXPECT_TRUE(h.all_finite());
}

TEST(Encoder, PReLUVariantTrainsSlopes) {
    const auto g = small_design(1);
    Rng rng(3);
    const auto p = EncoderParams::init(8, 2, Activation::PReLU, 0.0, rng);
    Tape t;
    const auto v = bind(t, p, true);
    const auto f = features_of(g);
    Var loss = sum(t, square(t, encode(t, v, f, 0.0, true, 0)));
    t.backward(loss);
    EXPECT_NE(t.gradient(v.layers[0][3])[0], 0.0);
}

TEST(Encoder, DropoutOnlyInTraining) {
    const auto g = small_design(4);
    Rng rng(5);
    const auto p = EncoderParams::init(8, 3, Activation::Tanh, 0.5, rng);
    const auto f = features_of(g);
    Tape t;
    const auto v = bind(t, p, false);
    const Tensor eval_a = t.value(encode(t, v, f, 0.5, false, 1));
    const Tensor eval_b = t.value(encode(t, v, f, 0.5, false, 2));
    const Tensor train = t.value(encode(t, v, f, 0.5, true, 1));
    EXPECT_EQ(eval_a, eval_b);
    EXPECT_NE(eval_a, train);
}

TEST(Encoder, DistinguishesNodeTypesAndDegrees) {
    const auto g = small_design(6);
    Rng rng(7);
    const auto p = EncoderParams::init(16, 2, Activation::Tanh, 0.0, rng);
    const Tensor h = normalize_rows(encode(p, g));
    EXPECT_GT(mean_pairwise_distance(h), 0.1);
}

TEST(Projection, RowsHaveUnitNorm) {
    Rng rng(8);
    Tensor h = random_rows(rng, 200, 12);
    for (std::size_t k = 0; k < 12; ++k) h(7, k) *= 1e-6;
    const Tensor n = normalize_rows(h);
    for (std::size_t i = 0; i < n.rows(); ++i) {
        Real s = 0.0;
        for (Real v : n.row(i)) s += v * v;
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6) << "row " << i;
    }
}

TEST(Scattering, LossIsBoundedAndZeroWhenCollapsed) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor h = normalize_rows(random_rows(rng, 50, 4));
        const Real l = scattering_loss(h, scatter_center(h));
        EXPECT_LE(l, 0.0);
        EXPECT_GE(l, -4.0);
    }
    Tensor same(10, 3);
    for (std::size_t i = 0; i < 10; ++i) same(i, 0) = 1.0;
    EXPECT_EQ(scattering_loss(same, scatter_center(same)), 0.0);
    // Antipodal pair: center at origin, every row at distance 1.
    const Tensor anti = Tensor::from_rows({{1.0, 0.0}, {-1.0, 0.0}});
    EXPECT_DOUBLE_EQ(scattering_loss(anti, scatter_center(anti)), -1.0);
}

TEST(Scattering, CenterIsDetached) {
    Rng rng(10);
    const Tensor h0 = normalize_rows(random_rows(rng, 6, 3));
    Tape t;
    Var h = t.leaf(h0);
    Var loss = scattering_loss(t, h, scatter_center(t, h));
    t.backward(loss);
    const Tensor c = scatter_center(h0);
    const Tensor g = t.gradient(h);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g(i, k), -2.0 / 6.0 * (h0(i, k) - c(0, k)), 1e-15);
    }
    EXPECT_THROW(scattering_loss(h0, Tensor(1, 4)), ArgumentError);
}

TEST(Alignment, IdenticalRowsGiveMinusOne) {
    Rng rng(11);
    const Tensor z = random_rows(rng, 9, 5);
    EXPECT_NEAR(alignment_loss(z, z), -1.0, 1e-12);
    Tensor neg = z;
    for (auto& v : neg.data()) v = -v;
    EXPECT_NEAR(alignment_loss(z, neg), 1.0, 1e-12);
    EXPECT_THROW(alignment_loss(z, Tensor(9, 4)), ArgumentError);
}

TEST(Ema, ElementwiseExact) {
    Rng rng(12);
    const auto theta = EncoderParams::init(6, 2, Activation::Tanh, 0.0, rng);
    const auto phi = EncoderParams::init(6, 2, Activation::Tanh, 0.0, rng);
    const auto out = ema_update(phi, theta, 0.99);
    const auto a = phi.tensors(), b = theta.tensors(), c = out.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i]->size(); ++k) {
            EXPECT_EQ((*c[i])[k], 0.99 * (*a[i])[k] + (1.0 - 0.99) * (*b[i])[k]);
        }
    }
    EXPECT_EQ(ema_update(phi, theta, 1.0), phi);
    EXPECT_EQ(ema_update(phi, theta, 0.0), theta);
    EXPECT_THROW(ema_update(phi, theta, 1.5), ArgumentError);
    const auto other = EncoderParams::init(4, 2, Activation::Tanh, 0.0, rng);
    EXPECT_THROW(ema_update(phi, other, 0.5), ArgumentError);
}

TEST(StopGradient, TargetBranchReceivesNoGradient) {
    const auto g = small_design(13);
    const auto f = features_of(g);
    auto s = init_pretrain_state(quick_config(1));
    Tape t;
    const auto ov = bind(t, s.theta, true);
    const auto tv = bind(t, s.phi, true);  // trainable on purpose
    const auto pv = bind(t, s.predictor, true);
    Var h_t = rowwise_l2_normalize(t, encode(t, tv, f, 0.0, false, 0));
    Var h_o = rowwise_l2_normalize(t, encode(t, ov, f, 0.0, false, 0));
    Var loss = alignment_loss(t, mlp_forward(t, pv, h_o), h_t);
    t.backward(loss);
    for (Var v : tv.all()) {
        const Tensor grad = t.gradient(v);
        for (Real x : grad.data()) EXPECT_EQ(x, 0.0);
    }
}

TEST(StopGradient, OnlineGradientIgnoresTargetPerturbationPath) {
    // Perturbing phi changes the alignment target value but the online
    // gradient must equal the one computed with the target as a constant.
    const auto g = small_design(14);
    const auto f = features_of(g);
    auto s = init_pretrain_state(quick_config(2));
    auto grads = [&](bool target_trainable) {
        Tape t;
        const auto ov = bind(t, s.theta, true);
        const auto tv = bind(t, s.phi, target_trainable);
        const auto pv = bind(t, s.predictor, false);
        Var h_t = rowwise_l2_normalize(t, encode(t, tv, f, 0.0, false, 0));
        Var h_o = rowwise_l2_normalize(t, encode(t, ov, f, 0.0, false, 0));
        Var loss = alignment_loss(t, mlp_forward(t, pv, h_o), h_t);
        t.backward(loss);
        return gradients(t, ov.all());
    };
    const auto a = grads(true);
    const auto b = grads(false);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Pretrain, IsDeterministicUnderSeed) {
    const auto g = small_design(15);
    const auto a = pretrain(g, quick_config(3));
    const auto b = pretrain(g, quick_config(3));
    EXPECT_EQ(a.theta, b.theta);
    EXPECT_EQ(a.embeddings.values, b.embeddings.values);
    const auto c = pretrain(g, quick_config(4));
    EXPECT_NE(a.theta, c.theta);
}

TEST(Pretrain, EmbeddingsAreNormalizedAndScatter) {
    const auto g = small_design(16, 40);
    auto cfg = quick_config(5);
    cfg.epochs = 30;
    const auto r = pretrain(g, cfg);
    ASSERT_EQ(r.history.size(), 30u);
    EXPECT_TRUE(r.embeddings.normalized);
    for (std::size_t i = 0; i < r.embeddings.values.rows(); ++i) {
        Real s = 0.0;
        for (Real v : r.embeddings.values.row(i)) s += v * v;
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
    }
    const auto init = init_pretrain_state(cfg);
    const Real before = mean_pairwise_distance(normalize_rows(encode(init.theta, g)));
    const Real after = mean_pairwise_distance(r.embeddings.values);
    EXPECT_GT(after, before);
    EXPECT_LT(r.history.back().loss, r.history.front().loss);
}

TEST(Pretrain, PerStepEmaAndBatchedModeRun) {
    const auto g = small_design(17);
    auto cfg = quick_config(6);
    cfg.epochs = 3;
    cfg.ema_per_step = true;
    cfg.batch_node_threshold = 100;
    cfg.batch_anchors = 128;
    const auto r = pretrain(g, cfg);
    EXPECT_EQ(r.history.size(), 3u);
    EXPECT_EQ(r.embeddings.values.rows(), g.n);
    EXPECT_NE(r.phi, r.theta);
    EXPECT_TRUE(r.theta.all_finite());
}

TEST(Pretrain, ConfigValidation) {
    const auto g = small_design(18);
    auto cfg = quick_config(7);
    cfg.ema_tau = 1.2;
    EXPECT_THROW(pretrain(g, cfg), ArgumentError);
    cfg = quick_config(7);
    cfg.scatter_weight = -1.0;
    EXPECT_THROW(pretrain(g, cfg), ArgumentError);
    cfg = quick_config(7);
    cfg.dropout = 1.0;
    EXPECT_THROW(pretrain(g, cfg), ArgumentError);
}

TEST(Pretrain, PaperDefaults) {
    const PretrainConfig cfg;
    EXPECT_EQ(cfg.hidden_dim, 256u);
    EXPECT_EQ(cfg.n_layers, 4u);
    EXPECT_EQ(cfg.activation, Activation::Tanh);
    EXPECT_EQ(cfg.dropout, 0.3);
    EXPECT_EQ(cfg.ema_tau, 0.99);
    EXPECT_EQ(cfg.scatter_weight, 1.0);
    EXPECT_EQ(cfg.learning_rate, 1e-6);
}

TEST(Embeddings, CsvExport) {
    const auto path = std::filesystem::temp_directory_path() / "circuitgcl_emb_test.csv";
    EmbeddingMatrix e{Tensor::from_rows({{0.1, -0.25}, {1.0 / 3.0, 0.0}}), true};
    export_embeddings(e, path.string());
    std::ifstream in(path);
    std::string header, r0, r1;
    std::getline(in, header);
    std::getline(in, r0);
    std::getline(in, r1);
    EXPECT_EQ(header, "node_id,e0,e1");
    EXPECT_EQ(r0, "0,0.10000000000000001,-0.25");
    EXPECT_EQ(std::stod(r1.substr(r1.find(',') + 1)), 1.0 / 3.0);
    std::filesystem::remove(path);
    EXPECT_THROW(export_embeddings(e, "/nonexistent_dir/x.csv"), IoError);
}
