#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include <circuitgcl/checkpoint.hpp>
#include <circuitgcl/graph_io.hpp>
#include <circuitgcl/metrics.hpp>
#include <circuitgcl/report.hpp>
#include <circuitgcl/run_config.hpp>
#include <circuitgcl/synth.hpp>
#include <circuitgcl/task.hpp>

using namespace circuitgcl;

namespace {

struct Design {
    GraphBundle bundle;
    EncoderParams encoder;
    EmbeddingMatrix emb;
};

Design small_design(std::uint64_t seed, std::size_t cells = 20) {
    SynthConfig sc;
    sc.n_cells = cells;
    sc.seed = seed;
    PretrainConfig pc;
    pc.hidden_dim = 8;
    pc.n_layers = 2;
    pc.seed = seed;
    Design d;
    d.bundle = make_bundle(synth_generate(sc));
    d.encoder = init_pretrain_state(pc).theta;
    d.emb = embed(d.encoder, d.bundle.graph);
    return d;
}

TaskConfig small_task(TaskKind kind, LossKind loss, std::size_t epochs = 3) {
    TaskConfig c;
    c.task = kind;
    c.loss = loss;
    c.hidden_dim = 8;
    c.n_layers = 2;
    c.epochs = epochs;
    c.learning_rate = 1e-2;
    c.batch_size = 64;
    c.sigma_noise = 0.05;
    c.seed = 11;
    return c;
}

std::uint32_t first_of_kind(const HomoGraph& g, NodeKind k) {
    for (std::uint32_t i = 0; i < g.n; ++i) {
        if (g.x[i] == static_cast<std::uint8_t>(k)) return i;
    }
    throw std::logic_error("no node of that kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(RegressionMetrics, PerfectPredictions) {
    const std::vector<double> y{0.1, 0.5, 0.9};
    const auto m = regression_metrics(y, y);
    EXPECT_EQ(m.mae, 0.0);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.r2, 1.0);
}

TEST(RegressionMetrics, MeanPredictorScoresZero) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> y(50);
        for (auto& v : y) v = rng.uniform(0.0, 1.0);
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= 50.0;
        const std::vector<double> p(50, mean);
        EXPECT_NEAR(regression_metrics(p, y).r2, 0.0, 1e-12);
    }
}

TEST(RegressionMetrics, SwappedPairGivesMinusThree) {
    const std::vector<double> p{0.0, 1.0}, y{1.0, 0.0};
    const auto m = regression_metrics(p, y);
    EXPECT_DOUBLE_EQ(m.mae, 1.0);
    EXPECT_DOUBLE_EQ(m.mse, 1.0);
    EXPECT_DOUBLE_EQ(m.r2, -3.0);
}

TEST(RegressionMetrics, PerBinAndDecades) {
    const std::vector<double> y{0.05, 0.15, 0.5, 0.95}, p{0.15, 0.15, 0.4, 0.95};
    const auto m = regression_metrics(p, y, 5, 6.0);
    ASSERT_EQ(m.per_bin.size(), 5u);
    EXPECT_EQ(m.per_bin[0].count, 2u);
    EXPECT_NEAR(m.per_bin[0].mae, 0.05, 1e-12);
    EXPECT_EQ(m.per_bin[1].count, 0u);
    EXPECT_NEAR(m.per_bin[2].mae, 0.1, 1e-12);
    EXPECT_EQ(m.per_bin[4].count, 1u);
    EXPECT_NEAR(m.mae_decades, m.mae * 6.0, 1e-15);
    EXPECT_LE(m.r2, 1.0);
}

TEST(RegressionMetrics, Errors) {
    const std::vector<double> one{0.5};
    EXPECT_THROW(regression_metrics(one, one), ArgumentError);
    const std::vector<double> a{0.1, 0.2}, b{0.1, 0.2, 0.3};
    EXPECT_THROW(regression_metrics(a, b), ArgumentError);
    const std::vector<double> flat{0.3, 0.3};
    EXPECT_THROW(regression_metrics(a, flat), ArgumentError);
}

TEST(RarestBins, SkipsEmptyAndPools) {
    std::vector<BinError> bins{{0, 3, 0.2}, {1, 0, 0.0}, {2, 50, 0.1}, {3, 10, 0.05}, {4, 1, 0.4}};
    const auto r = rarest_bins(bins, 2);
    ASSERT_EQ(r, (std::vector<std::size_t>{4, 0}));
    EXPECT_NEAR(pooled_bin_mae(bins, r), (0.4 + 3 * 0.2) / 4.0, 1e-15);
}

TEST(ClassificationMetrics, PerfectPredictions) {
    const std::vector<std::size_t> y{0, 1, 3, 4, 2};
    const auto m = classification_metrics(y, y, 5);
    EXPECT_EQ(m.n_kept, 4u);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(ClassificationMetrics, HandConfusionMatrix) {
    const std::vector<std::size_t> y{0, 0, 1, 2}, p{0, 1, 1, 2};
    const auto m = classification_metrics(p, y, 5, {2});
    EXPECT_EQ(m.n_kept, 3u);
    EXPECT_DOUBLE_EQ(m.accuracy, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.precision, 0.375);
    // recall: class 0 1/2, class 1 1/1 -> (0.5 + 1) / 4
    EXPECT_DOUBLE_EQ(m.recall, 0.375);
    EXPECT_EQ(m.excluded, (std::vector<std::size_t>{2}));
}

TEST(ClassificationMetrics, PredictionIntoExcludedClassIsAnError) {
    const std::vector<std::size_t> y{1, 1}, p{2, 1};
    const auto m = classification_metrics(p, y, 5, {2});
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
}

TEST(ClassificationMetrics, AllExcludedIsAnError) {
    const std::vector<std::size_t> y{2, 2, 2};
    EXPECT_THROW(classification_metrics(y, y, 5, {2}), ArgumentError);
}

TEST(ClassificationMetrics, SingleClassNoExclusionNeverNaN) {
    const std::vector<std::size_t> y{3, 3, 3};
    const auto m = classification_metrics(y, y, 5, {});
    EXPECT_DOUBLE_EQ(m.precision, 0.2);
    EXPECT_DOUBLE_EQ(m.f1, 0.2);
    for (double f : m.per_class_f1) EXPECT_FALSE(std::isnan(f));
}

TEST(MetricsReport, JsonAndText) {
    MetricsReport r;
    r.task = "node_classification";
    r.loss = "bsmce";
    const std::vector<std::size_t> y{0, 1, 3}, p{0, 1, 4};
    r.classification = classification_metrics(p, y, 5);
    const auto j = to_json(r);
    for (const char* k : {"accuracy", "precision", "recall", "f1", "excluded_classes"}) EXPECT_TRUE(j.contains(k));
    const std::string text = to_text(r);
    EXPECT_NE(text.find("Acc."), std::string::npos);
    EXPECT_NE(text.find("excluded classes: 2"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Heads and training
// ---------------------------------------------------------------------------

TEST(ArgmaxClass, LargestAndTies) {
    const std::vector<Real> l{0.1, 5.0, 0.2, 0.1, 0.1};
    EXPECT_EQ(argmax_class(l), 1u);
    const std::vector<Real> tie{0.3, 0.7, 0.7, 0.1};
    EXPECT_EQ(argmax_class(tie), 1u);
    EXPECT_THROW(argmax_class(std::vector<Real>{}), ArgumentError);
}

TEST(ExtractLabels, EdgesAndNets) {
    const Design d = small_design(1);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    EXPECT_FALSE(labels.edges.empty());
    EXPECT_FALSE(labels.nodes.empty());
    for (const auto& e : labels.edges) {
        EXPECT_GE(e.y, 0.0);
        EXPECT_LE(e.y, 1.0);
    }
    for (const auto& s : labels.nodes) {
        EXPECT_LT(s.y, 5u);
        EXPECT_EQ(d.bundle.graph.x[s.node], static_cast<std::uint8_t>(NodeKind::Net));
    }
}

TEST(TrainTask, EdgePredictionIsSymmetricAndClamped) {
    const Design d = small_design(2);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    const TaskModel m = train_task(d.bundle.graph, d.encoder, d.emb, labels, small_task(TaskKind::EdgeRegression, LossKind::MSE));
    ASSERT_EQ(m.head.tensors().front()->rows(), 16u);  // 2x backbone width
    Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        const auto u = static_cast<std::uint32_t>(rng.below(d.bundle.graph.n));
        const auto v = static_cast<std::uint32_t>(rng.below(d.bundle.graph.n));
        const Real a = predict_edge(m, d.bundle.graph, d.emb, u, v);
        EXPECT_EQ(a, predict_edge(m, d.bundle.graph, d.emb, v, u));
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
    EXPECT_THROW(predict_edge(m, d.bundle.graph, d.emb, 0, static_cast<std::uint32_t>(d.bundle.graph.n)), ArgumentError);
}

TEST(TrainTask, LossSwapKeepsArchitecture) {
    const Design d = small_design(3);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    std::vector<TaskModel> ms;
    for (LossKind k : {LossKind::MSE, LossKind::GAI, LossKind::BMC}) {
        ms.push_back(train_task(d.bundle.graph, d.encoder, d.emb, labels, small_task(TaskKind::EdgeRegression, k, 1)));
    }
    for (LossKind k : {LossKind::CE, LossKind::Focal, LossKind::BalancedSoftmaxCE}) {
        ms.push_back(train_task(d.bundle.graph, d.encoder, d.emb, labels, small_task(TaskKind::NodeClassification, k, 1)));
    }
    for (std::size_t i = 1; i < 3; ++i) {
        ASSERT_EQ(ms[i].backbone.tensors().size(), ms[0].backbone.tensors().size());
        for (std::size_t t = 0; t < ms[0].head.tensors().size(); ++t) {
            EXPECT_EQ(ms[i].head.tensors()[t]->rows(), ms[0].head.tensors()[t]->rows());
            EXPECT_EQ(ms[i].head.tensors()[t]->cols(), ms[0].head.tensors()[t]->cols());
        }
    }
    EXPECT_TRUE(ms[1].prior.has_value());
    EXPECT_FALSE(ms[0].prior.has_value());
    EXPECT_EQ(ms[5].class_prior.size(), 5u);
    EXPECT_EQ(ms[3].head.tensors().back()->cols(), 5u);
}

TEST(TrainTask, DeterministicUnderSeed) {
    const Design d = small_design(4);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    const auto cfg = small_task(TaskKind::EdgeRegression, LossKind::GAI, 2);
    const TaskModel a = train_task(d.bundle.graph, d.encoder, d.emb, labels, cfg);
    const TaskModel b = train_task(d.bundle.graph, d.encoder, d.emb, labels, cfg);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(serialize_task(a), serialize_task(b));
}

TEST(TrainTask, GaiTrainingLossDecreases) {
    const Design d = small_design(5, 200);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    auto cfg = small_task(TaskKind::EdgeRegression, LossKind::GAI, 100);
    cfg.batch_size = 1024;
    const TaskModel m = train_task(d.bundle.graph, d.encoder, d.emb, labels, cfg);
    ASSERT_EQ(m.history.size(), 100u);
    EXPECT_LT(m.history.back(), m.history.front());
}

TEST(TrainTask, NoLabelsIsAnError) {
    const Design d = small_design(6);
    TaskLabels none;
    EXPECT_THROW(train_task(d.bundle.graph, d.encoder, d.emb, none, small_task(TaskKind::EdgeRegression, LossKind::MSE)),
                 ArgumentError);
    EXPECT_THROW(train_task(d.bundle.graph, d.encoder, d.emb, none,
                            small_task(TaskKind::NodeClassification, LossKind::CE)),
                 ArgumentError);
}

TEST(TrainTask, LossMustMatchTask) {
    EXPECT_THROW(small_task(TaskKind::EdgeRegression, LossKind::CE).validate(), ArgumentError);
    EXPECT_THROW(small_task(TaskKind::NodeClassification, LossKind::GAI).validate(), ArgumentError);
}

TEST(TrainTask, EmbeddingRowsMustMatchGraph) {
    const Design d = small_design(7);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    EmbeddingMatrix bad{Tensor(3, 8), true};
    EXPECT_THROW(train_task(d.bundle.graph, d.encoder, bad, labels, small_task(TaskKind::EdgeRegression, LossKind::MSE)),
                 ArgumentError);
}

TEST(PredictNodeClass, NetOnlyAndArgmaxConsistent) {
    const Design d = small_design(8);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    const TaskModel m =
        train_task(d.bundle.graph, d.encoder, d.emb, labels, small_task(TaskKind::NodeClassification, LossKind::BalancedSoftmaxCE));
    const auto net = first_of_kind(d.bundle.graph, NodeKind::Net);
    const auto p = predict_node_class(m, d.bundle.graph, d.emb, net);
    ASSERT_EQ(p.logits.size(), 5u);
    EXPECT_EQ(p.cls, argmax_class(p.logits));
    EXPECT_THROW(predict_node_class(m, d.bundle.graph, d.emb, first_of_kind(d.bundle.graph, NodeKind::Device)),
                 ArgumentError);
    EXPECT_THROW(predict_edge(m, d.bundle.graph, d.emb, 0, 1), ArgumentError);
}

TEST(Evaluate, TransferToAnotherDesign) {
    const Design a = small_design(9), b = small_design(10);
    const auto la = extract_labels(a.bundle, LabelSpec{}, 5);
    const auto lb = extract_labels(b.bundle, LabelSpec{}, 5);
    const TaskModel m = train_task(a.bundle.graph, a.encoder, a.emb, la, small_task(TaskKind::EdgeRegression, LossKind::BMC));
    const auto r = evaluate(m, b.bundle.graph, lb);
    ASSERT_TRUE(r.regression.has_value());
    EXPECT_EQ(r.regression->n, lb.edges.size());
    EXPECT_LE(r.regression->r2, 1.0);
    EXPECT_EQ(r.loss, "bmc");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, TaskRoundTripPredictsIdentically) {
    const Design d = small_design(12);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    for (LossKind k : {LossKind::GAI, LossKind::BalancedSoftmaxCE}) {
        const auto kind = is_regression_loss(k) ? TaskKind::EdgeRegression : TaskKind::NodeClassification;
        const TaskModel m = train_task(d.bundle.graph, d.encoder, d.emb, labels, small_task(kind, k, 2));
        const TaskModel back = deserialize_task(serialize_task(m));
        EXPECT_TRUE(back == m);
        const auto a = evaluate(m, d.bundle.graph, labels);
        const auto b = evaluate(back, d.bundle.graph, labels);
        EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    }
}

TEST(Checkpoint, PretrainRoundTrip) {
    PretrainConfig pc;
    pc.hidden_dim = 8;
    pc.n_layers = 2;
    pc.epochs = 2;
    pc.learning_rate = 0.1;
    pc.seed = 4;
    const Design d = small_design(13);
    const auto r = pretrain(d.bundle.graph, pc);
    const PretrainCheckpoint ck{pc, r.theta, r.phi, r.predictor, r.history};
    const PretrainCheckpoint back = deserialize_pretrain(serialize_pretrain(ck));
    EXPECT_TRUE(back == ck);
    EXPECT_EQ(back.history.size(), 2u);
    EXPECT_EQ(back.cfg.hidden_dim, 8u);
    EXPECT_EQ(serialize_pretrain(back), serialize_pretrain(ck));
}

TEST(Checkpoint, VersionMismatchNamesBothVersions) {
    const Design d = small_design(14);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    auto bytes = serialize_task(train_task(d.bundle.graph, d.encoder, d.emb, labels,
                                           small_task(TaskKind::EdgeRegression, LossKind::MSE, 1)));
    bytes[4] = 7;
    try {
        deserialize_task(bytes);
        FAIL() << "expected VersionError";
    } catch (const VersionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("version 7"), std::string::npos) << msg;
        EXPECT_NE(msg.find("expected 1"), std::string::npos) << msg;
    }
}

TEST(Checkpoint, WrongKindAndCorruption) {
    const Design d = small_design(15);
    const auto labels = extract_labels(d.bundle, LabelSpec{}, 5);
    auto bytes = serialize_task(train_task(d.bundle.graph, d.encoder, d.emb, labels,
                                           small_task(TaskKind::EdgeRegression, LossKind::MSE, 1)));
    EXPECT_THROW(deserialize_pretrain(bytes), FormatError);
    bytes[bytes.size() / 2] ^= 0xff;
    EXPECT_THROW(deserialize_task(bytes), FormatError);
}

// ---------------------------------------------------------------------------
// Run configuration and reports
// ---------------------------------------------------------------------------

TEST(RunConfig, IniOverridesDefaultsAndRoundTrips) {
    RunConfig rc;
    apply_ini(rc, "[run]\nseed=9\n[task]\nloss=gai\nepochs=7\n[pretrain]\nactivation=prelu\n");
    EXPECT_EQ(rc.seed, 9u);
    EXPECT_EQ(rc.task.loss, LossKind::GAI);
    EXPECT_EQ(rc.task.epochs, 7u);
    EXPECT_EQ(rc.pretrain.activation, Activation::PReLU);
    EXPECT_EQ(rc.pretrain.hidden_dim, 256u);
    resolve_seed(rc);
    RunConfig again;
    apply_ini(again, resolved_ini(rc));
    resolve_seed(again);
    EXPECT_EQ(resolved_ini(again), resolved_ini(rc));
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    RunConfig rc;
    EXPECT_THROW(apply_ini(rc, "[task]\nlos=gai\n"), ArgumentError);
    EXPECT_THROW(apply_ini(rc, "[task]\nepochs=-3\n"), ArgumentError);
    EXPECT_THROW(apply_ini(rc, "[task]\nlearning_rate=fast\n"), ArgumentError);
    EXPECT_THROW(apply_ini(rc, "[task\nepochs=1\n"), ArgumentError);
    EXPECT_THROW(set_config_value(rc, "synth.cell_mix", "1,2"), ArgumentError);
}

TEST(Report, HashCoversPayloadOnly) {
    nlohmann::ordered_json payload{{"r2", 0.5}, {"n", 10}};
    auto a = make_report("eval", payload);
    auto b = make_report("eval", payload);
    b["generated_at"] = "1970-01-01T00:00:00Z";
    EXPECT_EQ(a["payload_crc32"], b["payload_crc32"]);
    EXPECT_TRUE(verify_report(a));
    a["payload"]["r2"] = 0.6;
    EXPECT_FALSE(verify_report(a));
}
