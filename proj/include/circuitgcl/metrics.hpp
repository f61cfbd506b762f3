#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "circuit_graph.hpp"
#include "errors.hpp"

namespace circuitgcl {

struct BinError {
    std::size_t bin = 0;
    std::size_t count = 0;
    double mae = 0.0;  // 0 when the bin is empty
};

struct RegressionMetrics {
    std::size_t n = 0;
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    /// MAE on the log10 axis; the normalized axis spans `decades` decades.
    double mae_decades = 0.0;
    std::vector<BinError> per_bin;
};

struct ClassificationMetrics {
    std::size_t n_kept = 0;
    std::size_t n_classes = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<std::size_t> excluded;
    std::vector<double> per_class_f1;
};

/// Errors over normalized targets in [0, 1]. Per-bin MAE uses `n_bins`
/// equal-width bins of the target value.
inline RegressionMetrics regression_metrics(std::span<const double> preds, std::span<const double> targets,
                                            std::size_t n_bins = 5, double n_decades = 6.0) {
    if (preds.size() != targets.size()) throw ArgumentError("regression_metrics: length mismatch");
    if (targets.size() < 2) throw ArgumentError("regression_metrics: need at least two samples");
    if (n_bins == 0) throw ArgumentError("regression_metrics: n_bins must be positive");
    RegressionMetrics m;
    m.n = targets.size();
    double mean_t = 0.0;
    for (double t : targets) mean_t += t;
    mean_t /= static_cast<double>(m.n);
    double sse = 0.0, sst = 0.0, sae = 0.0;
    std::vector<double> bin_abs(n_bins, 0.0);
    std::vector<std::size_t> bin_n(n_bins, 0);
    for (std::size_t i = 0; i < m.n; ++i) {
        const double e = preds[i] - targets[i];
        sae += std::abs(e);
        sse += e * e;
        sst += (targets[i] - mean_t) * (targets[i] - mean_t);
        const std::size_t b = bin_index(std::clamp(targets[i], 0.0, 1.0), n_bins);
        bin_abs[b] += std::abs(e);
        ++bin_n[b];
    }
    m.mae = sae / static_cast<double>(m.n);
    m.mse = sse / static_cast<double>(m.n);
    if (sst == 0.0) throw ArgumentError("regression_metrics: targets have zero variance, R^2 undefined");
    m.r2 = 1.0 - sse / sst;
    m.mae_decades = m.mae * n_decades;
    for (std::size_t b = 0; b < n_bins; ++b) {
        m.per_bin.push_back({b, bin_n[b], bin_n[b] ? bin_abs[b] / static_cast<double>(bin_n[b]) : 0.0});
    }
    return m;
}

/// Macro precision/recall/F1 over classes [0, n_classes) minus `excluded`.
/// Samples whose target is excluded are dropped; predictions into an
/// excluded class still count as errors.
inline ClassificationMetrics classification_metrics(std::span<const std::size_t> preds,
                                                    std::span<const std::size_t> targets, std::size_t n_classes,
                                                    const std::set<std::size_t>& excluded = {2}) {
    if (preds.size() != targets.size()) throw ArgumentError("classification_metrics: length mismatch");
    if (n_classes == 0) throw ArgumentError("classification_metrics: n_classes must be positive");
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= n_classes || targets[i] >= n_classes) {
            throw ArgumentError("classification_metrics: class id out of range");
        }
    }
    ClassificationMetrics m;
    m.n_classes = n_classes;
    m.excluded.assign(excluded.begin(), excluded.end());
    std::vector<std::size_t> tp(n_classes, 0), pred_n(n_classes, 0), true_n(n_classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (excluded.count(targets[i])) continue;
        ++m.n_kept;
        ++pred_n[preds[i]];
        ++true_n[targets[i]];
        if (preds[i] == targets[i]) {
            ++tp[preds[i]];
            ++correct;
        }
    }
    if (m.n_kept == 0) throw ArgumentError("classification_metrics: every sample belongs to an excluded class");
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n_kept);
    std::size_t averaged = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (excluded.count(c)) continue;
        ++averaged;
        const double p = pred_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_n[c]) : 0.0;
        const double r = true_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_n[c]) : 0.0;
        const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += f;
        m.per_class_f1.push_back(f);
    }
    if (averaged == 0) throw ArgumentError("classification_metrics: every class is excluded");
    m.precision /= static_cast<double>(averaged);
    m.recall /= static_cast<double>(averaged);
    m.f1 /= static_cast<double>(averaged);
    return m;
}

/// Indices of the `k` non-empty bins with the fewest samples (ties to the
/// lower bin).
inline std::vector<std::size_t> rarest_bins(const std::vector<BinError>& bins, std::size_t k) {
    std::vector<BinError> nonempty;
    for (const auto& b : bins) {
        if (b.count > 0) nonempty.push_back(b);
    }
    std::stable_sort(nonempty.begin(), nonempty.end(), [](const BinError& a, const BinError& b) { return a.count < b.count; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, nonempty.size()); ++i) out.push_back(nonempty[i].bin);
    return out;
}

/// Sample-weighted MAE over the given bins.
inline double pooled_bin_mae(const std::vector<BinError>& bins, std::span<const std::size_t> which) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t b : which) {
        s += bins.at(b).mae * static_cast<double>(bins.at(b).count);
        n += bins.at(b).count;
    }
    return n ? s / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

struct MetricsReport {
    std::string task;  // "edge_regression" or "node_classification"
    std::string loss;
    double loss_value = 0.0;
    std::optional<RegressionMetrics> regression;
    std::optional<ClassificationMetrics> classification;
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["loss"] = r.loss;
    j["loss_value"] = r.loss_value;
    if (r.regression) {
        const auto& m = *r.regression;
        j["n"] = m.n;
        j["mae"] = m.mae;
        j["mse"] = m.mse;
        j["r2"] = m.r2;
        j["mae_decades"] = m.mae_decades;
        auto bins = nlohmann::ordered_json::array();
        for (const auto& b : m.per_bin) bins.push_back({{"bin", b.bin}, {"count", b.count}, {"mae", b.mae}});
        j["per_bin_mae"] = bins;
    }
    if (r.classification) {
        const auto& m = *r.classification;
        j["n_kept"] = m.n_kept;
        j["n_classes"] = m.n_classes;
        j["accuracy"] = m.accuracy;
        j["precision"] = m.precision;
        j["recall"] = m.recall;
        j["f1"] = m.f1;
        j["per_class_f1"] = m.per_class_f1;
        j["excluded_classes"] = m.excluded;
    }
    return j;
}

/// Aligned plain-text table with the column set of the published tables.
inline std::string to_text(const MetricsReport& r) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "task: %s   loss: %s   loss value: %.6g\n", r.task.c_str(), r.loss.c_str(),
                  r.loss_value);
    out += buf;
    if (r.regression) {
        const auto& m = *r.regression;
        std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %12s\n", "n", "MAE", "MSE", "R2", "MAE(dec)");
        out += buf;
        std::snprintf(buf, sizeof buf, "%-8zu %10.4f %10.4f %10.4f %12.4f\n", m.n, m.mae, m.mse, m.r2, m.mae_decades);
        out += buf;
        out += "per-bin MAE\n";
        for (const auto& b : m.per_bin) {
            std::snprintf(buf, sizeof buf, "  bin %zu  n=%-7zu MAE %.4f\n", b.bin, b.count, b.mae);
            out += buf;
        }
    }
    if (r.classification) {
        const auto& m = *r.classification;
        std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %10s\n", "n", "Acc.", "Precision", "Recall", "F1");
        out += buf;
        std::snprintf(buf, sizeof buf, "%-8zu %10.4f %10.4f %10.4f %10.4f\n", m.n_kept, m.accuracy, m.precision,
                      m.recall, m.f1);
        out += buf;
        out += "excluded classes:";
        for (auto c : m.excluded) out += " " + std::to_string(c);
        out += "\n";
    }
    return out;
}

}  // namespace circuitgcl
