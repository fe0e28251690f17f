#include "paravul/metrics.hpp"

#include <cstdio>

#include "paravul/error.hpp"

namespace paravul {

using nlohmann::json;

Metrics compute_metrics(std::span<const LabelVector> predictions, std::span<const LabelVector> truths) {
    if (predictions.size() != truths.size()) {
        throw Error(ErrorKind::ShapeError, "metrics need equally many predictions and truths");
    }
    Metrics m;
    m.samples = truths.size();
    std::size_t exact = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto& p = predictions[i];
        const auto& t = truths[i];
        if (p.size() != t.size()) {
            throw Error(ErrorKind::ShapeError, "prediction and truth label vectors differ in length");
        }
        exact += p == t ? 1 : 0;
        for (std::size_t j = 0; j < t.size(); ++j) {
            if (p.test(j) && t.test(j)) {
                ++m.true_positives;
            } else if (p.test(j)) {
                ++m.false_positives;
            } else if (t.test(j)) {
                ++m.false_negatives;
            }
        }
    }
    const auto tp = static_cast<double>(m.true_positives);
    const auto fp = static_cast<double>(m.false_positives);
    const auto fn = static_cast<double>(m.false_negatives);
    m.accuracy = truths.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(truths.size());
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

namespace {

json metrics_entry(const DetectorSummary& s) {
    return {{"name", s.name},
            {"accuracy", s.metrics.accuracy},
            {"precision", s.metrics.precision},
            {"recall", s.metrics.recall},
            {"f1", s.metrics.f1},
            {"true_positives", s.metrics.true_positives},
            {"false_positives", s.metrics.false_positives},
            {"false_negatives", s.metrics.false_negatives},
            {"samples", s.metrics.samples},
            {"failures", s.failures}};
}

}  // namespace

json EvalSummary::metrics_json() const {
    json j;
    j["detectors"] = json::array();
    for (const auto& d : detectors) {
        j["detectors"].push_back(metrics_entry(d));
    }
    j["verified"] = metrics_entry(verified);
    return j;
}

json EvalSummary::timing_json() const {
    json j = json::object();
    for (const auto& d : detectors) {
        j[d.name] = {{"mean_seconds", d.mean_seconds}};
    }
    j[verified.name] = {{"mean_seconds", verified.mean_seconds}};
    return j;
}

std::string EvalSummary::table() const {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s %9s %9s %9s %9s %12s\n", "model", "accuracy", "recall", "precision",
                  "f1", "time (s)");
    out += buf;
    auto row = [&](const DetectorSummary& s) {
        std::snprintf(buf, sizeof(buf), "%-12s %9.4f %9.4f %9.4f %9.4f %12.6f\n", s.name.c_str(), s.metrics.accuracy,
                      s.metrics.recall, s.metrics.precision, s.metrics.f1, s.mean_seconds);
        out += buf;
    };
    for (const auto& d : detectors) {
        row(d);
    }
    row(verified);
    return out;
}

}  // namespace paravul
