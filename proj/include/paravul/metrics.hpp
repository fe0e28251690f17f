#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paravul/corpus.hpp"

namespace paravul {

/// Subset accuracy plus micro-averaged precision, recall and F1 over all
/// (contract, label) cells. Undefined ratios are reported as 0.
struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t samples = 0;
};

Metrics compute_metrics(std::span<const LabelVector> predictions, std::span<const LabelVector> truths);

struct DetectorSummary {
    std::string name;
    Metrics metrics;
    double mean_seconds = 0.0;
    std::size_t failures = 0;
};

struct EvalSummary {
    std::vector<DetectorSummary> detectors;
    DetectorSummary verified;

    /// Metrics only. Omits wall-clock fields so that identical runs serialise identically.
    nlohmann::json metrics_json() const;
    /// Mean per-contract seconds for each detector.
    nlohmann::json timing_json() const;
    std::string table() const;
};

}  // namespace paravul
