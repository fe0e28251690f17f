#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "paravul/corpus.hpp"
#include "paravul/detectors.hpp"
#include "paravul/matrix.hpp"

namespace paravul {

/// w ⊙ ŷ.
std::vector<double> fuse(std::span<const double> weights, std::span<const double> predictions);

struct MetaConfig {
    std::size_t hidden1 = 16;
    std::size_t hidden2 = 8;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t epochs = 300;
    std::uint64_t seed = 0;
    double threshold = 0.5;
    double lambda = 1.0;  // proximal strength for adapt_to_task

    void validate() const;
};

/// One training row: the Ψ base predictions for a (contract, label) pair.
struct MetaRow {
    std::vector<double> predictions;
    double truth = 0.0;
};

/// Fusion weights followed by a ReLU-ReLU-sigmoid MLP over Ψ inputs.
class MetaLearner {
public:
    MetaLearner(std::size_t inputs, std::size_t hidden1, std::size_t hidden2);

    /// w = 1, He-uniform layer weights, zero biases.
    static MetaLearner create(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::uint64_t seed);

    std::size_t inputs() const noexcept { return weights.size(); }
    std::size_t hidden1() const noexcept { return w1.rows(); }
    std::size_t hidden2() const noexcept { return w2.rows(); }

    /// MLP over an already fused input. Counts the weight multiplies
    /// (Ψ h1 + h1 h2 + h2) in *mults when given.
    double forward(std::span<const double> x, std::uint64_t* mults = nullptr) const;

    /// forward(fuse(weights, predictions)).
    double predict(std::span<const double> predictions) const;

    /// Mean clamped BCE over rows.
    double loss(std::span<const MetaRow> rows) const;

    /// Flat parameter view: w, W1, b1, W2, b2, W3, b3.
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);
    std::size_t parameter_count() const;

    /// Gradient of loss() in the parameters() layout.
    std::vector<double> gradient(std::span<const MetaRow> rows) const;

    std::vector<double> weights;  // fusion weights, length Ψ
    Matrix w1;                    // h1 x Ψ
    std::vector<double> b1;
    Matrix w2;                    // h2 x h1
    std::vector<double> b2;
    Matrix w3;                    // 1 x h2
    double b3 = 0.0;
};

struct MetaTrainResult {
    MetaLearner learner;
    std::vector<double> loss_trace;
};

/// Mini-batch gradient descent on the BCE of every row.
MetaTrainResult train_meta(std::span<const MetaRow> rows, const MetaConfig& config);

/// L_t and its gradient for proximal adaptation.
struct TaskObjective {
    std::function<double(std::span<const double>)> loss;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

struct AdaptOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 100000;
};

/// argmin over v of L_t(v) + (λ/2)|v - w|², by gradient descent with
/// backtracking from v = w. Stops once |∇| <= tolerance * max(1, λ).
std::vector<double> adapt_to_task(std::span<const double> weights, const TaskObjective& task, double lambda,
                                  const AdaptOptions& options = {});

struct Verification {
    LabelVector labels;
    std::vector<double> probabilities;
};

/// Missing probability used for a failed detector.
constexpr double kImputedProbability = 0.5;

/// Per-label fusion of detector outputs; bit j set iff probability >= threshold.
Verification verify(const MetaLearner& learner, std::span<const DetectionResult> results, std::size_t label_count,
                    double threshold = 0.5);

/// Assembles the Ψ-vector for label j, imputing failed detectors.
std::vector<double> gather_predictions(std::span<const DetectionResult> results, std::size_t label);

struct MetaCheckpoint {
    MetaLearner learner;
    double threshold = 0.5;

    void save(const std::filesystem::path& path) const;
    static MetaCheckpoint load(const std::filesystem::path& path);
};

void write_meta_rows_csv(std::span<const MetaRow> rows, const std::filesystem::path& path);

}  // namespace paravul
