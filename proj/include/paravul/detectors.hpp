#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paravul/bm25.hpp"
#include "paravul/corpus.hpp"
#include "paravul/dense.hpp"
#include "paravul/features.hpp"
#include "paravul/slora.hpp"

namespace paravul {

enum class DetectorKind { Slora, Bm25, Dense, External, Mock };

std::string_view to_string(DetectorKind kind);
DetectorKind detector_kind_from_string(std::string_view name);

enum class DetectionStatus { Ok, Failed };

struct DetectionResult {
    std::string detector_name;
    std::vector<double> probabilities;  // empty when failed
    double elapsed = 0.0;               // wall-clock seconds
    DetectionStatus status = DetectionStatus::Ok;
    std::string error;

    bool ok() const noexcept { return status == DetectionStatus::Ok; }
};

/// A base detector maps one contract to L per-label probabilities.
/// Implementations are read-only after construction and may be called
/// from several threads at once.
class Detector {
public:
    Detector(std::string name, std::size_t label_count) : name_(std::move(name)), label_count_(label_count) {}
    virtual ~Detector() = default;

    const std::string& name() const noexcept { return name_; }
    std::size_t label_count() const noexcept { return label_count_; }
    virtual DetectorKind kind() const = 0;

    /// Raw probabilities; may throw. detect() wraps this.
    virtual std::vector<double> run(const Contract& contract) const = 0;

private:
    std::string name_;
    std::size_t label_count_;
};

/// Times run(), validates the output shape and range, and turns any
/// exception into a failed result.
DetectionResult detect(const Detector& detector, const Contract& contract);

/// Runs every detector concurrently. Results follow detector order.
/// Throws AllDetectorsFailed when no detector succeeds.
std::vector<DetectionResult> parallel_detect(std::span<const std::shared_ptr<const Detector>> detectors,
                                             const Contract& contract);

class Bm25Detector final : public Detector {
public:
    Bm25Detector(std::shared_ptr<const Bm25Index> index, SecurityTokenizer tokenizer, int top_k = 7,
                 int vote_threshold = 4, std::string name = "bm25");

    DetectorKind kind() const override { return DetectorKind::Bm25; }
    std::vector<double> run(const Contract& contract) const override;

private:
    std::shared_ptr<const Bm25Index> index_;
    SecurityTokenizer tokenizer_;
    int top_k_;
    int vote_threshold_;
};

class DenseDetector final : public Detector {
public:
    DenseDetector(std::shared_ptr<const VectorStore> store, std::shared_ptr<const Embedder> embedder,
                  SegmentationParams params, std::size_t label_count, std::string name = "dense");

    DetectorKind kind() const override { return DetectorKind::Dense; }
    std::vector<double> run(const Contract& contract) const override;

private:
    std::shared_ptr<const VectorStore> store_;
    std::shared_ptr<const Embedder> embedder_;
    SegmentationParams params_;
};

class SloraDetector final : public Detector {
public:
    SloraDetector(std::shared_ptr<const SloraCheckpoint> checkpoint, SecurityTokenizer tokenizer = {},
                  std::string name = "slora");

    DetectorKind kind() const override { return DetectorKind::Slora; }
    std::vector<double> run(const Contract& contract) const override;

private:
    std::shared_ptr<const SloraCheckpoint> checkpoint_;
    FeatureExtractor features_;
};

/// Remote detector: POST {"source", "taxonomy"}, reply {"probabilities"}.
/// One retry after a failed attempt.
class ExternalDetector final : public Detector {
public:
    ExternalDetector(std::string endpoint, Taxonomy taxonomy, std::chrono::milliseconds timeout = std::chrono::seconds(30),
                     int retries = 1, std::string auth_header = {}, std::string name = "external");

    DetectorKind kind() const override { return DetectorKind::External; }
    std::vector<double> run(const Contract& contract) const override;

private:
    std::string endpoint_;
    Taxonomy taxonomy_;
    std::chrono::milliseconds timeout_;
    int retries_;
    std::string auth_header_;
};

/// Fixed output, with an optional delay or forced failure for tests.
class MockDetector final : public Detector {
public:
    MockDetector(std::string name, std::vector<double> probabilities,
                 std::chrono::milliseconds delay = std::chrono::milliseconds(0), bool fail = false);

    DetectorKind kind() const override { return DetectorKind::Mock; }
    std::vector<double> run(const Contract& contract) const override;

private:
    std::vector<double> probabilities_;
    std::chrono::milliseconds delay_;
    bool fail_;
};

/// Casts a binary vote to probabilities in {0, 1}.
std::vector<double> to_probabilities(const LabelVector& votes);

}  // namespace paravul
