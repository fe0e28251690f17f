#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paravul/config.hpp"
#include "paravul/corpus.hpp"
#include "paravul/detectors.hpp"
#include "paravul/meta.hpp"
#include "paravul/metrics.hpp"
#include "paravul/report.hpp"
#include "paravul/slora.hpp"

namespace paravul {

/// File names of every stage output inside the work directory.
struct ArtifactPaths {
    std::filesystem::path root;

    std::filesystem::path train_set() const { return root / "train.jsonl"; }
    std::filesystem::path test_set() const { return root / "test.jsonl"; }
    std::filesystem::path bm25_index() const { return root / "bm25_index.json"; }
    std::filesystem::path vector_store() const { return root / "dense_store.bin"; }
    std::filesystem::path slora_checkpoint() const { return root / "slora.json"; }
    std::filesystem::path slora_loss() const { return root / "slora_loss.csv"; }
    std::filesystem::path meta_checkpoint() const { return root / "meta.json"; }
    std::filesystem::path meta_loss() const { return root / "meta_loss.csv"; }
    std::filesystem::path meta_rows() const { return root / "meta_rows.csv"; }
    std::filesystem::path detections() const { return root / "detections.jsonl"; }
    std::filesystem::path timings() const { return root / "timings.jsonl"; }
    std::filesystem::path summary() const { return root / "summary.json"; }
    std::filesystem::path summary_timing() const { return root / "summary_timing.json"; }
    std::filesystem::path reports() const { return root / "reports"; }
};

struct DetectionRecord {
    std::string id;
    std::vector<DetectionResult> results;
    std::optional<Verification> verified;  // empty when every detector failed
    double total_seconds = 0.0;
};

/// Stage runner. Every stage reads its prerequisites from the work
/// directory and throws StageError when one is missing.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const noexcept { return config_; }
    const ArtifactPaths& paths() const noexcept { return paths_; }
    const Taxonomy& taxonomy() const noexcept { return taxonomy_; }

    /// Validates and preprocesses the configured data, writing train/test copies.
    std::pair<std::size_t, std::size_t> ingest() const;
    void build_index() const;
    TrainResult train_slora() const;
    MetaTrainResult train_meta() const;
    std::vector<DetectionRecord> detect() const;
    EvalSummary evaluate() const;
    std::vector<std::filesystem::path> report() const;

    /// The splits written by ingest().
    Dataset train_set() const;
    Dataset test_set() const;

    /// Detectors in configuration order, loaded from the work directory.
    std::vector<std::shared_ptr<const Detector>> load_detectors() const;

    /// Base-detector outputs on the training contracts without self-leakage:
    /// retrieval detectors exclude the query itself, the SLoRA detector is
    /// cross-fitted over `folds` folds.
    std::vector<MetaRow> meta_rows() const;

private:
    Dataset load_split(Split split) const;
    SloraCheckpoint fit_slora(const Dataset& train, TrainResult* result = nullptr) const;
    void require(const std::filesystem::path& artifact, const std::string& stage) const;

    PipelineConfig config_;
    ArtifactPaths paths_;
    Taxonomy taxonomy_;
};

nlohmann::json to_json(const DetectionRecord& record);

}  // namespace paravul
