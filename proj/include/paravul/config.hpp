#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paravul/bm25.hpp"
#include "paravul/dense.hpp"
#include "paravul/detectors.hpp"
#include "paravul/meta.hpp"
#include "paravul/slora.hpp"

namespace paravul {

struct DetectorSpec {
    DetectorKind kind = DetectorKind::Mock;
    std::string name;  // defaults to the kind name
    // external
    std::string endpoint;
    std::chrono::milliseconds timeout = std::chrono::seconds(30);
    int retries = 1;
    std::string auth_header;
    // mock
    std::vector<double> probabilities;
    std::chrono::milliseconds delay{0};
    bool fail = false;
};

struct Bm25Settings {
    Bm25Params params;
    int top_k = 7;
    int vote_threshold = 4;
    std::vector<std::string> keywords = default_security_keywords();
};

struct DenseSettings {
    SegmentationParams segmentation;
    std::size_t dimension = 256;
    std::string embedder = "hashing";  // or "remote"
    std::string endpoint;
    std::chrono::milliseconds timeout = std::chrono::seconds(30);
};

struct SloraSettings {
    TrainConfig train;
    std::size_t rank = 8;
    double alpha = 0.9;
    std::size_t feature_dim = 64;
    std::uint64_t feature_seed = 17;
};

struct MetaSettings {
    MetaConfig train;
    std::size_t folds = 5;  // cross-fitting folds for learned base detectors
};

struct ReportSettings {
    std::filesystem::path knowledge;
    std::filesystem::path prompt_template;
    std::string endpoint;
    std::chrono::milliseconds timeout = std::chrono::seconds(30);
};

/// Whole-pipeline configuration. Defaults follow the published parameter
/// table (eta 5e-5, B 8, T 5, r 8, BM25 K 7 / threshold 4 / k1 1.5 / b 0.9,
/// dense K 5); everything else is documented in the README.
struct PipelineConfig {
    std::filesystem::path taxonomy;  // empty: built-in five-label taxonomy
    std::filesystem::path dataset;   // line-delimited JSON with "split" fields
    std::filesystem::path train;     // alternatives to `dataset`
    std::filesystem::path test;
    std::filesystem::path work_dir = "work";
    std::uint64_t seed = 7;
    std::vector<DetectorSpec> detectors;
    Bm25Settings bm25;
    DenseSettings dense;
    SloraSettings slora;
    MetaSettings meta;
    ReportSettings report;

    PipelineConfig();

    /// Relative paths are resolved against `base_dir`. Unknown keys and bad
    /// values are collected and reported together as one ConfigError.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

}  // namespace paravul
