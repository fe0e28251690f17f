#include "paravul/detectors.hpp"

#include <cmath>
#include <future>
#include <thread>

#include "paravul/error.hpp"
#include "paravul/http.hpp"

namespace paravul {

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::Slora: return "slora";
        case DetectorKind::Bm25: return "bm25";
        case DetectorKind::Dense: return "dense";
        case DetectorKind::External: return "external";
        case DetectorKind::Mock: return "mock";
    }
    return "unknown";
}

DetectorKind detector_kind_from_string(std::string_view name) {
    for (auto k : {DetectorKind::Slora, DetectorKind::Bm25, DetectorKind::Dense, DetectorKind::External,
                   DetectorKind::Mock}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw Error(ErrorKind::ConfigError, "unknown detector kind '" + std::string(name) + "'");
}

std::vector<double> to_probabilities(const LabelVector& votes) {
    std::vector<double> p(votes.size());
    for (std::size_t j = 0; j < votes.size(); ++j) {
        p[j] = votes.test(j) ? 1.0 : 0.0;
    }
    return p;
}

DetectionResult detect(const Detector& detector, const Contract& contract) {
    DetectionResult result;
    result.detector_name = detector.name();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        auto p = detector.run(contract);
        if (p.size() != detector.label_count()) {
            throw Error(ErrorKind::SchemaError, "detector returned " + std::to_string(p.size()) +
                                                    " probabilities, expected " +
                                                    std::to_string(detector.label_count()));
        }
        for (double v : p) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw Error(ErrorKind::SchemaError, "detector probability outside [0, 1]");
            }
        }
        result.probabilities = std::move(p);
    } catch (const std::exception& e) {
        result.status = DetectionStatus::Failed;
        result.probabilities.clear();
        result.error = e.what();
    }
    result.elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<DetectionResult> parallel_detect(std::span<const std::shared_ptr<const Detector>> detectors,
                                             const Contract& contract) {
    if (detectors.empty()) {
        throw Error(ErrorKind::InvalidParameter, "parallel_detect needs at least one detector");
    }
    std::vector<std::future<DetectionResult>> pending;
    pending.reserve(detectors.size());
    for (const auto& d : detectors) {
        pending.push_back(std::async(std::launch::async, [&d, &contract] { return detect(*d, contract); }));
    }
    std::vector<DetectionResult> results;
    results.reserve(pending.size());
    bool any_ok = false;
    for (auto& f : pending) {
        results.push_back(f.get());
        any_ok = any_ok || results.back().ok();
    }
    if (!any_ok) {
        std::string why;
        for (const auto& r : results) {
            why += "\n  " + r.detector_name + ": " + r.error;
        }
        throw Error(ErrorKind::AllDetectorsFailed, "every detector failed on '" + contract.id + "'" + why);
    }
    return results;
}

Bm25Detector::Bm25Detector(std::shared_ptr<const Bm25Index> index, SecurityTokenizer tokenizer, int top_k,
                           int vote_threshold, std::string name)
    : Detector(std::move(name), index->taxonomy().size()),
      index_(std::move(index)),
      tokenizer_(std::move(tokenizer)),
      top_k_(top_k),
      vote_threshold_(vote_threshold) {}

std::vector<double> Bm25Detector::run(const Contract& contract) const {
    const auto hits = bm25_retrieve(contract, *index_, tokenizer_, top_k_);
    return to_probabilities(bm25_vote(hits, label_count(), vote_threshold_));
}

DenseDetector::DenseDetector(std::shared_ptr<const VectorStore> store, std::shared_ptr<const Embedder> embedder,
                             SegmentationParams params, std::size_t label_count, std::string name)
    : Detector(std::move(name), label_count),
      store_(std::move(store)),
      embedder_(std::move(embedder)),
      params_(params) {}

std::vector<double> DenseDetector::run(const Contract& contract) const {
    const auto hits = dense_retrieve(contract, *store_, *embedder_, params_);
    return to_probabilities(dense_vote(hits, label_count()));
}

SloraDetector::SloraDetector(std::shared_ptr<const SloraCheckpoint> checkpoint, SecurityTokenizer tokenizer,
                             std::string name)
    : Detector(std::move(name), checkpoint->taxonomy.size()),
      checkpoint_(checkpoint),
      features_(checkpoint->model.dim(), checkpoint->feature_seed, std::move(tokenizer)) {}

std::vector<double> SloraDetector::run(const Contract& contract) const {
    return checkpoint_->model.predict(features_.extract(contract.source));
}

ExternalDetector::ExternalDetector(std::string endpoint, Taxonomy taxonomy, std::chrono::milliseconds timeout,
                                   int retries, std::string auth_header, std::string name)
    : Detector(std::move(name), taxonomy.size()),
      endpoint_(std::move(endpoint)),
      taxonomy_(std::move(taxonomy)),
      timeout_(timeout),
      retries_(retries),
      auth_header_(std::move(auth_header)) {}

std::vector<double> ExternalDetector::run(const Contract& contract) const {
    const nlohmann::json request = {{"source", contract.source}, {"taxonomy", taxonomy_.names()}};
    for (int attempt = 0;; ++attempt) {
        try {
            const auto reply = post_json(endpoint_, request, timeout_, auth_header_);
            if (!reply.is_object() || !reply.contains("probabilities") || !reply["probabilities"].is_array()) {
                throw Error(ErrorKind::SchemaError, "reply lacks a 'probabilities' array");
            }
            std::vector<double> p;
            for (const auto& v : reply["probabilities"]) {
                if (!v.is_number()) {
                    throw Error(ErrorKind::SchemaError, "non-numeric probability in reply");
                }
                p.push_back(v.get<double>());
            }
            return p;
        } catch (const Error& e) {
            // Only transport errors are worth retrying; a malformed reply will not improve.
            if (e.kind() != ErrorKind::IoError || attempt >= retries_) {
                throw;
            }
        }
    }
}

MockDetector::MockDetector(std::string name, std::vector<double> probabilities, std::chrono::milliseconds delay,
                           bool fail)
    : Detector(std::move(name), probabilities.size()),
      probabilities_(std::move(probabilities)),
      delay_(delay),
      fail_(fail) {}

std::vector<double> MockDetector::run(const Contract&) const {
    if (delay_.count() > 0) {
        std::this_thread::sleep_for(delay_);
    }
    if (fail_) {
        throw Error(ErrorKind::IoError, "mock detector configured to fail");
    }
    return probabilities_;
}

}  // namespace paravul
