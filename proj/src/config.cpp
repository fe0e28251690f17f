#include "paravul/config.hpp"

#include <fstream>
#include <set>

#include "paravul/error.hpp"

namespace paravul {

using nlohmann::json;

namespace {

/// Reads one JSON object, remembering which keys were consumed and
/// collecting every problem instead of stopping at the first.
class Section {
public:
    Section(const json& j, std::string prefix, std::vector<std::string>& problems)
        : j_(j), prefix_(std::move(prefix)), problems_(problems) {
        if (!j_.is_object()) {
            problems_.push_back(prefix_.empty() ? "<root>: expected an object" : prefix_ + ": expected an object");
        }
    }

    ~Section() {
        if (!j_.is_object()) {
            return;
        }
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                problems_.push_back(path(key) + ": unknown key");
            }
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.is_object() && j_.contains(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) {
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            problems_.push_back(path(key) + ": wrong type");
        }
    }

    void read_path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
        std::string s;
        if (!has(key)) {
            return;
        }
        read(key, s);
        out = s.empty() ? std::filesystem::path{} : std::filesystem::path(s);
        if (!out.empty() && out.is_relative() && !base.empty()) {
            out = (base / out).lexically_normal();
        }
    }

    void read_ms(const std::string& key, std::chrono::milliseconds& out) {
        std::int64_t ms = out.count();
        read(key, ms);
        out = std::chrono::milliseconds(ms);
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void problem(const std::string& key, const std::string& what) { problems_.push_back(path(key) + ": " + what); }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    const json& j_;
    std::string prefix_;
    std::vector<std::string>& problems_;
    std::set<std::string> seen_;
};

std::vector<DetectorSpec> default_detectors() {
    // Ψ = 3: dense retrieval, BM25 and SLoRA, in that order.
    std::vector<DetectorSpec> specs(3);
    specs[0].kind = DetectorKind::Dense;
    specs[0].name = "dense";
    specs[1].kind = DetectorKind::Bm25;
    specs[1].name = "bm25";
    specs[2].kind = DetectorKind::Slora;
    specs[2].name = "slora";
    return specs;
}

}  // namespace

PipelineConfig::PipelineConfig() : detectors(default_detectors()) {}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base) {
    PipelineConfig c;
    std::vector<std::string> problems;
    {
        Section root(j, "", problems);
        root.read_path("taxonomy", c.taxonomy, base);
        root.read_path("dataset", c.dataset, base);
        root.read_path("train", c.train, base);
        root.read_path("test", c.test, base);
        if (!root.has("work_dir") && !base.empty()) {
            c.work_dir = (base / c.work_dir).lexically_normal();
        }
        root.read_path("work_dir", c.work_dir, base);
        root.read("seed", c.seed);

        if (root.has("detectors")) {
            const auto& arr = root.child("detectors");
            if (!arr.is_array() || arr.empty()) {
                root.problem("detectors", "expected a non-empty array");
            } else {
                c.detectors.clear();
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    Section d(arr[i], "detectors[" + std::to_string(i) + "]", problems);
                    DetectorSpec spec;
                    std::string kind;
                    d.read("kind", kind);
                    try {
                        spec.kind = detector_kind_from_string(kind);
                    } catch (const Error&) {
                        d.problem("kind", "must be one of slora, bm25, dense, external, mock");
                    }
                    spec.name = std::string(to_string(spec.kind));
                    d.read("name", spec.name);
                    d.read("endpoint", spec.endpoint);
                    d.read_ms("timeout_ms", spec.timeout);
                    d.read("retries", spec.retries);
                    d.read("auth_header", spec.auth_header);
                    d.read("probabilities", spec.probabilities);
                    d.read_ms("delay_ms", spec.delay);
                    d.read("fail", spec.fail);
                    if (spec.kind == DetectorKind::External && spec.endpoint.empty()) {
                        d.problem("endpoint", "required for external detectors");
                    }
                    c.detectors.push_back(std::move(spec));
                }
                std::set<std::string> names;
                for (const auto& s : c.detectors) {
                    if (!names.insert(s.name).second) {
                        root.problem("detectors", "duplicate detector name '" + s.name + "'");
                    }
                }
            }
        }
        if (root.has("bm25")) {
            Section s(root.child("bm25"), "bm25", problems);
            s.read("k1", c.bm25.params.k1);
            s.read("b", c.bm25.params.b);
            s.read("top_k", c.bm25.top_k);
            s.read("vote_threshold", c.bm25.vote_threshold);
            s.read("keywords", c.bm25.keywords);
            if (c.bm25.top_k <= 0) {
                s.problem("top_k", "must be positive");
            }
            if (!(c.bm25.params.k1 >= 0.0) || !(c.bm25.params.b >= 0.0 && c.bm25.params.b <= 1.0)) {
                s.problem("k1/b", "need k1 >= 0 and 0 <= b <= 1");
            }
        }
        if (root.has("segmentation")) {
            Section s(root.child("segmentation"), "segmentation", problems);
            s.read("window", c.dense.segmentation.window);
            s.read("overlap", c.dense.segmentation.overlap);
            s.read("min_len", c.dense.segmentation.min_len);
        }
        if (root.has("dense")) {
            Section s(root.child("dense"), "dense", problems);
            s.read("chi", c.dense.segmentation.chi);
            s.read("dimension", c.dense.dimension);
            s.read("embedder", c.dense.embedder);
            s.read("endpoint", c.dense.endpoint);
            s.read_ms("timeout_ms", c.dense.timeout);
            if (c.dense.embedder != "hashing" && c.dense.embedder != "remote") {
                s.problem("embedder", "must be \"hashing\" or \"remote\"");
            }
            if (c.dense.embedder == "remote" && c.dense.endpoint.empty()) {
                s.problem("endpoint", "required for the remote embedder");
            }
        }
        try {
            c.dense.segmentation.validate();
        } catch (const Error&) {
            root.problem("segmentation", "need 0 <= overlap < window, min_len > 0, chi >= 1");
        }
        if (root.has("slora")) {
            Section s(root.child("slora"), "slora", problems);
            s.read("learning_rate", c.slora.train.learning_rate);
            s.read("batch_size", c.slora.train.batch_size);
            s.read("epochs", c.slora.train.epochs);
            s.read("patience", c.slora.train.patience);
            s.read("rank", c.slora.rank);
            s.read("alpha", c.slora.alpha);
            s.read("feature_dim", c.slora.feature_dim);
            s.read("feature_seed", c.slora.feature_seed);
            if (!(c.slora.alpha >= 0.0 && c.slora.alpha <= 1.0)) {
                s.problem("alpha", "must lie in [0, 1]");
            }
            if (c.slora.rank < 1 || c.slora.rank > c.slora.feature_dim) {
                s.problem("rank", "must satisfy 1 <= rank <= feature_dim");
            }
            try {
                c.slora.train.validate();
            } catch (const Error&) {
                s.problem("learning_rate/batch_size/epochs", "need learning_rate >= 0, batch_size >= 1, epochs >= 1");
            }
        }
        if (root.has("meta")) {
            Section s(root.child("meta"), "meta", problems);
            s.read("hidden1", c.meta.train.hidden1);
            s.read("hidden2", c.meta.train.hidden2);
            s.read("learning_rate", c.meta.train.learning_rate);
            s.read("batch_size", c.meta.train.batch_size);
            s.read("epochs", c.meta.train.epochs);
            s.read("threshold", c.meta.train.threshold);
            s.read("lambda", c.meta.train.lambda);
            s.read("folds", c.meta.folds);
            try {
                c.meta.train.validate();
            } catch (const Error&) {
                s.problem("meta", "invalid meta-learner settings");
            }
            if (c.meta.folds < 2) {
                s.problem("folds", "must be at least 2");
            }
        }
        if (root.has("report")) {
            Section s(root.child("report"), "report", problems);
            s.read_path("knowledge", c.report.knowledge, base);
            s.read_path("prompt_template", c.report.prompt_template, base);
            s.read("endpoint", c.report.endpoint);
            s.read_ms("timeout_ms", c.report.timeout);
        }
    }
    if (c.dataset.empty() && (c.train.empty() || c.test.empty())) {
        problems.push_back("dataset: set either 'dataset' or both 'train' and 'test'");
    }
    if (!problems.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw Error(ErrorKind::ConfigError, msg);
    }
    c.meta.train.seed = c.seed;
    c.slora.train.seed = c.seed;
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::ConfigError, "cannot open config file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
    json dets = json::array();
    for (const auto& d : detectors) {
        json e = {{"kind", std::string(to_string(d.kind))}, {"name", d.name}};
        if (d.kind == DetectorKind::External) {
            e["endpoint"] = d.endpoint;
            e["timeout_ms"] = d.timeout.count();
            e["retries"] = d.retries;
        }
        if (d.kind == DetectorKind::Mock) {
            e["probabilities"] = d.probabilities;
            e["delay_ms"] = d.delay.count();
            e["fail"] = d.fail;
        }
        dets.push_back(std::move(e));
    }
    return {
        {"taxonomy", taxonomy.string()},
        {"dataset", dataset.string()},
        {"train", train.string()},
        {"test", test.string()},
        {"work_dir", work_dir.string()},
        {"seed", seed},
        {"detectors", dets},
        {"bm25", {{"k1", bm25.params.k1}, {"b", bm25.params.b}, {"top_k", bm25.top_k},
                  {"vote_threshold", bm25.vote_threshold}, {"keywords", bm25.keywords}}},
        {"segmentation", {{"window", dense.segmentation.window}, {"overlap", dense.segmentation.overlap},
                          {"min_len", dense.segmentation.min_len}}},
        {"dense", {{"chi", dense.segmentation.chi}, {"dimension", dense.dimension}, {"embedder", dense.embedder},
                   {"endpoint", dense.endpoint}, {"timeout_ms", dense.timeout.count()}}},
        {"slora", {{"learning_rate", slora.train.learning_rate}, {"batch_size", slora.train.batch_size},
                   {"epochs", slora.train.epochs}, {"patience", slora.train.patience}, {"rank", slora.rank},
                   {"alpha", slora.alpha}, {"feature_dim", slora.feature_dim}, {"feature_seed", slora.feature_seed}}},
        {"meta", {{"hidden1", meta.train.hidden1}, {"hidden2", meta.train.hidden2},
                  {"learning_rate", meta.train.learning_rate}, {"batch_size", meta.train.batch_size},
                  {"epochs", meta.train.epochs}, {"threshold", meta.train.threshold}, {"lambda", meta.train.lambda},
                  {"folds", meta.folds}}},
        {"report", {{"knowledge", report.knowledge.string()}, {"prompt_template", report.prompt_template.string()},
                    {"endpoint", report.endpoint}, {"timeout_ms", report.timeout.count()}}},
    };
}

}  // namespace paravul
