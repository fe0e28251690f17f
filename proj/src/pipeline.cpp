#include "paravul/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "paravul/bm25.hpp"
#include "paravul/dense.hpp"
#include "paravul/error.hpp"
#include "paravul/features.hpp"

namespace paravul {

using nlohmann::json;

namespace {

std::shared_ptr<const Embedder> make_embedder(const DenseSettings& s) {
    if (s.embedder == "remote") {
        return std::make_shared<RemoteEmbedder>(s.endpoint, s.dimension, s.timeout);
    }
    return std::make_shared<HashingEmbedder>(s.dimension);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    return out;
}

LabelVector threshold(std::span<const double> p, double cut) {
    LabelVector v(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        v.set(j, p[j] >= cut);
    }
    return v;
}

std::string safe_file_name(const std::string& id) {
    std::string out;
    for (char c : id) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

}  // namespace

json to_json(const DetectionRecord& record) {
    json dets = json::array();
    for (const auto& r : record.results) {
        json e = {{"name", r.detector_name}, {"status", r.ok() ? "ok" : "failed"}};
        if (r.ok()) {
            e["probabilities"] = r.probabilities;
        } else {
            e["error"] = r.error;
        }
        dets.push_back(std::move(e));
    }
    json j = {{"id", record.id}, {"detectors", dets}};
    if (record.verified) {
        j["verified"] = {{"labels", record.verified->labels.bits()},
                         {"probabilities", record.verified->probabilities}};
    } else {
        j["verified"] = nullptr;
    }
    return j;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)), paths_{config_.work_dir} {
    taxonomy_ = config_.taxonomy.empty() ? Taxonomy::synthetic_default() : Taxonomy::load(config_.taxonomy);
}

void Pipeline::require(const std::filesystem::path& artifact, const std::string& stage) const {
    if (!std::filesystem::exists(artifact)) {
        throw Error(ErrorKind::StageError,
                    stage + " needs " + artifact.string() + "; run the stage that produces it first");
    }
}

Dataset Pipeline::load_split(Split split) const {
    if (!config_.dataset.empty()) {
        require(config_.dataset, "loading data");
        return paravul::ingest(config_.dataset, taxonomy_).subset(split);
    }
    const auto& path = split == Split::Train ? config_.train : config_.test;
    require(path, "loading data");
    Dataset ds = paravul::ingest(path, taxonomy_);
    for (auto& c : ds.contracts) {
        c.split = split;
    }
    return ds;
}

Dataset Pipeline::train_set() const {
    require(paths_.train_set(), "this stage");
    return paravul::ingest(paths_.train_set(), taxonomy_).subset(Split::Train);
}

Dataset Pipeline::test_set() const {
    require(paths_.test_set(), "this stage");
    return paravul::ingest(paths_.test_set(), taxonomy_).subset(Split::Test);
}

std::pair<std::size_t, std::size_t> Pipeline::ingest() const {
    const Dataset train = load_split(Split::Train);
    const Dataset test = load_split(Split::Test);
    std::set<std::string> ids;
    for (const auto& c : train.contracts) {
        ids.insert(c.id);
    }
    for (const auto& c : test.contracts) {
        if (ids.count(c.id)) {
            throw Error(ErrorKind::SchemaError, "contract '" + c.id + "' appears in both train and test splits");
        }
    }
    std::filesystem::create_directories(paths_.root);
    export_dataset(train, paths_.train_set());
    export_dataset(test, paths_.test_set());
    return {train.size(), test.size()};
}

void Pipeline::build_index() const {
    const Dataset train = train_set();
    std::filesystem::create_directories(paths_.root);
    Bm25Index::build(train, SecurityTokenizer(config_.bm25.keywords), config_.bm25.params).save(paths_.bm25_index());
    build_store(train, *make_embedder(config_.dense), config_.dense.segmentation).save(paths_.vector_store());
}

SloraCheckpoint Pipeline::fit_slora(const Dataset& train, TrainResult* result) const {
    if (train.empty()) {
        throw Error(ErrorKind::EmptyDataset, "no training contracts for the SLoRA detector");
    }
    FeatureExtractor features(config_.slora.feature_dim, config_.slora.feature_seed,
                              SecurityTokenizer(config_.bm25.keywords));
    std::vector<Sample> samples;
    samples.reserve(train.size());
    for (const auto& c : train.contracts) {
        if (!c.labels) {
            throw Error(ErrorKind::SchemaError, "training contract '" + c.id + "' has no labels");
        }
        samples.push_back({features.extract(c.source), *c.labels});
    }
    auto model = SloraClassifier::create(config_.slora.feature_dim, taxonomy_.size(), config_.slora.rank,
                                         config_.slora.alpha, config_.seed);
    auto trained = paravul::train(model, samples, config_.slora.train);
    if (result) {
        *result = std::move(trained);
    }
    return {std::move(model), taxonomy_, config_.slora.feature_seed};
}

TrainResult Pipeline::train_slora() const {
    TrainResult result;
    auto checkpoint = fit_slora(train_set(), &result);
    std::filesystem::create_directories(paths_.root);
    checkpoint.save(paths_.slora_checkpoint());
    write_loss_trace_csv(result, paths_.slora_loss());
    return result;
}

std::vector<std::shared_ptr<const Detector>> Pipeline::load_detectors() const {
    std::vector<std::shared_ptr<const Detector>> out;
    std::shared_ptr<const Bm25Index> index;
    std::shared_ptr<const VectorStore> store;
    std::shared_ptr<const SloraCheckpoint> slora;
    const auto embedder = make_embedder(config_.dense);
    for (const auto& spec : config_.detectors) {
        switch (spec.kind) {
            case DetectorKind::Bm25:
                if (!index) {
                    require(paths_.bm25_index(), "the bm25 detector");
                    index = std::make_shared<const Bm25Index>(Bm25Index::load(paths_.bm25_index()));
                }
                out.push_back(std::make_shared<Bm25Detector>(index, SecurityTokenizer(config_.bm25.keywords),
                                                             config_.bm25.top_k, config_.bm25.vote_threshold,
                                                             spec.name));
                break;
            case DetectorKind::Dense:
                if (!store) {
                    require(paths_.vector_store(), "the dense detector");
                    store = std::make_shared<const VectorStore>(VectorStore::load(paths_.vector_store()));
                }
                out.push_back(std::make_shared<DenseDetector>(store, embedder, config_.dense.segmentation,
                                                              taxonomy_.size(), spec.name));
                break;
            case DetectorKind::Slora:
                if (!slora) {
                    require(paths_.slora_checkpoint(), "the slora detector");
                    slora = std::make_shared<const SloraCheckpoint>(SloraCheckpoint::load(paths_.slora_checkpoint()));
                }
                out.push_back(std::make_shared<SloraDetector>(slora, SecurityTokenizer(config_.bm25.keywords),
                                                              spec.name));
                break;
            case DetectorKind::External:
                out.push_back(std::make_shared<ExternalDetector>(spec.endpoint, taxonomy_, spec.timeout, spec.retries,
                                                                 spec.auth_header, spec.name));
                break;
            case DetectorKind::Mock: {
                auto p = spec.probabilities.empty() ? std::vector<double>(taxonomy_.size(), 0.5) : spec.probabilities;
                out.push_back(std::make_shared<MockDetector>(spec.name, std::move(p), spec.delay, spec.fail));
                break;
            }
        }
    }
    return out;
}

std::vector<MetaRow> Pipeline::meta_rows() const {
    const Dataset train = train_set();
    if (train.empty()) {
        throw Error(ErrorKind::EmptyDataset, "no training contracts for the meta-learner");
    }
    const std::size_t n = train.size();
    const std::size_t labels = taxonomy_.size();
    const std::size_t folds = std::min(config_.meta.folds, n);

    std::vector<std::vector<DetectionResult>> outputs(n, std::vector<DetectionResult>(config_.detectors.size()));

    std::vector<std::shared_ptr<SloraCheckpoint>> fold_models;
    const bool uses_slora = std::any_of(config_.detectors.begin(), config_.detectors.end(),
                                        [](const auto& s) { return s.kind == DetectorKind::Slora; });
    if (uses_slora) {
        for (std::size_t f = 0; f < folds; ++f) {
            Dataset rest;
            rest.taxonomy = train.taxonomy;
            for (std::size_t i = 0; i < n; ++i) {
                if (i % folds != f) {
                    rest.contracts.push_back(train.contracts[i]);
                }
            }
            fold_models.push_back(std::make_shared<SloraCheckpoint>(fit_slora(rest)));
        }
    }

    std::vector<std::shared_ptr<const Detector>> shared;
    {
        PipelineConfig no_slora = config_;
        std::vector<std::size_t> kept;
        no_slora.detectors.clear();
        for (std::size_t d = 0; d < config_.detectors.size(); ++d) {
            if (config_.detectors[d].kind != DetectorKind::Slora) {
                no_slora.detectors.push_back(config_.detectors[d]);
                kept.push_back(d);
            }
        }
        Pipeline reduced(no_slora);
        auto loaded = reduced.load_detectors();
        shared.assign(config_.detectors.size(), nullptr);
        for (std::size_t k = 0; k < kept.size(); ++k) {
            shared[kept[k]] = loaded[k];
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& contract = train.contracts[i];
        for (std::size_t d = 0; d < config_.detectors.size(); ++d) {
            if (shared[d]) {
                outputs[i][d] = paravul::detect(*shared[d], contract);
            } else {
                SloraDetector fold_detector(fold_models[i % folds], SecurityTokenizer(config_.bm25.keywords),
                                            config_.detectors[d].name);
                outputs[i][d] = paravul::detect(fold_detector, contract);
            }
        }
    }

    std::vector<MetaRow> rows;
    rows.reserve(n * labels);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& truth = *train.contracts[i].labels;
        for (std::size_t j = 0; j < labels; ++j) {
            rows.push_back({gather_predictions(outputs[i], j), truth.test(j) ? 1.0 : 0.0});
        }
    }
    return rows;
}

MetaTrainResult Pipeline::train_meta() const {
    const auto rows = meta_rows();
    auto result = paravul::train_meta(rows, config_.meta.train);
    std::filesystem::create_directories(paths_.root);
    MetaCheckpoint{result.learner, config_.meta.train.threshold}.save(paths_.meta_checkpoint());
    write_meta_rows_csv(rows, paths_.meta_rows());
    auto out = open_out(paths_.meta_loss());
    out << "epoch,loss\n";
    out.precision(17);
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        out << e + 1 << ',' << result.loss_trace[e] << '\n';
    }
    return result;
}

std::vector<DetectionRecord> Pipeline::detect() const {
    require(paths_.meta_checkpoint(), "detect");
    const auto meta = MetaCheckpoint::load(paths_.meta_checkpoint());
    const auto detectors = load_detectors();
    if (meta.learner.inputs() != detectors.size()) {
        throw Error(ErrorKind::StageError, "meta-learner was trained for " + std::to_string(meta.learner.inputs()) +
                                               " detectors but " + std::to_string(detectors.size()) +
                                               " are configured; rerun train-meta");
    }
    const Dataset test = test_set();
    std::vector<DetectionRecord> records;
    records.reserve(test.size());
    for (const auto& contract : test.contracts) {
        DetectionRecord rec;
        rec.id = contract.id;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rec.results = parallel_detect(detectors, contract);
            rec.verified = verify(meta.learner, rec.results, taxonomy_.size(), config_.meta.train.threshold);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::AllDetectorsFailed) {
                throw;
            }
            rec.results.clear();
            for (const auto& d : detectors) {
                rec.results.push_back(paravul::detect(*d, contract));
            }
        }
        rec.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        records.push_back(std::move(rec));
    }

    std::filesystem::create_directories(paths_.root);
    auto out = open_out(paths_.detections());
    auto timing = open_out(paths_.timings());
    for (const auto& rec : records) {
        out << to_json(rec).dump() << '\n';
        json t = {{"id", rec.id}, {"total", rec.total_seconds}};
        for (const auto& r : rec.results) {
            t["elapsed"][r.detector_name] = r.elapsed;
        }
        timing << t.dump() << '\n';
    }
    if (!records.empty() && std::none_of(records.begin(), records.end(), [](const auto& r) { return r.verified; })) {
        throw Error(ErrorKind::AllDetectorsFailed, "every detector failed on every test contract");
    }
    return records;
}

EvalSummary Pipeline::evaluate() const {
    require(paths_.detections(), "evaluate");
    const Dataset test = test_set();
    std::map<std::string, const Contract*> by_id;
    for (const auto& c : test.contracts) {
        by_id[c.id] = &c;
    }

    std::vector<std::string> names;
    for (const auto& s : config_.detectors) {
        names.push_back(s.name);
    }
    const std::size_t labels = taxonomy_.size();
    std::vector<std::vector<LabelVector>> preds(names.size());
    std::vector<std::size_t> failures(names.size(), 0);
    std::vector<LabelVector> verified;
    std::vector<LabelVector> truths;
    std::size_t verified_failures = 0;

    for (const auto& line : read_lines(paths_.detections())) {
        const json j = json::parse(line);
        const auto id = j.at("id").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end() || !it->second->labels) {
            throw Error(ErrorKind::StageError, "detection for '" + id + "' has no labelled test contract");
        }
        truths.push_back(*it->second->labels);
        const auto& dets = j.at("detectors");
        if (dets.size() != names.size()) {
            throw Error(ErrorKind::StageError, "detections were produced with a different detector configuration");
        }
        for (std::size_t d = 0; d < names.size(); ++d) {
            if (dets[d].at("status") == "ok") {
                preds[d].push_back(threshold(dets[d].at("probabilities").get<std::vector<double>>(), 0.5));
            } else {
                preds[d].push_back(LabelVector(labels));
                ++failures[d];
            }
        }
        if (j.at("verified").is_null()) {
            verified.push_back(LabelVector(labels));
            ++verified_failures;
        } else {
            verified.push_back(LabelVector(j.at("verified").at("labels").get<std::vector<std::uint8_t>>()));
        }
    }

    std::vector<double> seconds(names.size(), 0.0);
    double total_seconds = 0.0;
    std::size_t timed = 0;
    if (std::filesystem::exists(paths_.timings())) {
        for (const auto& line : read_lines(paths_.timings())) {
            const json t = json::parse(line);
            for (std::size_t d = 0; d < names.size(); ++d) {
                if (t.contains("elapsed") && t["elapsed"].contains(names[d])) {
                    seconds[d] += t["elapsed"][names[d]].get<double>();
                }
            }
            total_seconds += t.at("total").get<double>();
            ++timed;
        }
    }

    EvalSummary summary;
    for (std::size_t d = 0; d < names.size(); ++d) {
        summary.detectors.push_back({names[d], compute_metrics(preds[d], truths),
                                     timed ? seconds[d] / static_cast<double>(timed) : 0.0, failures[d]});
    }
    summary.verified = {"verified", compute_metrics(verified, truths),
                        timed ? total_seconds / static_cast<double>(timed) : 0.0, verified_failures};

    std::filesystem::create_directories(paths_.root);
    open_out(paths_.summary()) << summary.metrics_json().dump(2) << '\n';
    open_out(paths_.summary_timing()) << summary.timing_json().dump(2) << '\n';
    return summary;
}

std::vector<std::filesystem::path> Pipeline::report() const {
    require(paths_.detections(), "report");
    const Dataset test = test_set();
    std::map<std::string, const Contract*> by_id;
    for (const auto& c : test.contracts) {
        by_id[c.id] = &c;
    }
    const KnowledgeBase knowledge =
        config_.report.knowledge.empty() ? KnowledgeBase{} : KnowledgeBase::load(config_.report.knowledge);
    const PromptTemplate prompt = config_.report.prompt_template.empty()
                                      ? PromptTemplate::default_template()
                                      : PromptTemplate::load(config_.report.prompt_template);

    std::filesystem::create_directories(paths_.reports());
    std::vector<std::filesystem::path> written;
    for (const auto& line : read_lines(paths_.detections())) {
        const json j = json::parse(line);
        const auto id = j.at("id").get<std::string>();
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw Error(ErrorKind::StageError, "detection for '" + id + "' has no test contract");
        }
        if (j.at("verified").is_null()) {
            continue;
        }
        const LabelVector labels(j["verified"].at("labels").get<std::vector<std::uint8_t>>());
        const auto probs = j["verified"].at("probabilities").get<std::vector<double>>();
        const Report r = config_.report.endpoint.empty()
                             ? render_report(*it->second, labels, probs, taxonomy_, knowledge)
                             : llm_report(*it->second, labels, probs, taxonomy_, knowledge,
                                          {config_.report.endpoint, config_.report.timeout, {}}, prompt);
        const auto path = paths_.reports() / (safe_file_name(id) + ".md");
        open_out(path) << r.to_markdown();
        written.push_back(path);
    }
    return written;
}

}  // namespace paravul
