// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "paravul/bm25.hpp"
#include "paravul/dense.hpp"
#include "paravul/meta.hpp"
#include "paravul/pipeline.hpp"
#include "paravul/report.hpp"
#include "paravul/slora.hpp"
#include "paravul/synth.hpp"
#include "paravul/tokenizer.hpp"
#include "support.hpp"

using namespace paravul;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string random_words(Rng& rng, std::size_t length) {
    static const char* words[] = {"function", "withdraw", "balance", "msg", "sender", "call", "value", "require",
                                  "uint", "mapping", "owner", "transfer", "emit", "return", "public", "if"};
    std::string out;
    while (out.size() < length) {
        out += words[rng.below(std::size(words))];
        out.push_back(rng.bernoulli(0.2) ? '\n' : ' ');
    }
    out.resize(length);
    return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
    Rng rng(101);
    double worst = 0.0;
    const auto t0 = Clock::now();
    for (int t = 0; t < 10; ++t) {
        const std::size_t d = 2 + rng.below(15);
        const std::size_t r = 1 + rng.below(std::min<std::size_t>(4, d));
        const std::size_t labels = 1 + rng.below(4);
        const double alphas[] = {0.0, 0.25, 0.5, 0.9};
        const auto model = oracle::random_classifier(rng, d, r, labels, alphas[rng.below(4)]);
        const auto x = oracle::random_matrix(rng, 1 + rng.below(8), d);
        const auto y = oracle::random_targets(rng, x.rows(), labels);
        worst = std::max(worst, oracle::slora_gradient_error(model, x, y, 1e-5));
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-4 && elapsed < 60.0, fmt("max relative error %.2e over 10 instances, %.2f s", worst, elapsed)};
}

Outcome frozen_base() {
    Rng rng(102);
    const auto data = oracle::separable_task(rng, 16, 3, 80);
    auto model = SloraClassifier::create(16, 3, 4, 0.9, 5);
    const auto hash = model.adapter().base_hash();
    const auto bytes = model.adapter().base().data();
    TrainConfig config;
    config.learning_rate = 0.5;
    config.epochs = 5;
    config.seed = 3;
    const auto result = train(model, data, config);
    const bool same = model.adapter().base_hash() == hash && model.adapter().base().data() == bytes;
    const auto& v = model.adapter().v().data();
    const bool trained = result.loss_trace.size() == 5 && std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
    return {same && trained, fmt("hash %016llx before and %016llx after 5 epochs",
                                 static_cast<unsigned long long>(hash),
                                 static_cast<unsigned long long>(model.adapter().base_hash()))};
}

Outcome sparsity_exactness() {
    struct Ratio {
        std::uint64_t p, q;
    };
    const Ratio alphas[] = {{0, 1}, {1, 4}, {1, 2}, {9, 10}, {99, 100}, {1, 1}};
    Rng rng(103);
    int bad = 0;
    std::string worst;
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 1 + rng.below(32);
        const auto a = alphas[t < 6 ? t : static_cast<int>(rng.below(6))];
        const double alpha = static_cast<double>(a.p) / static_cast<double>(a.q);
        const auto mask = sparsify(oracle::random_matrix(rng, d, d), alpha);
        std::size_t ones = 0;
        for (double v : mask.mask.data()) {
            ones += v == 1.0;
        }
        const auto expected = oracle::retained(d, a.p, a.q);
        if (ones != expected || mask.active.size() != expected) {
            ++bad;
            worst = fmt("d=%zu alpha=%g: %zu ones, expected %zu", d, alpha, ones, expected);
        }
    }
    return {bad == 0, bad == 0 ? "20 masks, popcount equals floor((1-alpha) d^2)" : worst};
}

Outcome complexity_accounting() {
    Rng rng(104);
    const double alphas[] = {0.0, 0.25, 0.5, 0.9, 0.99, 1.0};
    for (int t = 0; t < 20; ++t) {
        const std::size_t d = 1 + rng.below(40);
        const std::size_t r = 1 + rng.below(d);
        const std::size_t n = 1 + rng.below(6);
        const AdapterLayer layer(oracle::random_matrix(rng, d, d), r, alphas[rng.below(6)], rng.next());
        std::uint64_t mults = 0;
        layer.forward(oracle::random_matrix(rng, n, d), &mults);
        std::size_t k = 0;
        for (double v : layer.mask().mask.data()) {
            k += v == 1.0;
        }
        if (mults != n * (2 * d * r + k)) {
            return {false, fmt("d=%zu r=%zu n=%zu: counted %llu, expected %zu", d, r, n,
                               static_cast<unsigned long long>(mults), n * (2 * d * r + k))};
        }
    }
    const std::size_t n = 10, d = 64, r = 8;
    const AdapterLayer layer(oracle::random_matrix(rng, d, d), r, 0.99, 1);
    std::uint64_t mults = 0;
    layer.forward(oracle::random_matrix(rng, n, d), &mults);
    const double ratio = static_cast<double>(mults) / static_cast<double>(n * d * d);
    return {ratio < 0.30, fmt("exact on 20 random layers; d=64 r=8 alpha=0.99 uses %.1f%% of n d^2", 100.0 * ratio)};
}

Outcome learning_sanity() {
    const auto t0 = Clock::now();
    Rng rng(105);
    const auto data = oracle::separable_task(rng, 32, 2, 500);
    TrainConfig config;
    config.learning_rate = 0.5;
    config.epochs = 200;
    config.seed = 9;
    auto a = SloraClassifier::create(32, 2, 4, 0.9, 11);
    auto b = SloraClassifier::create(32, 2, 4, 0.9, 11);
    const auto ra = train(a, data, config);
    const auto rb = train(b, data, config);
    const bool deterministic = ra.loss_trace == rb.loss_trace && a.head_w() == b.head_w() &&
                               a.adapter().u() == b.adapter().u() && a.adapter().s() == b.adapter().s();
    std::vector<std::vector<int>> pred, truth;
    for (const auto& s : data) {
        const auto p = a.predict(s.features);
        pred.push_back({p[0] >= 0.5, p[1] >= 0.5});
        truth.push_back({s.labels.test(0), s.labels.test(1)});
    }
    const double f1 = oracle::micro_f1(pred, truth);
    const double elapsed = seconds_since(t0);
    return {f1 >= 0.95 && deterministic && elapsed < 120.0,
            fmt("micro-F1 %.4f after 200 epochs, %s, %.1f s for two runs", f1,
                deterministic ? "identical reruns" : "reruns differ", elapsed)};
}

Outcome bm25_oracle() {
    const auto t0 = Clock::now();
    Rng rng(106);
    std::vector<std::vector<std::string>> docs(100);
    std::vector<Bm25Index::Document> indexed;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto len = 1 + rng.below(40);
        for (std::size_t t = 0; t < len; ++t) {
            docs[i].push_back("t" + std::to_string(rng.below(50)));
        }
        indexed.push_back({fmt("d%03zu", i), LabelVector(1), docs[i]});
    }
    const auto idx = Bm25Index::from_documents(indexed, Taxonomy({"l"}), {});
    const SecurityTokenizer tok;
    double worst = 0.0;
    bool rankings = true;
    for (int q = 0; q < 20; ++q) {
        std::string src;
        for (std::size_t t = 0, n = 1 + rng.below(30); t < n; ++t) {
            src += "t" + std::to_string(rng.below(50)) + " ";
        }
        const Contract query{"query", src, std::nullopt, Split::Test};
        const auto tokens = tok.tokenize(src);
        const auto all = idx.score_all(tokens);
        std::vector<std::pair<double, std::string>> ranked;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            const double expected = oracle::bm25(docs, tokens, d);
            worst = std::max({worst, std::abs(all[d] - expected), std::abs(idx.score(tokens, d) - expected)});
            ranked.push_back({-expected, indexed[d].id});
        }
        std::sort(ranked.begin(), ranked.end());
        const auto hits = bm25_retrieve(query, idx, tok, 100);
        rankings = rankings && hits.size() == ranked.size();
        for (std::size_t i = 0; rankings && i < hits.size(); ++i) {
            rankings = hits[i].contract_id == ranked[i].second;
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-9 && rankings && elapsed < 10.0,
            fmt("max |score - oracle| %.1e over 20 queries x 100 docs, rankings %s, %.2f s", worst,
                rankings ? "identical" : "differ", elapsed)};
}

Outcome segmentation_counts() {
    const SegmentationParams p;
    const HashingEmbedder embedder;
    Rng rng(107);
    Dataset store_set;
    store_set.taxonomy = Taxonomy({"l"});
    for (int i = 0; i < 10; ++i) {
        store_set.contracts.push_back({"s" + std::to_string(i), random_words(rng, 4000), LabelVector(1), Split::Train});
    }
    const auto store = build_store(store_set, embedder, p);
    std::size_t checked = 0;
    for (std::size_t len = 1500; len <= 18000; len += 37) {
        const std::size_t step = p.window - p.overlap;
        const std::size_t expected = (len - p.overlap + step - 1) / step;
        const Contract query{"q", random_words(rng, len), std::nullopt, Split::Test};
        const auto frags = segment(query, p).size();
        const auto hits = dense_retrieve(query, store, embedder, p).size();
        if (frags != expected || hits != p.chi * expected) {
            return {false, fmt("L=%zu: %zu fragments and %zu hits, expected %zu and %zu", len, frags, hits, expected,
                               p.chi * expected)};
        }
        ++checked;
    }
    return {true, fmt("%zu lengths, fragments = ceil((L-300)/1200), N_ret = 5 x fragments", checked)};
}

Outcome dynamic_threshold_exact() {
    for (std::size_t n = 0; n <= 100; ++n) {
        const double expected = std::max(static_cast<double>(2 * n) / 5.0, 1.0);
        if (dynamic_threshold(n) != expected) {
            return {false, fmt("N=%zu gave %.17g", n, dynamic_threshold(n))};
        }
        // Vote semantics against integer arithmetic: v votes survive iff 5v >= 2N and v >= 1.
        for (std::size_t v = 0; v <= n; ++v) {
            std::vector<RetrievalHit> hits(n, {"x", 0.0, LabelVector(1), std::size_t{0}});
            for (std::size_t i = 0; i < v; ++i) {
                hits[i].labels.set(0);
            }
            const bool kept = dense_vote(hits, 1).test(0);
            if (kept != (5 * v >= 2 * n && v >= 1)) {
                return {false, fmt("N=%zu with %zu votes decided wrongly", n, v)};
            }
        }
    }
    return {true, "N in [0, 100], threshold and every vote count exact"};
}

/// 200-contract index with the pipeline's retrieval settings, used by the
/// self-exclusion and latency criteria.
struct RetrievalFixture {
    Dataset corpus;
    SecurityTokenizer tokenizer;
    HashingEmbedder embedder;
    SegmentationParams params;
    Bm25Index bm25;
    VectorStore store;

    RetrievalFixture()
        : corpus(make_corpus()),
          bm25(Bm25Index::build(corpus, tokenizer)),
          store(build_store(corpus, embedder, params)) {}

    static Dataset make_corpus() {
        SynthOptions o;
        o.count = 200;
        Dataset d = synthesize(o);
        for (auto& c : d.contracts) {
            c.split = Split::Train;
        }
        return d;
    }
};

const RetrievalFixture& fixture() {
    static const RetrievalFixture f;
    return f;
}

Outcome self_exclusion() {
    const auto& f = fixture();
    std::size_t bm25_hits = 0, dense_hits = 0;
    for (const auto& c : f.corpus.contracts) {
        for (const auto& h : bm25_retrieve(c, f.bm25, f.tokenizer, 7)) {
            if (h.contract_id == c.id) {
                return {false, "BM25 returned " + c.id + " for itself"};
            }
            ++bm25_hits;
        }
        for (const auto& h : dense_retrieve(c, f.store, f.embedder, f.params)) {
            if (h.contract_id == c.id) {
                return {false, "dense retrieval returned " + c.id + " for itself"};
            }
            ++dense_hits;
        }
    }
    return {bm25_hits == 7 * f.corpus.size() && dense_hits > 0,
            fmt("200 self-queries, %zu BM25 and %zu dense hits, none from the query", bm25_hits, dense_hits)};
}

Outcome latency_ordering() {
    const auto& f = fixture();
    double bm25_total = 0.0, dense_total = 0.0;
    std::size_t sink = 0;
    for (int round = 0; round < 3; ++round) {
        for (const auto& c : f.corpus.contracts) {
            auto t0 = Clock::now();
            const auto bh = bm25_retrieve(c, f.bm25, f.tokenizer, 7);
            sink += bm25_vote(bh, f.corpus.taxonomy.size(), 4).count();
            bm25_total += seconds_since(t0);
            t0 = Clock::now();
            const auto dh = dense_retrieve(c, f.store, f.embedder, f.params);
            sink += dense_vote(dh, f.corpus.taxonomy.size()).count();
            dense_total += seconds_since(t0);
        }
    }
    const double n = 3.0 * static_cast<double>(f.corpus.size());
    const double bm25_mean = bm25_total / n, dense_mean = dense_total / n;
    return {bm25_mean < dense_mean, fmt("BM25 %.1f us, dense %.1f us per query, ratio dense/BM25 %.2f (%zu votes)",
                                        1e6 * bm25_mean, 1e6 * dense_mean, dense_mean / bm25_mean, sink)};
}

Outcome adaptation_closed_form() {
    Rng rng(110);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const std::size_t n = 1 + rng.below(10);
        std::vector<double> a(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-5.0, 5.0);
            w[i] = rng.uniform(-5.0, 5.0);
        }
        const double lambda = std::pow(10.0, rng.uniform(-3.0, 3.0));
        TaskObjective task{[&](std::span<const double> v) {
                               double s = 0.0;
                               for (std::size_t i = 0; i < n; ++i) {
                                   s += 0.5 * (v[i] - a[i]) * (v[i] - a[i]);
                               }
                               return s;
                           },
                           [&](std::span<const double> v) {
                               std::vector<double> g(n);
                               for (std::size_t i = 0; i < n; ++i) {
                                   g[i] = v[i] - a[i];
                               }
                               return g;
                           }};
        const auto v = adapt_to_task(w, task, lambda);
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(v[i] - (a[i] + lambda * w[i]) / (1.0 + lambda)));
        }
        if (t == 0) {
            const auto stiff = adapt_to_task(w, task, 1e9);
            double dist = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dist += (stiff[i] - w[i]) * (stiff[i] - w[i]);
            }
            if (std::sqrt(dist) > 1e-6) {
                return {false, fmt("lambda=1e9 moved %.2e from w", std::sqrt(dist))};
            }
        }
    }
    return {worst <= 1e-6, fmt("max deviation from (a + lambda w)/(1 + lambda) %.1e; lambda=1e9 stays within 1e-6 of w",
                               worst)};
}

// ---------------------------------------------------------------------------
// End-to-end runs share one synthetic corpus and the shipped configuration.

struct EndToEnd {
    testing::TempDir dir{"acceptance"};
    std::filesystem::path corpus;
    double first_run_seconds = 0.0;

    PipelineConfig config(const std::string& work) const {
        auto c = PipelineConfig::load(std::filesystem::path(PARAVUL_DATA_DIR) / "config.json");
        c.dataset = corpus;
        c.train.clear();
        c.test.clear();
        c.work_dir = dir / work;
        return c;
    }

    EndToEnd() {
        corpus = dir / "corpus.jsonl";
        const Pipeline probe(config("probe"));
        SynthOptions o;
        o.count = 200;
        o.seed = probe.config().seed;
        export_dataset(synthesize(o, probe.taxonomy()), corpus);
    }

    static EvalSummary run(const Pipeline& p) {
        p.ingest();
        p.build_index();
        p.train_slora();
        p.train_meta();
        p.detect();
        return p.evaluate();
    }
};

EndToEnd& e2e() {
    static EndToEnd e;
    return e;
}

Outcome end_to_end() {
    auto& e = e2e();
    const auto t0 = Clock::now();
    const Pipeline p(e.config("run1"));
    const auto summary = EndToEnd::run(p);
    e.first_run_seconds = seconds_since(t0);
    double best = 0.0;
    std::string parts;
    for (const auto& d : summary.detectors) {
        best = std::max(best, d.metrics.f1);
        parts += fmt("%s %.4f, ", d.name.c_str(), d.metrics.f1);
    }
    const double verified = summary.verified.metrics.f1;
    return {verified >= best && e.first_run_seconds < 300.0,
            fmt("micro-F1 %sverified %.4f (margin %+.4f), %zu test contracts, %.1f s", parts.c_str(), verified,
                verified - best, summary.verified.metrics.samples, e.first_run_seconds)};
}

Outcome report_contract() {
    auto& e = e2e();
    const Pipeline p(e.config("run1"));
    const auto files = p.report();
    std::size_t checked = 0;
    std::istringstream lines(slurp(p.paths().detections()));
    for (std::string line; std::getline(lines, line);) {
        const auto rec = json::parse(line);
        if (rec["verified"].is_null()) {
            continue;
        }
        std::size_t detected = 0;
        for (int bit : rec["verified"]["labels"]) {
            detected += bit != 0;
        }
        if (detected == 0) {
            continue;
        }
        const auto md = slurp(p.paths().reports() / (rec["id"].get<std::string>() + ".md"));
        const auto count = [&](const std::string& needle) {
            std::size_t n = 0;
            for (auto pos = md.find(needle); pos != std::string::npos; pos = md.find(needle, pos + 1)) {
                ++n;
            }
            return n;
        };
        // Each finding must list the five headers in order before the next finding starts.
        std::size_t pos = 0;
        for (std::size_t f = 0; f < detected; ++f) {
            pos = md.find("\n## " + std::to_string(f + 1) + ". ", pos);
            if (pos == std::string::npos) {
                return {false, rec["id"].get<std::string>() + ": finding " + std::to_string(f + 1) + " missing"};
            }
            const auto next = md.find("\n## ", pos + 1);
            for (auto header : kReportElements) {
                pos = md.find("\n### " + std::string(header) + "\n", pos);
                if (pos == std::string::npos || pos > next) {
                    return {false, rec["id"].get<std::string>() + ": '" + std::string(header) + "' out of order"};
                }
            }
        }
        for (auto header : kReportElements) {
            if (count("### " + std::string(header) + "\n") != detected) {
                return {false, rec["id"].get<std::string>() + ": wrong number of '" + std::string(header) + "'"};
            }
        }
        ++checked;
    }
    return {checked > 0, fmt("%zu reports with findings checked, %zu written", checked, files.size())};
}

Outcome determinism() {
    auto& e = e2e();
    const Pipeline first(e.config("run1"));
    const Pipeline second(e.config("run2"));
    EndToEnd::run(second);
    const bool det = slurp(first.paths().detections()) == slurp(second.paths().detections());
    const bool sum = slurp(first.paths().summary()) == slurp(second.paths().summary());
    return {det && sum, fmt("detections.jsonl %s, summary.json %s", det ? "identical" : "differs",
                            sum ? "identical" : "differs")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"SLoRA gradient oracle", gradient_oracle},
        {"frozen quantized base", frozen_base},
        {"sparsity exactness", sparsity_exactness},
        {"complexity accounting", complexity_accounting},
        {"SLoRA learning sanity", learning_sanity},
        {"BM25 oracle equivalence", bm25_oracle},
        {"segmentation and retrieval counts", segmentation_counts},
        {"dynamic voting threshold", dynamic_threshold_exact},
        {"self-exclusion", self_exclusion},
        {"proximal adaptation", adaptation_closed_form},
        {"end-to-end benchmark", end_to_end},
        {"latency ordering", latency_ordering},
        {"report contract", report_contract},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu  %-34s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
