#include <doctest.h>

#include <atomic>
#include <chrono>

#include <nlohmann/json.hpp>

#include "paravul/bm25.hpp"
#include "paravul/dense.hpp"
#include "paravul/detectors.hpp"
#include "paravul/error.hpp"
#include "paravul/synth.hpp"
#include "support.hpp"

using namespace paravul;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

const Contract kContract{"c", "function f() public { msg.sender.call(\"\"); }", std::nullopt, Split::Test};

std::shared_ptr<const Detector> mock(std::string name, std::vector<double> p, std::chrono::milliseconds delay = 0ms,
                                     bool fail = false) {
    return std::make_shared<MockDetector>(std::move(name), std::move(p), delay, fail);
}

void reply_json(httplib::Response& res, const json& body) {
    res.set_content(body.dump(), "application/json");
}

}  // namespace

TEST_CASE("mock detector output") {
    const auto r = detect(*mock("m", {0.9, 0.1}), kContract);
    CHECK(r.ok());
    CHECK(r.detector_name == "m");
    CHECK(r.probabilities == std::vector<double>{0.9, 0.1});
    CHECK(r.elapsed >= 0.0);

    const auto failed = detect(*mock("m", {0.9, 0.1}, 0ms, true), kContract);
    CHECK(!failed.ok());
    CHECK(failed.probabilities.empty());
    CHECK(!failed.error.empty());
}

TEST_CASE("out-of-range outputs fail the detector") {
    CHECK(!detect(*mock("m", {1.5}), kContract).ok());
    CHECK(!detect(*mock("m", {-0.1}), kContract).ok());
    CHECK(!detect(*mock("m", {std::nan("")}), kContract).ok());
}

TEST_CASE("votes become probabilities") {
    CHECK(to_probabilities(LabelVector(std::vector<std::uint8_t>{1, 0, 1})) == std::vector<double>{1.0, 0.0, 1.0});
}

TEST_CASE("parallel results keep configuration order") {
    // Later detectors finish first.
    const std::vector<std::shared_ptr<const Detector>> ds = {mock("a", {0.1}, 60ms), mock("b", {0.2}, 30ms),
                                                             mock("c", {0.3}, 0ms)};
    const auto results = parallel_detect(ds, kContract);
    REQUIRE(results.size() == 3);
    CHECK(results[0].detector_name == "a");
    CHECK(results[1].detector_name == "b");
    CHECK(results[2].detector_name == "c");
    CHECK(results[0].probabilities == std::vector<double>{0.1});
    CHECK(results[2].probabilities == std::vector<double>{0.3});
}

TEST_CASE("parallel detection overlaps waits") {
    const std::vector<std::shared_ptr<const Detector>> ds = {mock("a", {0.5}, 100ms), mock("b", {0.5}, 100ms)};
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = parallel_detect(ds, kContract);
    const auto wall = std::chrono::steady_clock::now() - t0;
    CHECK(wall < 180ms);
    CHECK(results[0].elapsed >= 0.099);
    CHECK(results[1].elapsed >= 0.099);
    MESSAGE("two 100 ms detectors took " << std::chrono::duration<double, std::milli>(wall).count() << " ms");
}

TEST_CASE("one failing detector does not affect the others") {
    const std::vector<std::shared_ptr<const Detector>> ds = {mock("a", {0.4}), mock("b", {0.5}, 0ms, true),
                                                             mock("c", {0.6})};
    const auto results = parallel_detect(ds, kContract);
    CHECK(results[0].ok());
    CHECK(!results[1].ok());
    CHECK(results[2].ok());
    CHECK(results[2].probabilities == std::vector<double>{0.6});

    const std::vector<std::shared_ptr<const Detector>> dead = {mock("a", {0.4}, 0ms, true),
                                                               mock("b", {0.5}, 0ms, true)};
    try {
        parallel_detect(dead, kContract);
        FAIL("expected AllDetectorsFailed");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AllDetectorsFailed);
    }
    CHECK_THROWS_AS(parallel_detect({}, kContract), Error);
}

TEST_CASE("external detector protocol") {
    const Taxonomy taxonomy({"a", "b", "c"});
    testing::LocalServer srv;
    std::atomic<int> flaky_calls{0};
    std::string seen_auth;
    json seen_body;
    srv.server().Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        reply_json(res, {{"probabilities", {0.9, 0.2, 0.5}}});
    });
    srv.server().Post("/short", [](const httplib::Request&, httplib::Response& res) {
        reply_json(res, {{"probabilities", {0.9, 0.2}}});
    });
    srv.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    srv.server().Post("/wrongkey", [](const httplib::Request&, httplib::Response& res) {
        reply_json(res, {{"probs", {0.1, 0.2, 0.3}}});
    });
    srv.server().Post("/error", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    srv.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (flaky_calls++ == 0) {
            res.status = 503;
            return;
        }
        reply_json(res, {{"probabilities", {0.1, 0.1, 0.1}}});
    });
    srv.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(400ms);
        reply_json(res, {{"probabilities", {0.1, 0.1, 0.1}}});
    });
    srv.start();

    const ExternalDetector ok(srv.url("/ok"), taxonomy, 2s, 1, "Authorization: Bearer t0k", "llm");
    const auto r = detect(ok, kContract);
    CHECK(r.ok());
    CHECK(r.probabilities == std::vector<double>{0.9, 0.2, 0.5});
    CHECK(seen_body["source"] == kContract.source);
    CHECK(seen_body["taxonomy"] == json(taxonomy.names()));
    CHECK(seen_auth == "Bearer t0k");

    CHECK(!detect(ExternalDetector(srv.url("/short"), taxonomy, 2s), kContract).ok());
    CHECK(!detect(ExternalDetector(srv.url("/garbage"), taxonomy, 2s), kContract).ok());
    CHECK(!detect(ExternalDetector(srv.url("/wrongkey"), taxonomy, 2s), kContract).ok());
    CHECK(!detect(ExternalDetector(srv.url("/error"), taxonomy, 2s, 0), kContract).ok());

    const auto retried = detect(ExternalDetector(srv.url("/flaky"), taxonomy, 2s, 1), kContract);
    CHECK(retried.ok());
    CHECK(flaky_calls == 2);

    const auto timed_out = detect(ExternalDetector(srv.url("/slow"), taxonomy, 100ms, 0), kContract);
    CHECK(!timed_out.ok());

    // A timing-out external detector among three.
    const std::vector<std::shared_ptr<const Detector>> mixed = {
        mock("a", {0.1, 0.2, 0.3}), std::make_shared<ExternalDetector>(srv.url("/slow"), taxonomy, 100ms, 0),
        mock("c", {0.3, 0.2, 0.1})};
    const auto results = parallel_detect(mixed, kContract);
    CHECK(results[0].ok());
    CHECK(!results[1].ok());
    CHECK(results[2].ok());

    CHECK(!detect(ExternalDetector("http://127.0.0.1:1/none", taxonomy, 200ms, 0), kContract).ok());
    CHECK(!detect(ExternalDetector("not a url", taxonomy, 200ms, 0), kContract).ok());
    srv.stop();
}

TEST_CASE("built-in detectors emit well-formed results") {
    SynthOptions opts;
    opts.count = 60;
    const auto ds = synthesize(opts);
    const auto train = ds.subset(Split::Train);
    const auto test = ds.subset(Split::Test);
    const SecurityTokenizer tok;

    auto index = std::make_shared<const Bm25Index>(Bm25Index::build(train, tok));
    auto embedder = std::make_shared<const HashingEmbedder>();
    auto store = std::make_shared<const VectorStore>(build_store(train, *embedder, {}));
    auto model = SloraClassifier::create(32, ds.taxonomy.size(), 4, 0.9, 1);
    auto ck = std::make_shared<const SloraCheckpoint>(SloraCheckpoint{model, ds.taxonomy, 3});

    const std::vector<std::shared_ptr<const Detector>> ds3 = {
        std::make_shared<DenseDetector>(store, embedder, SegmentationParams{}, ds.taxonomy.size()),
        std::make_shared<Bm25Detector>(index, tok), std::make_shared<SloraDetector>(ck, tok)};
    CHECK(ds3[0]->kind() == DetectorKind::Dense);
    CHECK(ds3[1]->kind() == DetectorKind::Bm25);
    CHECK(ds3[2]->kind() == DetectorKind::Slora);
    for (const auto& c : test.contracts) {
        const auto results = parallel_detect(ds3, c);
        REQUIRE(results.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            REQUIRE(results[i].ok());
            CHECK(results[i].probabilities.size() == ds.taxonomy.size());
        }
        for (std::size_t i = 0; i < 2; ++i) {
            for (double p : results[i].probabilities) {
                CHECK((p == 0.0 || p == 1.0));
            }
        }
        for (double p : results[2].probabilities) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
        }
        // Deterministic detectors repeat exactly.
        const auto again = parallel_detect(ds3, c);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(again[i].probabilities == results[i].probabilities);
        }
    }
}

TEST_CASE("detector kind names") {
    for (auto k : {DetectorKind::Slora, DetectorKind::Bm25, DetectorKind::Dense, DetectorKind::External,
                   DetectorKind::Mock}) {
        CHECK(detector_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(detector_kind_from_string("gpt"), Error);
}
