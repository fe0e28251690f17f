#include "paravul/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"

namespace paravul {

using nlohmann::json;

Bm25Index Bm25Index::build(const Dataset& train, const SecurityTokenizer& tokenizer, Bm25Params params) {
    if (train.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "cannot build a BM25 index from an empty dataset");
    }
    std::vector<Document> docs;
    docs.reserve(train.size());
    for (const auto& c : train.contracts) {
        docs.push_back({c.id, c.labels.value_or(LabelVector(train.taxonomy.size())), tokenizer.tokenize(c.source)});
    }
    return from_documents(std::move(docs), train.taxonomy, params);
}

Bm25Index Bm25Index::from_documents(std::vector<Document> docs, Taxonomy taxonomy, Bm25Params params) {
    if (docs.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "cannot build a BM25 index from an empty dataset");
    }
    if (!(params.k1 >= 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "BM25 requires k1 >= 0 and b in [0, 1]");
    }
    Bm25Index index;
    index.taxonomy_ = std::move(taxonomy);
    index.params_ = params;
    index.docs_ = std::move(docs);
    index.finalize();
    return index;
}

void Bm25Index::finalize() {
    std::size_t total = 0;
    tf_.assign(docs_.size(), {});
    postings_.clear();
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        total += docs_[d].tokens.size();
        for (const auto& t : docs_[d].tokens) {
            ++tf_[d][t];
        }
    }
    // Postings are appended in document order, so each list is sorted by doc.
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        for (const auto& [term, tf] : tf_[d]) {
            postings_[term].push_back({static_cast<std::uint32_t>(d), tf});
        }
    }
    avg_len_ = static_cast<double>(total) / static_cast<double>(docs_.size());
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::term_freq(const std::string& term, std::size_t doc) const {
    const auto& m = tf_.at(doc);
    auto it = m.find(term);
    return it == m.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& term) const {
    const double n = static_cast<double>(docs_.size());
    const double nq = static_cast<double>(doc_freq(term));
    return std::log((n - nq + 0.5) / (nq + 0.5) + 1.0);
}

double Bm25Index::term_weight(double idf, double tf, double len) const {
    const double k1 = params_.k1;
    const double b = params_.b;
    const double norm = avg_len_ > 0.0 ? len * b / avg_len_ : 0.0;
    return idf * (k1 + 1.0) * tf / (k1 * (1.0 - b + norm) + tf);
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::size_t doc) const {
    const double len = static_cast<double>(doc_length(doc));
    double s = 0.0;
    for (const auto& q : query_tokens) {
        const auto tf = term_freq(q, doc);
        if (tf == 0) {
            continue;
        }
        s += term_weight(idf(q), static_cast<double>(tf), len);
    }
    return s;
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query_tokens) const {
    std::vector<double> scores(docs_.size(), 0.0);
    for (const auto& q : query_tokens) {
        auto it = postings_.find(q);
        if (it == postings_.end()) {
            continue;
        }
        const double w = idf(q);
        for (const auto& p : it->second) {
            scores[p.doc] += term_weight(w, static_cast<double>(p.tf), static_cast<double>(docs_[p.doc].tokens.size()));
        }
    }
    return scores;
}

void Bm25Index::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "paravul-bm25";
    j["version"] = 1;
    j["k1"] = params_.k1;
    j["b"] = params_.b;
    j["taxonomy"] = taxonomy_.names();
    json docs = json::array();
    for (const auto& d : docs_) {
        docs.push_back({{"id", d.id}, {"labels", d.labels.bits()}, {"tokens", d.tokens}});
    }
    j["documents"] = std::move(docs);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
        if (j.at("format") != "paravul-bm25" || j.at("version") != 1) {
            throw Error(ErrorKind::ParseError, path.string() + ": not a BM25 index file");
        }
        std::vector<Document> docs;
        for (const auto& d : j.at("documents")) {
            docs.push_back({d.at("id").get<std::string>(),
                            LabelVector(d.at("labels").get<std::vector<std::uint8_t>>()),
                            d.at("tokens").get<std::vector<std::string>>()});
        }
        return from_documents(std::move(docs), Taxonomy(j.at("taxonomy").get<std::vector<std::string>>()),
                              {j.at("k1").get<double>(), j.at("b").get<double>()});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

std::vector<RetrievalHit> bm25_retrieve(const Contract& query, const Bm25Index& index,
                                        const SecurityTokenizer& tokenizer, int k) {
    if (k <= 0) {
        throw Error(ErrorKind::InvalidParameter, "BM25 top-K must be positive");
    }
    const auto tokens = tokenizer.tokenize(query.source);
    const auto scores = index.score_all(tokens);

    std::vector<std::size_t> order;
    order.reserve(scores.size());
    for (std::size_t d = 0; d < scores.size(); ++d) {
        if (index.document(d).id != query.id) {
            order.push_back(d);
        }
    }
    const std::size_t take = std::min(order.size(), static_cast<std::size_t>(k));
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return index.document(a).id < index.document(b).id;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

    std::vector<RetrievalHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& doc = index.document(order[i]);
        hits.push_back({doc.id, scores[order[i]], doc.labels, std::nullopt});
    }
    return hits;
}

LabelVector bm25_vote(std::span<const RetrievalHit> hits, std::size_t label_count, int threshold) {
    std::vector<int> votes(label_count, 0);
    for (const auto& h : hits) {
        if (h.labels.size() != label_count) {
            throw Error(ErrorKind::ShapeError, "hit label vector length differs from taxonomy size");
        }
        for (std::size_t j = 0; j < label_count; ++j) {
            votes[j] += h.labels.test(j) ? 1 : 0;
        }
    }
    LabelVector out(label_count);
    for (std::size_t j = 0; j < label_count; ++j) {
        out.set(j, votes[j] >= threshold);
    }
    return out;
}

}  // namespace paravul
