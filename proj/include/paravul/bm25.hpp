#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "paravul/corpus.hpp"
#include "paravul/retrieval.hpp"
#include "paravul/tokenizer.hpp"

namespace paravul {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.9;
};

/// Okapi BM25 over de-duplicated security token lists.
///
/// Position i of every per-document array refers to the same training
/// contract, in dataset order. The index is immutable once built.
class Bm25Index {
public:
    struct Document {
        std::string id;
        LabelVector labels;
        std::vector<std::string> tokens;
    };

    static Bm25Index build(const Dataset& train, const SecurityTokenizer& tokenizer, Bm25Params params = {});
    static Bm25Index from_documents(std::vector<Document> docs, Taxonomy taxonomy, Bm25Params params);

    std::size_t doc_count() const noexcept { return docs_.size(); }
    double avg_len() const noexcept { return avg_len_; }
    std::size_t doc_length(std::size_t doc) const { return docs_.at(doc).tokens.size(); }
    std::size_t doc_freq(const std::string& term) const;
    std::size_t term_freq(const std::string& term, std::size_t doc) const;
    const Bm25Params& params() const noexcept { return params_; }
    const Document& document(std::size_t doc) const { return docs_.at(doc); }
    const Taxonomy& taxonomy() const noexcept { return taxonomy_; }

    /// log((N - n + 0.5) / (n + 0.5) + 1), natural log.
    double idf(const std::string& term) const;

    /// Sum over query tokens of idf * (k1 + 1) f / (k1 (1 - b + b l/avg) + f).
    double score(std::span<const std::string> query_tokens, std::size_t doc) const;

    /// Scores of every document, accumulated over postings.
    std::vector<double> score_all(std::span<const std::string> query_tokens) const;

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    void finalize();
    double term_weight(double idf, double tf, double len) const;

    Taxonomy taxonomy_;
    Bm25Params params_;
    std::vector<Document> docs_;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::unordered_map<std::string, std::uint32_t>> tf_;
};

/// Top-K documents by descending score, skipping the query's own id;
/// ties by ascending id. K must be positive.
std::vector<RetrievalHit> bm25_retrieve(const Contract& query, const Bm25Index& index,
                                        const SecurityTokenizer& tokenizer, int k = 7);

/// Label j is set iff at least `threshold` hits carry it.
LabelVector bm25_vote(std::span<const RetrievalHit> hits, std::size_t label_count, int threshold = 4);

}  // namespace paravul
