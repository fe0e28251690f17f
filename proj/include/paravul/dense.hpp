#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paravul/corpus.hpp"
#include "paravul/retrieval.hpp"

namespace paravul {

struct SegmentationParams {
    std::size_t window = 1500;
    std::size_t overlap = 300;
    std::size_t min_len = 100;
    std::size_t chi = 5;  // neighbours kept per query fragment

    void validate() const;
};

struct Fragment {
    std::string parent_id;
    std::size_t frag_index = 0;
    std::string text;
    std::size_t start = 0;  // byte offsets into the preprocessed source
    std::size_t end = 0;
    LabelVector labels;
};

/// Sliding windows at multiples of (window - overlap). Windows shorter than
/// min_len, and a trailing window fully inside its predecessor, are dropped.
std::vector<Fragment> segment(std::string_view source, const SegmentationParams& params);
std::vector<Fragment> segment(const Contract& contract, const SegmentationParams& params);

/// ceil((L - o) / (s - o)) for L >= s.
std::size_t expected_fragment_count(std::size_t length, const SegmentationParams& params);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    /// Unit-norm embedding. Throws EmptyFragment on empty input.
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Signed feature hashing of lowercased word 3-grams, L2 normalised.
/// Texts with fewer than three words hash their shorter word sequence; a
/// text whose buckets cancel to zero falls back to one bucket keyed by the
/// whole text.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256, std::size_t ngram = 3);

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view text) const override;
    std::string name() const override { return "hashing"; }

    /// Bucket and sign for one n-gram, exposed for collision checks.
    std::pair<std::size_t, double> bucket(std::string_view gram) const;
    std::vector<std::string> grams(std::string_view text) const;

private:
    std::size_t dimension_;
    std::size_t ngram_;
};

/// Embeddings served over HTTP: POST {"text": ...} -> {"embedding": [...]}.
/// The reply is re-normalised locally.
class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(std::string endpoint, std::size_t dimension, std::chrono::milliseconds timeout,
                   std::string auth_header = {});

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view text) const override;
    std::string name() const override { return "remote"; }

private:
    std::string endpoint_;
    std::size_t dimension_;
    std::chrono::milliseconds timeout_;
    std::string auth_header_;
};

/// (q . d) / (|q| |d|). Throws ZeroVector when either norm is zero.
double cosine(std::span<const double> q, std::span<const double> d);

/// Flat store of unit vectors with aligned fragment metadata.
class VectorStore {
public:
    struct Entry {
        std::string parent_id;
        std::size_t frag_index = 0;
        std::size_t start = 0;
        std::size_t end = 0;
        LabelVector labels;

        bool operator==(const Entry&) const = default;
    };

    explicit VectorStore(std::size_t dimension = 0) : dimension_(dimension) {}

    void add(std::span<const double> vector, Entry entry);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::span<const double> vector(std::size_t i) const { return {data_.data() + i * dimension_, dimension_}; }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }
    const std::vector<double>& raw() const noexcept { return data_; }

    void save(const std::filesystem::path& path) const;
    static VectorStore load(const std::filesystem::path& path);

    bool operator==(const VectorStore&) const = default;

private:
    std::size_t dimension_;
    std::vector<double> data_;
    std::vector<Entry> entries_;
};

VectorStore build_store(const Dataset& train, const Embedder& embedder, const SegmentationParams& params);

/// For every query fragment, the chi most similar stored fragments whose
/// parent differs from the query id. Ties by ascending (parent_id, frag_index).
std::vector<RetrievalHit> dense_retrieve(const Contract& query, const VectorStore& store, const Embedder& embedder,
                                         const SegmentationParams& params);

/// max(0.4 N, 1).
double dynamic_threshold(std::size_t retrieved);

/// One vote per hit per carried label; label j kept iff votes >= dynamic_threshold(hits).
LabelVector dense_vote(std::span<const RetrievalHit> hits, std::size_t label_count);

}  // namespace paravul
