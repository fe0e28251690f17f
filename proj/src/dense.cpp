#include "paravul/dense.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"
#include "paravul/hashing.hpp"
#include "paravul/http.hpp"
#include "paravul/tokenizer.hpp"

namespace paravul {

void SegmentationParams::validate() const {
    if (window == 0 || overlap >= window || min_len == 0 || chi == 0) {
        throw Error(ErrorKind::InvalidParameter, "segmentation requires 0 <= overlap < window, min_len > 0, chi >= 1");
    }
}

std::vector<Fragment> segment(std::string_view source, const SegmentationParams& params) {
    params.validate();
    const std::size_t step = params.window - params.overlap;
    std::vector<Fragment> out;
    std::size_t prev_end = 0;
    bool have_prev = false;
    for (std::size_t start = 0; start < source.size(); start += step) {
        const std::size_t end = std::min(source.size(), start + params.window);
        const bool contained = have_prev && end <= prev_end;
        have_prev = true;
        prev_end = end;
        if (contained || end - start < params.min_len) {
            continue;
        }
        Fragment f;
        f.frag_index = out.size();
        f.start = start;
        f.end = end;
        f.text = std::string(source.substr(start, end - start));
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<Fragment> segment(const Contract& contract, const SegmentationParams& params) {
    auto frags = segment(contract.source, params);
    for (auto& f : frags) {
        f.parent_id = contract.id;
        if (contract.labels) {
            f.labels = *contract.labels;
        }
    }
    return frags;
}

std::size_t expected_fragment_count(std::size_t length, const SegmentationParams& params) {
    const std::size_t num = length - params.overlap;
    const std::size_t den = params.window - params.overlap;
    return (num + den - 1) / den;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::size_t ngram) : dimension_(dimension), ngram_(ngram) {
    if (dimension_ == 0 || ngram_ == 0) {
        throw Error(ErrorKind::InvalidParameter, "hashing embedder needs positive dimension and n-gram size");
    }
}

std::pair<std::size_t, double> HashingEmbedder::bucket(std::string_view gram) const {
    const std::uint64_t h = mix64(fnv1a(gram));
    return {static_cast<std::size_t>(h % dimension_), (h >> 63) != 0 ? -1.0 : 1.0};
}

std::vector<std::string> HashingEmbedder::grams(std::string_view text) const {
    const auto words = split_words(text);
    std::vector<std::string> out;
    if (words.empty()) {
        return out;
    }
    const std::size_t n = std::min(ngram_, words.size());
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
        std::string g = words[i];
        for (std::size_t k = 1; k < n; ++k) {
            g.push_back(' ');
            g += words[i + k];
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
    if (text.empty()) {
        throw Error(ErrorKind::EmptyFragment, "cannot embed empty text");
    }
    std::vector<double> v(dimension_, 0.0);
    for (const auto& g : grams(text)) {
        auto [idx, sign] = bucket(g);
        v[idx] += sign;
    }
    double norm2 = 0.0;
    for (double x : v) {
        norm2 += x * x;
    }
    if (norm2 == 0.0) {
        v[bucket(text).first] = 1.0;
        return v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) {
        x *= inv;
    }
    return v;
}

RemoteEmbedder::RemoteEmbedder(std::string endpoint, std::size_t dimension, std::chrono::milliseconds timeout,
                               std::string auth_header)
    : endpoint_(std::move(endpoint)), dimension_(dimension), timeout_(timeout), auth_header_(std::move(auth_header)) {}

std::vector<double> RemoteEmbedder::embed(std::string_view text) const {
    if (text.empty()) {
        throw Error(ErrorKind::EmptyFragment, "cannot embed empty text");
    }
    nlohmann::json req = {{"text", std::string(text)}};
    const auto reply = post_json(endpoint_, req, timeout_, auth_header_);
    if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
        throw Error(ErrorKind::ParseError, "embedding reply lacks an 'embedding' array");
    }
    auto v = reply["embedding"].get<std::vector<double>>();
    if (v.size() != dimension_) {
        throw Error(ErrorKind::ShapeError, "embedding reply has dimension " + std::to_string(v.size()) +
                                               ", expected " + std::to_string(dimension_));
    }
    double norm2 = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error(ErrorKind::NumericError, "embedding reply contains a non-finite value");
        }
        norm2 += x * x;
    }
    if (norm2 == 0.0) {
        throw Error(ErrorKind::ZeroVector, "embedding reply is the zero vector");
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) {
        x *= inv;
    }
    return v;
}

double cosine(std::span<const double> q, std::span<const double> d) {
    if (q.size() != d.size()) {
        throw Error(ErrorKind::ShapeError, "cosine of vectors with different dimensions");
    }
    double dot = 0.0;
    double nq = 0.0;
    double nd = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        dot += q[i] * d[i];
        nq += q[i] * q[i];
        nd += d[i] * d[i];
    }
    if (nq == 0.0 || nd == 0.0) {
        throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
    }
    return dot / (std::sqrt(nq) * std::sqrt(nd));
}

void VectorStore::add(std::span<const double> vector, Entry entry) {
    if (vector.size() != dimension_) {
        throw Error(ErrorKind::ShapeError, "vector dimension differs from store dimension");
    }
    data_.insert(data_.end(), vector.begin(), vector.end());
    entries_.push_back(std::move(entry));
}

namespace {

constexpr char kStoreMagic[8] = {'P', 'V', 'V', 'S', 'T', 'O', 'R', 'E'};
constexpr std::uint32_t kStoreVersion = 1;

static_assert(std::endian::native == std::endian::little, "store format is little-endian");

template <typename T>
void put(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw Error(ErrorKind::ParseError, "truncated vector store file");
    }
    return value;
}

}  // namespace

void VectorStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out.write(kStoreMagic, sizeof(kStoreMagic));
    put<std::uint32_t>(out, kStoreVersion);
    put<std::uint64_t>(out, dimension_);
    put<std::uint64_t>(out, entries_.size());
    out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(double)));
    for (const auto& e : entries_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.parent_id.size()));
        out.write(e.parent_id.data(), static_cast<std::streamsize>(e.parent_id.size()));
        put<std::uint64_t>(out, e.frag_index);
        put<std::uint64_t>(out, e.start);
        put<std::uint64_t>(out, e.end);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.labels.size()));
        out.write(reinterpret_cast<const char*>(e.labels.bits().data()), static_cast<std::streamsize>(e.labels.size()));
    }
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kStoreMagic, sizeof(magic)) != 0 || get<std::uint32_t>(in) != kStoreVersion) {
        throw Error(ErrorKind::ParseError, path.string() + ": not a vector store file");
    }
    VectorStore store(get<std::uint64_t>(in));
    const auto count = get<std::uint64_t>(in);
    store.data_.resize(count * store.dimension_);
    in.read(reinterpret_cast<char*>(store.data_.data()),
            static_cast<std::streamsize>(store.data_.size() * sizeof(double)));
    if (!in) {
        throw Error(ErrorKind::ParseError, "truncated vector store file");
    }
    store.entries_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        e.parent_id.resize(get<std::uint32_t>(in));
        in.read(e.parent_id.data(), static_cast<std::streamsize>(e.parent_id.size()));
        e.frag_index = get<std::uint64_t>(in);
        e.start = get<std::uint64_t>(in);
        e.end = get<std::uint64_t>(in);
        std::vector<std::uint8_t> bits(get<std::uint32_t>(in));
        in.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
        if (!in) {
            throw Error(ErrorKind::ParseError, "truncated vector store file");
        }
        e.labels = LabelVector(std::move(bits));
        store.entries_.push_back(std::move(e));
    }
    return store;
}

VectorStore build_store(const Dataset& train, const Embedder& embedder, const SegmentationParams& params) {
    VectorStore store(embedder.dimension());
    for (const auto& c : train.contracts) {
        for (auto& f : segment(c, params)) {
            if (!c.labels) {
                f.labels = LabelVector(train.taxonomy.size());
            }
            const auto v = embedder.embed(f.text);
            store.add(v, {f.parent_id, f.frag_index, f.start, f.end, f.labels});
        }
    }
    if (store.size() == 0) {
        throw Error(ErrorKind::EmptyStore, "training data produced no fragments");
    }
    return store;
}

std::vector<RetrievalHit> dense_retrieve(const Contract& query, const VectorStore& store, const Embedder& embedder,
                                         const SegmentationParams& params) {
    const auto frags = segment(query.source, params);
    if (frags.empty()) {
        throw Error(ErrorKind::NoFragments, "query '" + query.id + "' yields no fragments");
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (store.entry(i).parent_id != query.id) {
            candidates.push_back(i);
        }
    }

    std::vector<RetrievalHit> hits;
    std::vector<double> scores(store.size(), 0.0);
    for (const auto& f : frags) {
        const auto q = embedder.embed(f.text);
        for (auto i : candidates) {
            scores[i] = cosine(q, store.vector(i));
        }
        auto order = candidates;
        const std::size_t take = std::min(order.size(), params.chi);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (scores[a] != scores[b]) {
                                  return scores[a] > scores[b];
                              }
                              const auto& ea = store.entry(a);
                              const auto& eb = store.entry(b);
                              if (ea.parent_id != eb.parent_id) {
                                  return ea.parent_id < eb.parent_id;
                              }
                              return ea.frag_index < eb.frag_index;
                          });
        for (std::size_t k = 0; k < take; ++k) {
            const auto& e = store.entry(order[k]);
            hits.push_back({e.parent_id, scores[order[k]], e.labels, e.frag_index});
        }
    }
    return hits;
}

double dynamic_threshold(std::size_t retrieved) {
    // 2N/5 is exact whenever 0.4 N is an integer, unlike N * 0.4.
    return std::max(static_cast<double>(2 * retrieved) / 5.0, 1.0);
}

LabelVector dense_vote(std::span<const RetrievalHit> hits, std::size_t label_count) {
    std::vector<std::size_t> votes(label_count, 0);
    for (const auto& h : hits) {
        if (h.labels.size() != label_count) {
            throw Error(ErrorKind::ShapeError, "hit label vector length differs from taxonomy size");
        }
        for (std::size_t j = 0; j < label_count; ++j) {
            votes[j] += h.labels.test(j) ? 1 : 0;
        }
    }
    const double tau = dynamic_threshold(hits.size());
    LabelVector out(label_count);
    for (std::size_t j = 0; j < label_count; ++j) {
        out.set(j, static_cast<double>(votes[j]) >= tau);
    }
    return out;
}

}  // namespace paravul
