#include "paravul/features.hpp"

#include <cmath>

#include "paravul/error.hpp"
#include "paravul/hashing.hpp"

namespace paravul {

FeatureExtractor::FeatureExtractor(std::size_t dim, std::uint64_t seed, SecurityTokenizer tokenizer)
    : dim_(dim), seed_(seed), tokenizer_(std::move(tokenizer)) {
    if (dim_ == 0) {
        throw Error(ErrorKind::InvalidParameter, "feature dimension must be positive");
    }
}

std::vector<double> FeatureExtractor::extract(std::string_view source) const {
    std::vector<double> counts(dim_, 0.0);
    const std::uint64_t basis = mix64(kFnvOffset ^ seed_);
    for (const auto& t : tokenizer_.tokenize(source)) {
        counts[mix64(fnv1a(t, basis)) % dim_] += 1.0;
    }
    double norm2 = 0.0;
    for (double& c : counts) {
        c = std::log1p(c);
        norm2 += c * c;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& c : counts) {
            c *= inv;
        }
    }
    return counts;
}

}  // namespace paravul
