#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "paravul/tokenizer.hpp"

namespace paravul {

/// Bag of security tokens hashed into `dim` buckets, log-scaled and
/// L2-normalised. Input features for the SLoRA classifier.
class FeatureExtractor {
public:
    FeatureExtractor(std::size_t dim, std::uint64_t seed, SecurityTokenizer tokenizer = {});

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::vector<double> extract(std::string_view source) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
    SecurityTokenizer tokenizer_;
};

}  // namespace paravul
