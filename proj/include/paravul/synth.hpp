#pragma once

#include <cstddef>
#include <cstdint>

#include "paravul/corpus.hpp"

namespace paravul {

struct SynthOptions {
    std::size_t count = 200;
    std::uint64_t seed = 7;
    double label_rate = 0.3;       // chance that each label's pattern is planted
    double train_fraction = 0.7;
    std::size_t min_filler = 8;    // benign functions per contract
    std::size_t max_filler = 30;
    double decoy_rate = 0.35;      // chance of a look-alike safe snippet per label
};

/// Deterministic labelled Solidity-like corpus. Label j is set iff a
/// pattern for taxonomy entry j was planted. The first train_fraction of
/// contracts (after a seeded shuffle) form the training split.
Dataset synthesize(const SynthOptions& options, const Taxonomy& taxonomy = Taxonomy::synthetic_default());

}  // namespace paravul
