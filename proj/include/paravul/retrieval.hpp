#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "paravul/corpus.hpp"

namespace paravul {

/// One scored neighbour from either retrieval pathway.
struct RetrievalHit {
    std::string contract_id;
    double score = 0.0;
    LabelVector labels;
    std::optional<std::size_t> fragment;  // set by the dense pathway only
};

}  // namespace paravul
