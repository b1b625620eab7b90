#pragma once

#include <span>
#include <vector>

#include "blockivf/vector_index.hpp"

namespace blockivf {

/// Exhaustive squared-L2 top-k over raw vectors, ties by ascending id.
/// This is the ground truth the index's exactness and recall are judged
/// against: it sorts the full distance list rather than maintaining a heap,
/// so it shares no selection code with the index backends.
SearchResult exact_knn(std::span<const float> base, std::size_t n, std::size_t dim,
                       std::span<const float> query, std::size_t k);

/// Same, but over explicit (id, vector) pairs (for mid-life index states).
SearchResult exact_knn_pairs(
    const std::vector<std::pair<vector_id, std::vector<float>>>& entries,
    std::span<const float> query, std::size_t k);

/// Mean over queries of |result ids ∩ oracle ids| / k.
double recall_at_k(const std::vector<SearchResult>& results,
                   const std::vector<SearchResult>& oracle, std::size_t k);

}  // namespace blockivf
