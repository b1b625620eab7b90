#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "blockivf/types.hpp"

namespace blockivf {

/// Top-k result: distances ascending, ties broken by ascending id.
struct SearchResult {
    std::vector<vector_id> ids;
    std::vector<float> distances;
};

/// Common surface of the block-based index and the copy-based baseline, so
/// the executor and the replay harness can switch backend by config.
class VectorIndex {
public:
    virtual ~VectorIndex() = default;

    /// Insert a batch. Returns one id per vector (-1 for a rejected duplicate).
    /// Throws PoolExhaustedError on partial failure.
    virtual std::vector<vector_id> insert(std::span<const float> vectors, std::size_t n,
                                          std::span<const vector_id> ids = {}) = 0;

    virtual SearchResult search(std::span<const float> query, std::size_t k,
                                std::size_t nprobe) const = 0;

    virtual cluster_id assign(std::span<const float> y) const = 0;

    /// Post-batch housekeeping (the block index runs its exceed/rearrange sweep).
    virtual void post_insert_maintenance() {}

    virtual std::size_t dim() const = 0;
    virtual std::size_t num_clusters() const = 0;
    virtual std::size_t size() const = 0;

    /// Scalars physically copied by insertions so far (payload writes for the
    /// block index, old-list plus new-vector copies for the baseline).
    virtual std::uint64_t scalars_copied() const = 0;
    virtual std::uint64_t reallocations() const = 0;
};

}  // namespace blockivf
