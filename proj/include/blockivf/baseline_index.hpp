#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "blockivf/ivf_index.hpp"
#include "blockivf/vector_index.hpp"

namespace blockivf {

/// The comparison backend: contiguous per-cluster arrays extended by
/// allocate-copy-append-free, the way prior systems grow their lists.
/// Insertion is exclusive; instrumented counters expose how many scalars
/// each extend copies and how many reallocations it performs.
class BaselineIndex final : public VectorIndex {
public:
    BaselineIndex(std::span<const float> offline, std::size_t n, IndexConfig config);

    std::vector<vector_id> insert(std::span<const float> vectors, std::size_t n,
                                  std::span<const vector_id> ids = {}) override;

    SearchResult search(std::span<const float> query, std::size_t k,
                        std::size_t nprobe) const override;

    cluster_id assign(std::span<const float> y) const;

    std::size_t dim() const override { return config_.dim; }
    std::size_t num_clusters() const override { return config_.num_clusters; }
    std::size_t size() const override;
    std::size_t cluster_size(cluster_id k) const { return lists_[k].ids.size(); }

    std::uint64_t scalars_copied() const override {
        return scalars_copied_.load(std::memory_order_relaxed);
    }
    std::uint64_t reallocations() const override {
        return reallocations_.load(std::memory_order_relaxed);
    }

private:
    struct List {
        std::vector<vector_id> ids;
        std::vector<float> payload;  // row-major
    };

    IndexConfig config_;
    std::vector<float> centroids_;
    std::vector<List> lists_;
    std::atomic<vector_id> next_id_{0};
    mutable std::mutex extend_mutex_;
    std::atomic<std::uint64_t> scalars_copied_{0};
    std::atomic<std::uint64_t> reallocations_{0};
};

}  // namespace blockivf
