#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "blockivf/block_store.hpp"
#include "blockivf/vector_index.hpp"

namespace blockivf {

struct IndexConfig {
    std::size_t num_clusters = 100;      ///< N
    std::size_t dim = 0;                 ///< D, taken from pool.dim when 0
    std::size_t nprobe_default = 8;
    std::size_t rearrange_threshold = 256;  ///< T'_m
    std::size_t kmeans_iters = 25;
    std::uint64_t kmeans_seed = 42;
    PoolConfig pool{.num_blocks = 1024, .block_capacity = 64, .dim = 0};

    void validate() const;
};

/// One logged rearrangement, for the harness's Table-1 style reporting.
struct RearrangeEvent {
    cluster_id cluster = 0;
    std::size_t hops_before = 0;
    std::size_t hops_after = 0;
    std::size_t merges = 0;
    double duration_us = 0.0;
};

/// Inverted-file flat index over block-linked online lists.
///
/// Offline vectors live in per-cluster contiguous segments built at train
/// time; online vectors are appended lock-free into linked memory blocks
/// drawn from the central pool. Existing vectors are never moved or copied
/// by insertion; rearrangement compacts fragmented lists in place.
class ClusterIndex final : public VectorIndex {
public:
    /// Train: k-means over the offline set, then bulk-load it.
    ClusterIndex(std::span<const float> offline, std::size_t n, IndexConfig config);

    ClusterIndex(const ClusterIndex&) = delete;
    ClusterIndex& operator=(const ClusterIndex&) = delete;

    const IndexConfig& config() const { return config_; }
    std::size_t dim() const override { return config_.dim; }
    std::size_t num_clusters() const override { return config_.num_clusters; }
    std::size_t size() const override;
    std::span<const float> centroids() const { return centroids_; }

    cluster_id assign(std::span<const float> y) const;

    std::vector<vector_id> insert(std::span<const float> vectors, std::size_t n,
                                  std::span<const vector_id> ids = {}) override;

    SearchResult search(std::span<const float> query, std::size_t k,
                        std::size_t nprobe) const override;
    SearchResult search(std::span<const float> query, std::size_t k) const {
        return search(query, k, config_.nprobe_default);
    }

    /// Eq. 3: strictly greater than the threshold.
    bool exceed(cluster_id k) const;

    /// Compact cluster k's block list: merge logically-consecutive blocks into
    /// physically adjacent slots until no merge opportunity remains. Content
    /// displaced from other lists is re-merged lazily.
    void rearrange(cluster_id k);

    /// The post-insertion sweep: rearrange every cluster where exceed() holds.
    void rearrange_sweep();
    void post_insert_maintenance() override { rearrange_sweep(); }

    // --- introspection ---
    std::size_t list_length(cluster_id k) const;     ///< online vectors (nl)
    std::size_t offline_count(cluster_id k) const { return offline_[k].count; }
    std::size_t hop_count(cluster_id k) const;       ///< online list hops
    block_index online_head(cluster_id k) const;
    std::uint64_t scalars_copied() const override {
        return scalars_copied_.load(std::memory_order_relaxed);
    }
    std::uint64_t reallocations() const override { return 0; }
    const CentralMemoryPool& pool() const { return pool_; }
    std::vector<RearrangeEvent> take_rearrange_events();

    /// All currently committed (id, vector) pairs of one cluster, offline
    /// then online. Quiesced-state helper for tests and snapshotting.
    std::vector<std::pair<vector_id, std::vector<float>>> cluster_contents(cluster_id k) const;

    void save(const std::string& path) const;
    static std::unique_ptr<ClusterIndex> load(const std::string& path);

    void dump_pool(std::ostream& os) const { pool_.dump(os); }

private:
    struct OfflineSegment {
        std::vector<vector_id> ids;
        std::vector<float> payload;  // interleaved, padded to whole groups
        std::size_t count = 0;
    };

    // Per-cluster online list state. tail_packed holds (published block count,
    // tail block index, fail flag) in one word so awaiting writers see a
    // consistent snapshot.
    struct OnlineList {
        std::atomic<std::uint64_t> length{0};
        std::atomic<block_index> head{kNoBlock};
        std::atomic<std::uint64_t> tail_packed{0};
    };

    static constexpr std::uint64_t kFailBit = 1ull << 63;
    static std::uint64_t pack_tail(std::uint64_t count, block_index tail) {
        return (count << 32) | static_cast<std::uint32_t>(tail);
    }
    static std::uint64_t tail_count(std::uint64_t packed) { return (packed & ~kFailBit) >> 32; }
    static block_index tail_block(std::uint64_t packed) {
        return static_cast<block_index>(static_cast<std::int32_t>(packed & 0xFFFFFFFFull));
    }

    ClusterIndex(IndexConfig config);  // load path

    void build_offline(std::span<const float> offline, std::size_t n,
                       const std::vector<std::uint32_t>& assignment);
    bool place_vector(cluster_id k, std::span<const float> y, vector_id id);
    block_index await_block(OnlineList& list, std::uint64_t mid);
    bool is_duplicate_id(vector_id id);

    template <class F>
    void scan_online(cluster_id k, F&& per_block) const;

    // rearrangement internals (caller holds insert_gate_ exclusively)
    void rearrange_locked(cluster_id k, RearrangeEvent& ev,
                          std::deque<cluster_id>& work,
                          std::vector<char>& queued);
    bool swap_blocks(block_index a, block_index b);
    void split_runs_around(block_index x, std::deque<cluster_id>& work,
                           std::vector<char>& queued);
    void remap_cluster_refs(cluster_id c, block_index a, block_index b);

    IndexConfig config_;
    CentralMemoryPool pool_;
    std::vector<float> centroids_;
    std::vector<OfflineSegment> offline_;
    std::vector<OnlineList> online_;
    std::atomic<vector_id> next_id_{0};

    // Inserters hold this shared; rearrangement holds it exclusively so block
    // contents are stable while they move.
    mutable std::shared_mutex insert_gate_;

    std::mutex supplied_ids_mutex_;
    std::unordered_set<vector_id> supplied_ids_;
    std::vector<std::pair<vector_id, vector_id>> auto_ranges_;  // [begin, end)
    vector_id offline_ids_end_ = 0;

    std::atomic<std::uint64_t> scalars_copied_{0};
    std::mutex events_mutex_;
    std::vector<RearrangeEvent> events_;
};

}  // namespace blockivf
