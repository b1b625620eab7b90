#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "blockivf/types.hpp"

namespace blockivf {

/// Configuration of the pre-partitioned central memory pool.
struct PoolConfig {
    std::size_t num_blocks = 0;      ///< |P|, blocks carved out up front
    std::size_t block_capacity = 0;  ///< T_m, vectors per block
    std::size_t dim = 0;             ///< D
    std::size_t interleave_group = 32;
    double alert_watermark = 0.9;    ///< utilization fraction that fires the alert

    void validate() const;

    /// Scalars reserved per block payload. Capacity is rounded up to whole
    /// interleave groups so the layout formula always lands inside the block.
    std::size_t groups_per_block() const {
        return (block_capacity + interleave_group - 1) / interleave_group;
    }
    std::size_t payload_scalars() const {
        return groups_per_block() * interleave_group * dim;
    }
};

/// Offset of (slot, dimension) inside a block payload, 32-way dimension
/// interleaved: scalars of 32 consecutive vectors are grouped dimension-major.
inline std::size_t interleaved_offset(std::size_t slot, std::size_t d,
                                      std::size_t dim, std::size_t group = 32) {
    return (slot / group) * group * dim + d * group + (slot % group);
}

/// Snapshot of one block header, for inspection and tests.
struct BlockHeader {
    block_index prev = kNoBlock;
    block_index next = kNoBlock;
    std::uint32_t capacity = 0;
    std::uint32_t size = 0;            ///< committed (search-visible) slots
    std::int32_t owner = -1;           ///< cluster the block belongs to, -1 if free
    bool merged_with_prev = false;     ///< physically fused with its logical prev
};

/// Pre-partitioned arena of fixed-capacity memory blocks with an indivisible
/// allocation cursor. Blocks are never moved or reallocated once handed out;
/// the cursor only advances.
///
/// Thread safety: alloc_block and write_slot to distinct slots are safe under
/// arbitrary concurrency. link_blocks on one list must be serialized by the
/// caller (the index's designated-writer protocol does this). Traversal may
/// run concurrently with writes and sees the committed prefix of each block.
class CentralMemoryPool {
public:
    using AlertCallback = std::function<void(std::size_t used, std::size_t total)>;

    explicit CentralMemoryPool(PoolConfig config, AlertCallback alert = {});

    CentralMemoryPool(const CentralMemoryPool&) = delete;
    CentralMemoryPool& operator=(const CentralMemoryPool&) = delete;

    const PoolConfig& config() const { return config_; }

    /// Bump the allocation cursor and return the claimed block index.
    /// A failing call (pool exhausted) does not consume an index.
    block_index alloc_block();

    std::size_t allocated_blocks() const {
        return cursor_.load(std::memory_order_acquire);
    }

    /// Append `fresh` after `tail`. `tail` must have no next, `fresh` no links.
    void link_blocks(block_index tail, block_index fresh);

    /// Store id + vector into a slot. Does not publish: the slot becomes
    /// search-visible once the caller commits it (publish_slot).
    void write_slot(block_index b, std::size_t slot, vector_id id,
                    std::span<const float> vec);

    /// Commit slot, making it visible to readers. Commits are prefix-ordered:
    /// the call waits until all earlier slots of the block are committed.
    void publish_slot(block_index b, std::size_t slot);

    /// Read back a committed slot.
    std::pair<vector_id, std::vector<float>> read_slot(block_index b,
                                                       std::size_t slot) const;

    /// Walk the list from `head`, yielding every committed slot in block then
    /// slot order. Returns number of header jumps followed (physically fused
    /// blocks read through without a jump).
    struct TraverseResult {
        std::vector<std::pair<vector_id, std::vector<float>>> entries;
        std::size_t hops = 0;
        std::size_t blocks_visited = 0;
    };
    TraverseResult traverse_list(block_index head) const;

    /// Hop count of the list at `head` without materializing entries.
    std::size_t hop_count(block_index head) const;

    /// One line per allocated block: index, prev, next, size, ids.
    void dump(std::ostream& os) const;

    // --- raw views (used by the index's scan and rearrangement paths) ---

    const float* payload(block_index b) const {
        return arena_.data() + static_cast<std::size_t>(b) * config_.payload_scalars();
    }
    float* payload_mut(block_index b) {
        return arena_.data() + static_cast<std::size_t>(b) * config_.payload_scalars();
    }
    const vector_id* ids(block_index b) const {
        return ids_.data() + static_cast<std::size_t>(b) * config_.block_capacity;
    }
    vector_id* ids_mut(block_index b) {
        return ids_.data() + static_cast<std::size_t>(b) * config_.block_capacity;
    }

    block_index prev(block_index b) const { return meta_[b].prev.load(std::memory_order_acquire); }
    block_index next(block_index b) const { return meta_[b].next.load(std::memory_order_acquire); }
    std::uint32_t committed(block_index b) const { return meta_[b].committed.load(std::memory_order_acquire); }
    std::int32_t owner(block_index b) const { return meta_[b].owner.load(std::memory_order_acquire); }
    bool merged_with_prev(block_index b) const { return meta_[b].merged.load(std::memory_order_acquire); }

    BlockHeader header(block_index b) const;

    // Reader fencing: scans hold a per-block reader count; rearrangement marks
    // blocks as relocating and waits for readers to drain before moving data.
    bool enter_block(block_index b) const;
    void leave_block(block_index b) const;
    bool relocating(block_index b) const { return meta_[b].relocating.load(std::memory_order_acquire); }

    // Raw header mutation for the rearrangement swap. Callers must hold the
    // index's insertion exclusion and have fenced readers out.
    void set_prev(block_index b, block_index v) { meta_[b].prev.store(v, std::memory_order_release); }
    void set_next(block_index b, block_index v) { meta_[b].next.store(v, std::memory_order_release); }
    void set_committed(block_index b, std::uint32_t v) { meta_[b].committed.store(v, std::memory_order_release); }
    void set_owner(block_index b, std::int32_t v) { meta_[b].owner.store(v, std::memory_order_release); }
    void set_merged_with_prev(block_index b, bool v) { meta_[b].merged.store(v, std::memory_order_release); }
    void set_relocating(block_index b, bool v) { meta_[b].relocating.store(v, std::memory_order_seq_cst); }
    std::uint32_t reader_count(block_index b) const { return meta_[b].readers.load(std::memory_order_seq_cst); }

    /// Copy ids + payload + committed count from one block to another.
    void copy_block_data(block_index src, block_index dst);

    /// Scratch segment for rearrangement, one block worth of ids + payload.
    /// Dedicated so temporary copies never consume pool blocks.
    struct Scratch {
        std::vector<vector_id> ids;
        std::vector<float> payload;
        std::uint32_t committed = 0;
    };
    bool try_acquire_scratch();
    void release_scratch();
    Scratch& scratch() { return scratch_; }
    void save_to_scratch(block_index b);
    void restore_from_scratch(block_index b);

private:
    struct BlockMeta {
        std::atomic<block_index> prev{kNoBlock};
        std::atomic<block_index> next{kNoBlock};
        std::atomic<std::uint32_t> committed{0};
        std::atomic<std::int32_t> owner{-1};
        std::atomic<bool> merged{false};
        std::atomic<bool> relocating{false};
        mutable std::atomic<std::uint32_t> readers{0};
    };

    void check_allocated(block_index b) const;

    PoolConfig config_;
    AlertCallback alert_;
    std::atomic<std::size_t> cursor_{0};
    std::atomic<bool> alert_fired_{false};
    std::vector<float> arena_;       // num_blocks * payload_scalars, never resized
    std::vector<vector_id> ids_;     // num_blocks * block_capacity
    std::vector<BlockMeta> meta_;
    Scratch scratch_;
    std::atomic<bool> scratch_busy_{false};
};

}  // namespace blockivf
