#include "blockivf/block_store.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <thread>

namespace blockivf {

void PoolConfig::validate() const {
    if (num_blocks < 1) throw std::invalid_argument("PoolConfig: num_blocks must be >= 1");
    if (block_capacity < 1) throw std::invalid_argument("PoolConfig: block_capacity must be >= 1");
    if (dim < 1) throw std::invalid_argument("PoolConfig: dim must be >= 1");
    if (interleave_group < 1) throw std::invalid_argument("PoolConfig: interleave_group must be >= 1");
    if (!(alert_watermark > 0.0 && alert_watermark <= 1.0))
        throw std::invalid_argument("PoolConfig: alert_watermark must be in (0, 1]");
}

CentralMemoryPool::CentralMemoryPool(PoolConfig config, AlertCallback alert)
    : config_(config), alert_(std::move(alert)) {
    config_.validate();
    // The whole arena is reserved up front; allocation later only moves the
    // cursor, it never touches the allocator again.
    arena_.assign(config_.num_blocks * config_.payload_scalars(), 0.0f);
    ids_.assign(config_.num_blocks * config_.block_capacity, vector_id{-1});
    meta_ = std::vector<BlockMeta>(config_.num_blocks);
    scratch_.ids.assign(config_.block_capacity, vector_id{-1});
    scratch_.payload.assign(config_.payload_scalars(), 0.0f);
}

block_index CentralMemoryPool::alloc_block() {
    std::size_t cur = cursor_.load(std::memory_order_relaxed);
    for (;;) {
        if (cur >= config_.num_blocks) throw PoolExhaustedError(0);
        if (cursor_.compare_exchange_weak(cur, cur + 1, std::memory_order_acq_rel,
                                          std::memory_order_relaxed)) {
            break;
        }
    }
    const std::size_t used = cur + 1;
    if (alert_ && static_cast<double>(used) / static_cast<double>(config_.num_blocks) >
                      config_.alert_watermark) {
        if (!alert_fired_.exchange(true, std::memory_order_acq_rel)) {
            alert_(used, config_.num_blocks);
        }
    }
    return static_cast<block_index>(cur);
}

void CentralMemoryPool::check_allocated(block_index b) const {
    if (b < 0 || static_cast<std::size_t>(b) >= allocated_blocks())
        throw std::out_of_range("block index " + std::to_string(b) + " not allocated");
}

void CentralMemoryPool::link_blocks(block_index tail, block_index fresh) {
    check_allocated(tail);
    check_allocated(fresh);
    if (meta_[tail].next.load(std::memory_order_acquire) != kNoBlock)
        throw std::logic_error("link_blocks: tail already has a next block");
    if (meta_[fresh].prev.load(std::memory_order_acquire) != kNoBlock ||
        meta_[fresh].next.load(std::memory_order_acquire) != kNoBlock)
        throw std::logic_error("link_blocks: fresh block is already linked");
    meta_[fresh].prev.store(tail, std::memory_order_release);
    meta_[tail].next.store(fresh, std::memory_order_release);
}

void CentralMemoryPool::write_slot(block_index b, std::size_t slot, vector_id id,
                                   std::span<const float> vec) {
    check_allocated(b);
    if (slot >= config_.block_capacity)
        throw std::out_of_range("write_slot: slot beyond block capacity");
    if (slot < meta_[b].committed.load(std::memory_order_acquire))
        throw std::logic_error("write_slot: slot already occupied");
    if (vec.size() != config_.dim)
        throw std::invalid_argument("write_slot: vector dimension mismatch");
    ids_mut(b)[slot] = id;
    float* p = payload_mut(b);
    const std::size_t g = config_.interleave_group;
    float* base = p + (slot / g) * g * config_.dim + (slot % g);
    for (std::size_t d = 0; d < config_.dim; ++d) base[d * g] = vec[d];
}

void CentralMemoryPool::publish_slot(block_index b, std::size_t slot) {
    check_allocated(b);
    auto& committed = meta_[b].committed;
    // Commits are prefix-ordered: a slot becomes visible only once every
    // earlier slot of the block has committed.
    while (committed.load(std::memory_order_acquire) != slot) std::this_thread::yield();
    committed.store(static_cast<std::uint32_t>(slot + 1), std::memory_order_release);
}

std::pair<vector_id, std::vector<float>> CentralMemoryPool::read_slot(
    block_index b, std::size_t slot) const {
    check_allocated(b);
    if (slot >= meta_[b].committed.load(std::memory_order_acquire))
        throw std::out_of_range("read_slot: slot beyond committed size");
    std::vector<float> out(config_.dim);
    const float* p = payload(b);
    const std::size_t g = config_.interleave_group;
    const float* base = p + (slot / g) * g * config_.dim + (slot % g);
    for (std::size_t d = 0; d < config_.dim; ++d) out[d] = base[d * g];
    return {ids(b)[slot], std::move(out)};
}

CentralMemoryPool::TraverseResult CentralMemoryPool::traverse_list(block_index head) const {
    TraverseResult result;
    block_index b = head;
    while (b != kNoBlock) {
        check_allocated(b);
        if (++result.blocks_visited > config_.num_blocks)
            throw CorruptListError("traverse_list: cycle detected");
        const std::uint32_t size = meta_[b].committed.load(std::memory_order_acquire);
        for (std::uint32_t s = 0; s < size; ++s) result.entries.push_back(read_slot(b, s));
        block_index nxt = meta_[b].next.load(std::memory_order_acquire);
        if (nxt != kNoBlock && !meta_[nxt].merged.load(std::memory_order_acquire)) ++result.hops;
        b = nxt;
    }
    return result;
}

std::size_t CentralMemoryPool::hop_count(block_index head) const {
    std::size_t hops = 0, visited = 0;
    for (block_index b = head; b != kNoBlock;) {
        check_allocated(b);
        if (++visited > config_.num_blocks)
            throw CorruptListError("hop_count: cycle detected");
        block_index nxt = meta_[b].next.load(std::memory_order_acquire);
        if (nxt != kNoBlock && !meta_[nxt].merged.load(std::memory_order_acquire)) ++hops;
        b = nxt;
    }
    return hops;
}

BlockHeader CentralMemoryPool::header(block_index b) const {
    check_allocated(b);
    BlockHeader h;
    h.prev = meta_[b].prev.load(std::memory_order_acquire);
    h.next = meta_[b].next.load(std::memory_order_acquire);
    h.capacity = static_cast<std::uint32_t>(config_.block_capacity);
    h.size = meta_[b].committed.load(std::memory_order_acquire);
    h.owner = meta_[b].owner.load(std::memory_order_acquire);
    h.merged_with_prev = meta_[b].merged.load(std::memory_order_acquire);
    return h;
}

bool CentralMemoryPool::enter_block(block_index b) const {
    // Register first, then check the flag: paired with the seq_cst
    // store/load in the rearrangement swap, either the mover sees our
    // registration or we see its flag (Dekker-style handshake).
    meta_[b].readers.fetch_add(1, std::memory_order_seq_cst);
    if (meta_[b].relocating.load(std::memory_order_seq_cst)) {
        meta_[b].readers.fetch_sub(1, std::memory_order_acq_rel);
        return false;
    }
    return true;
}

void CentralMemoryPool::leave_block(block_index b) const {
    meta_[b].readers.fetch_sub(1, std::memory_order_acq_rel);
}

void CentralMemoryPool::copy_block_data(block_index src, block_index dst) {
    std::memcpy(ids_mut(dst), ids(src), config_.block_capacity * sizeof(vector_id));
    std::memcpy(payload_mut(dst), payload(src), config_.payload_scalars() * sizeof(float));
    set_committed(dst, meta_[src].committed.load(std::memory_order_acquire));
}

bool CentralMemoryPool::try_acquire_scratch() {
    return !scratch_busy_.exchange(true, std::memory_order_acq_rel);
}

void CentralMemoryPool::release_scratch() {
    scratch_busy_.store(false, std::memory_order_release);
}

void CentralMemoryPool::save_to_scratch(block_index b) {
    std::memcpy(scratch_.ids.data(), ids(b), config_.block_capacity * sizeof(vector_id));
    std::memcpy(scratch_.payload.data(), payload(b), config_.payload_scalars() * sizeof(float));
    scratch_.committed = meta_[b].committed.load(std::memory_order_acquire);
}

void CentralMemoryPool::restore_from_scratch(block_index b) {
    std::memcpy(ids_mut(b), scratch_.ids.data(), config_.block_capacity * sizeof(vector_id));
    std::memcpy(payload_mut(b), scratch_.payload.data(), config_.payload_scalars() * sizeof(float));
    set_committed(b, scratch_.committed);
}

void CentralMemoryPool::dump(std::ostream& os) const {
    const std::size_t n = allocated_blocks();
    for (std::size_t i = 0; i < n; ++i) {
        const block_index b = static_cast<block_index>(i);
        const auto h = header(b);
        os << b << " prev=" << h.prev << " next=" << h.next << " size=" << h.size
           << " ids=";
        for (std::uint32_t s = 0; s < h.size; ++s) {
            if (s) os << ',';
            os << ids(b)[s];
        }
        os << '\n';
    }
}

}  // namespace blockivf
