#include "blockivf/ivf_index.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include "blockivf/distance.hpp"
#include "blockivf/kmeans.hpp"
#include "blockivf/log.hpp"
#include "blockivf/topk.hpp"

namespace blockivf {

namespace {

IndexConfig normalized(IndexConfig cfg) {
    if (cfg.dim == 0) cfg.dim = cfg.pool.dim;
    cfg.pool.dim = cfg.dim;
    return cfg;
}

}  // namespace

void IndexConfig::validate() const {
    if (num_clusters < 1) throw std::invalid_argument("IndexConfig: num_clusters must be >= 1");
    if (nprobe_default < 1 || nprobe_default > num_clusters)
        throw std::invalid_argument("IndexConfig: nprobe_default out of [1, num_clusters]");
    if (rearrange_threshold < 1)
        throw std::invalid_argument("IndexConfig: rearrange_threshold must be >= 1");
    pool.validate();
}

ClusterIndex::ClusterIndex(IndexConfig config)
    : config_(normalized(std::move(config))),
      pool_(config_.pool,
            [](std::size_t used, std::size_t total) {
                log_warn("central pool utilization %zu/%zu exceeds watermark", used, total);
            }),
      online_(config_.num_clusters) {
    config_.validate();
    offline_.resize(config_.num_clusters);
}

ClusterIndex::ClusterIndex(std::span<const float> offline, std::size_t n, IndexConfig config)
    : ClusterIndex(std::move(config)) {
    if (n < config_.num_clusters)
        throw std::invalid_argument("train: need at least num_clusters offline vectors");
    if (offline.size() != n * config_.dim)
        throw std::invalid_argument("train: offline extent does not match n * dim");
    auto km = kmeans(offline, n, config_.dim, config_.num_clusters, config_.kmeans_iters,
                     config_.kmeans_seed);
    centroids_ = std::move(km.centroids);
    build_offline(offline, n, km.assignment);
    next_id_.store(static_cast<vector_id>(n), std::memory_order_relaxed);
    offline_ids_end_ = static_cast<vector_id>(n);
}

void ClusterIndex::build_offline(std::span<const float> offline, std::size_t n,
                                 const std::vector<std::uint32_t>& assignment) {
    const std::size_t dim = config_.dim;
    const std::size_t g = config_.pool.interleave_group;
    std::vector<std::size_t> counts(config_.num_clusters, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assignment[i]];
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        auto& seg = offline_[c];
        seg.count = 0;
        seg.ids.reserve(counts[c]);
        const std::size_t groups = (counts[c] + g - 1) / g;
        seg.payload.assign(groups * g * dim, 0.0f);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& seg = offline_[assignment[i]];
        const std::size_t slot = seg.count++;
        seg.ids.push_back(static_cast<vector_id>(i));
        const float* src = offline.data() + i * dim;
        float* base = seg.payload.data() + (slot / g) * g * dim + (slot % g);
        for (std::size_t d = 0; d < dim; ++d) base[d * g] = src[d];
    }
}

std::size_t ClusterIndex::size() const {
    std::size_t total = 0;
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        total += offline_[c].count;
        total += online_[c].length.load(std::memory_order_acquire);
    }
    return total;
}

cluster_id ClusterIndex::assign(std::span<const float> y) const {
    if (y.size() != config_.dim) throw std::invalid_argument("assign: dimension mismatch");
    float best = std::numeric_limits<float>::infinity();
    cluster_id best_c = 0;
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        const float d2 = l2_sqr(y.data(), centroids_.data() + c * config_.dim, config_.dim);
        if (d2 < best) {
            best = d2;
            best_c = static_cast<cluster_id>(c);
        }
    }
    return best_c;
}

bool ClusterIndex::is_duplicate_id(vector_id id) {
    if (id < 0) return true;
    std::lock_guard<std::mutex> guard(supplied_ids_mutex_);
    if (id < offline_ids_end_) return true;
    for (const auto& [begin, end] : auto_ranges_)
        if (id >= begin && id < end) return true;
    if (!supplied_ids_.insert(id).second) return true;
    // keep future auto-assigned ids clear of this one
    vector_id cur = next_id_.load(std::memory_order_relaxed);
    while (id >= cur &&
           !next_id_.compare_exchange_weak(cur, id + 1, std::memory_order_relaxed)) {
    }
    return false;
}

std::vector<vector_id> ClusterIndex::insert(std::span<const float> vectors, std::size_t n,
                                            std::span<const vector_id> ids) {
    std::vector<vector_id> out(n, vector_id{-1});
    if (n == 0) return out;
    if (vectors.size() != n * config_.dim)
        throw std::invalid_argument("insert: vectors extent does not match n * dim");
    if (!ids.empty() && ids.size() != n)
        throw std::invalid_argument("insert: ids size does not match n");

    std::shared_lock<std::shared_mutex> gate(insert_gate_);
    vector_id base = -1;
    if (ids.empty()) {
        base = next_id_.fetch_add(static_cast<vector_id>(n), std::memory_order_relaxed);
        std::lock_guard<std::mutex> guard(supplied_ids_mutex_);
        const auto end = base + static_cast<vector_id>(n);
        if (!auto_ranges_.empty() && auto_ranges_.back().second == base)
            auto_ranges_.back().second = end;
        else
            auto_ranges_.emplace_back(base, end);
    }

    std::size_t inserted = 0;
    bool exhausted = false;
    for (std::size_t i = 0; i < n; ++i) {
        vector_id id;
        if (ids.empty()) {
            id = base + static_cast<vector_id>(i);
        } else {
            id = ids[i];
            if (is_duplicate_id(id)) continue;  // reject this vector, keep going
        }
        const auto y = vectors.subspan(i * config_.dim, config_.dim);
        const cluster_id c = assign(y);
        if (place_vector(c, y, id)) {
            out[i] = id;
            ++inserted;
        } else {
            exhausted = true;
        }
    }
    if (exhausted) throw PoolExhaustedError(inserted);
    return out;
}

bool ClusterIndex::place_vector(cluster_id k, std::span<const float> y, vector_id id) {
    OnlineList& list = online_[k];
    const std::uint64_t cap = config_.pool.block_capacity;
    const std::uint64_t did = list.length.fetch_add(1, std::memory_order_relaxed);
    const std::uint64_t mid = did / cap;
    const std::uint64_t moff = did % cap;
    block_index b = kNoBlock;

    if (moff == 0) {
        // Designated writer: this slot opens block `mid`, so it allocates and
        // links it. Everyone else for the block awaits the publication.
        std::uint64_t packed;
        for (;;) {
            packed = list.tail_packed.load(std::memory_order_acquire);
            if ((packed & kFailBit) && tail_count(packed) <= mid) {
                list.length.fetch_sub(1, std::memory_order_relaxed);
                return false;
            }
            if (tail_count(packed) == mid) break;
            std::this_thread::yield();
        }
        block_index fresh;
        try {
            fresh = pool_.alloc_block();
        } catch (const PoolExhaustedError&) {
            list.tail_packed.store(packed | kFailBit, std::memory_order_release);
            list.length.fetch_sub(1, std::memory_order_relaxed);
            return false;
        }
        pool_.set_owner(fresh, static_cast<std::int32_t>(k));
        if (mid == 0) {
            list.head.store(fresh, std::memory_order_release);
        } else {
            pool_.link_blocks(tail_block(packed), fresh);
        }
        list.tail_packed.store(pack_tail(mid + 1, fresh), std::memory_order_release);
        b = fresh;
    } else {
        b = await_block(list, mid);
        if (b == kNoBlock) {
            list.length.fetch_sub(1, std::memory_order_relaxed);
            return false;
        }
    }

    pool_.write_slot(b, static_cast<std::size_t>(moff), id, y);
    scalars_copied_.fetch_add(config_.dim, std::memory_order_relaxed);
    pool_.publish_slot(b, static_cast<std::size_t>(moff));
    return true;
}

block_index ClusterIndex::await_block(OnlineList& list, std::uint64_t mid) {
    for (;;) {
        const std::uint64_t packed = list.tail_packed.load(std::memory_order_acquire);
        const std::uint64_t count = tail_count(packed);
        if (count > mid) {
            block_index b = tail_block(packed);
            for (std::uint64_t i = count - 1; i > mid; --i) b = pool_.prev(b);
            return b;
        }
        if (packed & kFailBit) return kNoBlock;
        std::this_thread::yield();
    }
}

template <class F>
void ClusterIndex::scan_online(cluster_id k, F&& per_block) const {
    const OnlineList& list = online_[k];
    block_index cur = kNoBlock;
    block_index b = list.head.load(std::memory_order_acquire);
    for (;;) {
        if (b == kNoBlock) {
            if (cur != kNoBlock) pool_.leave_block(cur);
            return;
        }
        if (!pool_.enter_block(b)) {
            // Block is being relocated; re-read the link, it will be remapped.
            std::this_thread::yield();
            b = (cur == kNoBlock) ? list.head.load(std::memory_order_acquire) : pool_.next(cur);
            continue;
        }
        const block_index expect =
            (cur == kNoBlock) ? list.head.load(std::memory_order_acquire) : pool_.next(cur);
        if (expect != b) {
            // The link changed between the read and the entry; follow it anew.
            pool_.leave_block(b);
            b = expect;
            continue;
        }
        if (cur != kNoBlock) pool_.leave_block(cur);
        per_block(b);
        cur = b;
        b = pool_.next(cur);
    }
}

SearchResult ClusterIndex::search(std::span<const float> query, std::size_t k,
                                  std::size_t nprobe) const {
    const std::size_t dim = config_.dim;
    const std::size_t n_clusters = config_.num_clusters;
    if (query.size() != dim) throw std::invalid_argument("search: dimension mismatch");
    if (k < 1) throw std::invalid_argument("search: k must be >= 1");
    if (nprobe < 1 || nprobe > n_clusters)
        throw std::invalid_argument("search: nprobe out of [1, num_clusters]");

    std::vector<std::pair<float, cluster_id>> by_dist(n_clusters);
    for (std::size_t c = 0; c < n_clusters; ++c) {
        by_dist[c] = {l2_sqr(query.data(), centroids_.data() + c * dim, dim),
                      static_cast<cluster_id>(c)};
    }
    std::partial_sort(by_dist.begin(), by_dist.begin() + nprobe, by_dist.end());

    const std::size_t g = config_.pool.interleave_group;
    TopK topk(k);
    for (std::size_t p = 0; p < nprobe; ++p) {
        const cluster_id c = by_dist[p].second;
        const auto& seg = offline_[c];
        for (std::size_t i = 0; i < seg.count; ++i) {
            const float* base = seg.payload.data() + (i / g) * g * dim + (i % g);
            topk.push(l2_sqr_strided(query.data(), base, g, dim), seg.ids[i]);
        }
        scan_online(c, [&](block_index b) {
            const std::uint32_t sz = pool_.committed(b);
            const float* payload = pool_.payload(b);
            const vector_id* bids = pool_.ids(b);
            for (std::uint32_t s = 0; s < sz; ++s) {
                const float* base = payload + (s / g) * g * dim + (s % g);
                topk.push(l2_sqr_strided(query.data(), base, g, dim), bids[s]);
            }
        });
    }
    return topk.take_sorted();
}

bool ClusterIndex::exceed(cluster_id k) const {
    // Eq. 3: sum of occupied slots across the list, strictly greater than T'_m.
    std::uint64_t sum = 0;
    std::size_t visited = 0;
    for (block_index b = online_[k].head.load(std::memory_order_acquire); b != kNoBlock;
         b = pool_.next(b)) {
        if (++visited > pool_.config().num_blocks) throw CorruptListError("exceed: cycle");
        sum += pool_.committed(b);
        if (sum > config_.rearrange_threshold) return true;
    }
    return sum > config_.rearrange_threshold;
}

std::size_t ClusterIndex::list_length(cluster_id k) const {
    return online_[k].length.load(std::memory_order_acquire);
}

std::size_t ClusterIndex::hop_count(cluster_id k) const {
    const block_index head = online_[k].head.load(std::memory_order_acquire);
    if (head == kNoBlock) return 0;
    return pool_.hop_count(head);
}

block_index ClusterIndex::online_head(cluster_id k) const {
    return online_[k].head.load(std::memory_order_acquire);
}

std::vector<RearrangeEvent> ClusterIndex::take_rearrange_events() {
    std::lock_guard<std::mutex> guard(events_mutex_);
    std::vector<RearrangeEvent> out;
    out.swap(events_);
    return out;
}

std::vector<std::pair<vector_id, std::vector<float>>> ClusterIndex::cluster_contents(
    cluster_id k) const {
    std::vector<std::pair<vector_id, std::vector<float>>> out;
    const auto& seg = offline_[k];
    const std::size_t dim = config_.dim;
    const std::size_t g = config_.pool.interleave_group;
    for (std::size_t i = 0; i < seg.count; ++i) {
        std::vector<float> v(dim);
        const float* base = seg.payload.data() + (i / g) * g * dim + (i % g);
        for (std::size_t d = 0; d < dim; ++d) v[d] = base[d * g];
        out.emplace_back(seg.ids[i], std::move(v));
    }
    const block_index head = online_[k].head.load(std::memory_order_acquire);
    if (head != kNoBlock) {
        auto t = pool_.traverse_list(head);
        for (auto& e : t.entries) out.push_back(std::move(e));
    }
    return out;
}

// --- rearrangement -----------------------------------------------------------

void ClusterIndex::remap_cluster_refs(cluster_id c, block_index a, block_index b) {
    auto remap = [&](block_index x) { return x == a ? b : (x == b ? a : x); };
    OnlineList& list = online_[c];
    const block_index h = list.head.load(std::memory_order_acquire);
    if (h == a || h == b) list.head.store(remap(h), std::memory_order_release);
    const std::uint64_t packed = list.tail_packed.load(std::memory_order_acquire);
    const block_index t = tail_block(packed);
    if (t == a || t == b) {
        const std::uint64_t fail = packed & kFailBit;
        list.tail_packed.store(pack_tail(tail_count(packed), remap(t)) | fail,
                               std::memory_order_release);
    }
}

bool ClusterIndex::swap_blocks(block_index a, block_index b) {
    if (a == b) return true;
    if (!pool_.try_acquire_scratch()) return false;

    pool_.set_relocating(a, true);
    pool_.set_relocating(b, true);
    while (pool_.reader_count(a) != 0 || pool_.reader_count(b) != 0)
        std::this_thread::yield();

    const block_index pa = pool_.prev(a), na = pool_.next(a);
    const block_index pb = pool_.prev(b), nb = pool_.next(b);
    const std::int32_t oa = pool_.owner(a), ob = pool_.owner(b);

    // Data first, headers last.
    pool_.save_to_scratch(a);
    pool_.copy_block_data(b, a);
    pool_.restore_from_scratch(b);

    auto remap = [&](block_index x) { return x == a ? b : (x == b ? a : x); };
    pool_.set_prev(a, remap(pb));
    pool_.set_next(a, remap(nb));
    pool_.set_owner(a, ob);
    pool_.set_prev(b, remap(pa));
    pool_.set_next(b, remap(na));
    pool_.set_owner(b, oa);
    // Runs around both slots were split beforehand; adjacency no longer holds
    // for the moved contents.
    pool_.set_merged_with_prev(a, false);
    pool_.set_merged_with_prev(b, false);

    if (pa != kNoBlock && pa != a && pa != b) pool_.set_next(pa, b);
    if (na != kNoBlock && na != a && na != b) pool_.set_prev(na, b);
    if (pb != kNoBlock && pb != a && pb != b) pool_.set_next(pb, a);
    if (nb != kNoBlock && nb != a && nb != b) pool_.set_prev(nb, a);

    if (oa >= 0) remap_cluster_refs(static_cast<cluster_id>(oa), a, b);
    if (ob >= 0 && ob != oa) remap_cluster_refs(static_cast<cluster_id>(ob), a, b);

    pool_.set_relocating(a, false);
    pool_.set_relocating(b, false);
    pool_.release_scratch();
    return true;
}

void ClusterIndex::split_runs_around(block_index x, std::deque<cluster_id>& work,
                                     std::vector<char>& queued) {
    auto enqueue_owner = [&](block_index blk) {
        const std::int32_t o = pool_.owner(blk);
        if (o < 0) return;
        const auto c = static_cast<cluster_id>(o);
        if (!queued[c]) {
            queued[c] = 1;
            work.push_back(c);
        }
    };
    if (pool_.merged_with_prev(x)) {
        pool_.set_merged_with_prev(x, false);
        enqueue_owner(x);
    }
    const block_index nx = pool_.next(x);
    if (nx != kNoBlock && pool_.merged_with_prev(nx)) {
        pool_.set_merged_with_prev(nx, false);
        enqueue_owner(x);
    }
}

void ClusterIndex::rearrange_locked(cluster_id k, RearrangeEvent& ev,
                                    std::deque<cluster_id>& work,
                                    std::vector<char>& queued) {
    const std::size_t allocated = pool_.allocated_blocks();
    block_index u = online_[k].head.load(std::memory_order_acquire);
    if (u == kNoBlock) return;
    std::size_t guard = 0;
    const std::size_t guard_cap = 4 * allocated + 64;
    while (guard++ < guard_cap) {
        const block_index v = pool_.next(u);
        if (v == kNoBlock) break;
        if (pool_.merged_with_prev(v)) {
            u = v;
            continue;
        }
        const block_index p = u + 1;
        if (static_cast<std::size_t>(p) >= allocated) {
            // Nothing physically after u; this gap cannot close.
            u = v;
            continue;
        }
        if (p == v) {
            pool_.set_merged_with_prev(v, true);
            ++ev.merges;
            u = v;
            continue;
        }
        split_runs_around(p, work, queued);
        split_runs_around(v, work, queued);
        if (!swap_blocks(p, v)) {
            // Scratch busy: skip this merge, never corrupt.
            u = v;
            continue;
        }
        pool_.set_merged_with_prev(p, true);
        ++ev.merges;
        u = p;
    }
}

void ClusterIndex::rearrange(cluster_id k) {
    if (k >= config_.num_clusters) throw std::out_of_range("rearrange: bad cluster");
    std::unique_lock<std::shared_mutex> gate(insert_gate_);

    RearrangeEvent ev;
    ev.cluster = k;
    ev.hops_before = hop_count(k);
    const auto t0 = std::chrono::steady_clock::now();

    std::deque<cluster_id> work;
    std::vector<char> queued(config_.num_clusters, 0);
    work.push_back(k);
    queued[k] = 1;
    std::size_t rounds = 0;
    while (!work.empty() && rounds++ < 2 * config_.num_clusters + 8) {
        const cluster_id c = work.front();
        work.pop_front();
        queued[c] = 0;
        rearrange_locked(c, ev, work, queued);
    }

    ev.hops_after = hop_count(k);
    ev.duration_us = std::chrono::duration<double, std::micro>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    {
        std::lock_guard<std::mutex> guard(events_mutex_);
        events_.push_back(ev);
    }
}

void ClusterIndex::rearrange_sweep() {
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        if (exceed(static_cast<cluster_id>(c))) rearrange(static_cast<cluster_id>(c));
    }
}

// --- snapshot ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'B', 'I', 'V', 'F', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("snapshot: truncated file");
    return v;
}

}  // namespace

void ClusterIndex::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("snapshot: cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic));
    put(os, kVersion);
    put(os, static_cast<std::uint64_t>(config_.num_clusters));
    put(os, static_cast<std::uint64_t>(config_.dim));
    put(os, static_cast<std::uint64_t>(config_.nprobe_default));
    put(os, static_cast<std::uint64_t>(config_.rearrange_threshold));
    put(os, static_cast<std::uint64_t>(config_.kmeans_iters));
    put(os, config_.kmeans_seed);
    put(os, static_cast<std::uint64_t>(config_.pool.num_blocks));
    put(os, static_cast<std::uint64_t>(config_.pool.block_capacity));
    put(os, static_cast<std::uint64_t>(config_.pool.interleave_group));
    put(os, config_.pool.alert_watermark);
    put(os, next_id_.load(std::memory_order_acquire));
    os.write(reinterpret_cast<const char*>(centroids_.data()),
             static_cast<std::streamsize>(centroids_.size() * sizeof(float)));

    // Online lists are flattened into the offline segments on save.
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        const auto contents = cluster_contents(static_cast<cluster_id>(c));
        put(os, static_cast<std::uint64_t>(contents.size()));
        for (const auto& [id, vec] : contents) {
            put(os, id);
            os.write(reinterpret_cast<const char*>(vec.data()),
                     static_cast<std::streamsize>(vec.size() * sizeof(float)));
        }
    }
    if (!os) throw std::runtime_error("snapshot: write failed for " + path);
}

std::unique_ptr<ClusterIndex> ClusterIndex::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("snapshot: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("snapshot: bad magic in " + path);
    if (get<std::uint32_t>(is) != kVersion)
        throw std::runtime_error("snapshot: unsupported version in " + path);

    IndexConfig cfg;
    cfg.num_clusters = get<std::uint64_t>(is);
    cfg.dim = get<std::uint64_t>(is);
    cfg.nprobe_default = get<std::uint64_t>(is);
    cfg.rearrange_threshold = get<std::uint64_t>(is);
    cfg.kmeans_iters = get<std::uint64_t>(is);
    cfg.kmeans_seed = get<std::uint64_t>(is);
    cfg.pool.num_blocks = get<std::uint64_t>(is);
    cfg.pool.block_capacity = get<std::uint64_t>(is);
    cfg.pool.interleave_group = get<std::uint64_t>(is);
    cfg.pool.alert_watermark = get<double>(is);
    const auto next_id = get<vector_id>(is);

    auto index = std::unique_ptr<ClusterIndex>(new ClusterIndex(cfg));
    index->centroids_.resize(cfg.num_clusters * cfg.dim);
    is.read(reinterpret_cast<char*>(index->centroids_.data()),
            static_cast<std::streamsize>(index->centroids_.size() * sizeof(float)));
    if (!is) throw std::runtime_error("snapshot: truncated centroids in " + path);

    const std::size_t dim = cfg.dim;
    const std::size_t g = cfg.pool.interleave_group;
    for (std::size_t c = 0; c < cfg.num_clusters; ++c) {
        auto& seg = index->offline_[c];
        const auto count = static_cast<std::size_t>(get<std::uint64_t>(is));
        const std::size_t groups = (count + g - 1) / g;
        seg.payload.assign(groups * g * dim, 0.0f);
        seg.ids.resize(count);
        seg.count = count;
        std::vector<float> row(dim);
        for (std::size_t i = 0; i < count; ++i) {
            seg.ids[i] = get<vector_id>(is);
            is.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(dim * sizeof(float)));
            if (!is) throw std::runtime_error("snapshot: truncated vectors in " + path);
            float* base = seg.payload.data() + (i / g) * g * dim + (i % g);
            for (std::size_t d = 0; d < dim; ++d) base[d * g] = row[d];
        }
    }
    index->next_id_.store(next_id, std::memory_order_release);
    // flattened contents carry every id ever handed out
    index->offline_ids_end_ = next_id;
    return index;
}

}  // namespace blockivf
