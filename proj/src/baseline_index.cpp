#include "blockivf/baseline_index.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "blockivf/distance.hpp"
#include "blockivf/kmeans.hpp"
#include "blockivf/topk.hpp"

namespace blockivf {

BaselineIndex::BaselineIndex(std::span<const float> offline, std::size_t n, IndexConfig config)
    : config_(config) {
    if (config_.dim == 0) config_.dim = config_.pool.dim;
    config_.pool.dim = config_.dim;
    config_.validate();
    if (n < config_.num_clusters)
        throw std::invalid_argument("train: need at least num_clusters offline vectors");
    if (offline.size() != n * config_.dim)
        throw std::invalid_argument("train: offline extent does not match n * dim");

    auto km = kmeans(offline, n, config_.dim, config_.num_clusters, config_.kmeans_iters,
                     config_.kmeans_seed);
    centroids_ = std::move(km.centroids);
    lists_.resize(config_.num_clusters);
    for (std::size_t i = 0; i < n; ++i) {
        auto& list = lists_[km.assignment[i]];
        list.ids.push_back(static_cast<vector_id>(i));
        const float* src = offline.data() + i * config_.dim;
        list.payload.insert(list.payload.end(), src, src + config_.dim);
    }
    next_id_.store(static_cast<vector_id>(n), std::memory_order_relaxed);
}

cluster_id BaselineIndex::assign(std::span<const float> y) const {
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

std::vector<vector_id> BaselineIndex::insert(std::span<const float> vectors, std::size_t n,
                                             std::span<const vector_id> ids) {
    std::vector<vector_id> out(n, vector_id{-1});
    if (n == 0) return out;
    if (vectors.size() != n * config_.dim)
        throw std::invalid_argument("insert: vectors extent does not match n * dim");
    if (!ids.empty() && ids.size() != n)
        throw std::invalid_argument("insert: ids size does not match n");

    std::lock_guard<std::mutex> guard(extend_mutex_);
    const std::size_t dim = config_.dim;

    // Bucket incoming vectors into temporary per-cluster lists.
    std::vector<std::vector<std::size_t>> buckets(config_.num_clusters);
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = vectors.subspan(i * dim, dim);
        buckets[assign(y)].push_back(i);
    }
    vector_id base = -1;
    if (ids.empty()) base = next_id_.fetch_add(static_cast<vector_id>(n));

    // Extend each affected list: allocate old+new, copy old, append the
    // temporaries, free old.
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        if (buckets[c].empty()) continue;
        auto& list = lists_[c];
        const std::size_t old_n = list.ids.size();
        const std::size_t add_n = buckets[c].size();

        std::vector<float> fresh_payload;
        std::vector<vector_id> fresh_ids;
        fresh_payload.reserve((old_n + add_n) * dim);
        fresh_ids.reserve(old_n + add_n);
        reallocations_.fetch_add(1, std::memory_order_relaxed);

        fresh_payload.insert(fresh_payload.end(), list.payload.begin(), list.payload.end());
        fresh_ids.insert(fresh_ids.end(), list.ids.begin(), list.ids.end());
        scalars_copied_.fetch_add(old_n * dim, std::memory_order_relaxed);

        for (const std::size_t i : buckets[c]) {
            const float* src = vectors.data() + i * dim;
            fresh_payload.insert(fresh_payload.end(), src, src + dim);
            const vector_id id = ids.empty() ? base + static_cast<vector_id>(i) : ids[i];
            fresh_ids.push_back(id);
            out[i] = id;
        }
        scalars_copied_.fetch_add(add_n * dim, std::memory_order_relaxed);

        list.payload = std::move(fresh_payload);  // old space freed here
        list.ids = std::move(fresh_ids);
    }
    return out;
}

SearchResult BaselineIndex::search(std::span<const float> query, std::size_t k,
                                   std::size_t nprobe) const {
    const std::size_t dim = config_.dim;
    if (query.size() != dim) throw std::invalid_argument("search: dimension mismatch");
    if (k < 1) throw std::invalid_argument("search: k must be >= 1");
    if (nprobe < 1 || nprobe > config_.num_clusters)
        throw std::invalid_argument("search: nprobe out of [1, num_clusters]");

    std::lock_guard<std::mutex> guard(extend_mutex_);
    std::vector<std::pair<float, cluster_id>> by_dist(config_.num_clusters);
    for (std::size_t c = 0; c < config_.num_clusters; ++c) {
        by_dist[c] = {l2_sqr(query.data(), centroids_.data() + c * dim, dim),
                      static_cast<cluster_id>(c)};
    }
    std::partial_sort(by_dist.begin(), by_dist.begin() + nprobe, by_dist.end());

    TopK topk(k);
    for (std::size_t p = 0; p < nprobe; ++p) {
        const auto& list = lists_[by_dist[p].second];
        for (std::size_t i = 0; i < list.ids.size(); ++i) {
            topk.push(l2_sqr(query.data(), list.payload.data() + i * dim, dim), list.ids[i]);
        }
    }
    return topk.take_sorted();
}

std::size_t BaselineIndex::size() const {
    std::lock_guard<std::mutex> guard(extend_mutex_);
    std::size_t total = 0;
    for (const auto& list : lists_) total += list.ids.size();
    return total;
}

}  // namespace blockivf
