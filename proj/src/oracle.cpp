#include "blockivf/oracle.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "blockivf/distance.hpp"

namespace blockivf {

SearchResult exact_knn(std::span<const float> base, std::size_t n, std::size_t dim,
                       std::span<const float> query, std::size_t k) {
    if (query.size() != dim) throw std::invalid_argument("exact_knn: dimension mismatch");
    std::vector<std::pair<float, vector_id>> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        all[i] = {l2_sqr(query.data(), base.data() + i * dim, dim),
                  static_cast<vector_id>(i)};
    }
    std::sort(all.begin(), all.end());
    const std::size_t take = std::min(k, n);
    SearchResult out;
    out.ids.reserve(take);
    out.distances.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.distances.push_back(all[i].first);
        out.ids.push_back(all[i].second);
    }
    return out;
}

SearchResult exact_knn_pairs(
    const std::vector<std::pair<vector_id, std::vector<float>>>& entries,
    std::span<const float> query, std::size_t k) {
    std::vector<std::pair<float, vector_id>> all;
    all.reserve(entries.size());
    for (const auto& [id, vec] : entries) {
        if (vec.size() != query.size())
            throw std::invalid_argument("exact_knn_pairs: dimension mismatch");
        all.emplace_back(l2_sqr(query.data(), vec.data(), query.size()), id);
    }
    std::sort(all.begin(), all.end());
    const std::size_t take = std::min(k, all.size());
    SearchResult out;
    for (std::size_t i = 0; i < take; ++i) {
        out.distances.push_back(all[i].first);
        out.ids.push_back(all[i].second);
    }
    return out;
}

double recall_at_k(const std::vector<SearchResult>& results,
                   const std::vector<SearchResult>& oracle, std::size_t k) {
    if (results.size() != oracle.size())
        throw std::invalid_argument("recall_at_k: mismatched query counts");
    if (results.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        std::unordered_set<vector_id> truth(oracle[q].ids.begin(), oracle[q].ids.end());
        std::size_t hits = 0;
        for (const vector_id id : results[q].ids)
            if (truth.count(id)) ++hits;
        total += static_cast<double>(hits) / static_cast<double>(k);
    }
    return total / static_cast<double>(results.size());
}

}  // namespace blockivf
