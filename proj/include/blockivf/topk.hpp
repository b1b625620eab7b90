#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "blockivf/types.hpp"
#include "blockivf/vector_index.hpp"

namespace blockivf {

/// Bounded top-k collector over (distance, id) pairs. Keeps the k smallest
/// under lexicographic order, so equal distances resolve by ascending id.
class TopK {
public:
    explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

    void push(float dist, vector_id id) {
        const std::pair<float, vector_id> cand{dist, id};
        if (heap_.size() < k_) {
            heap_.push_back(cand);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (cand < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = cand;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    std::size_t size() const { return heap_.size(); }

    SearchResult take_sorted() {
        std::sort_heap(heap_.begin(), heap_.end());
        SearchResult out;
        out.ids.reserve(heap_.size());
        out.distances.reserve(heap_.size());
        for (const auto& [d, id] : heap_) {
            out.distances.push_back(d);
            out.ids.push_back(id);
        }
        heap_.clear();
        return out;
    }

private:
    std::size_t k_;
    std::vector<std::pair<float, vector_id>> heap_;
};

}  // namespace blockivf
