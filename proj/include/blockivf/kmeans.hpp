#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace blockivf {

struct KMeansResult {
    std::vector<float> centroids;         ///< k * dim, row-major
    std::vector<std::uint32_t> assignment;  ///< one cluster id per input row
    std::size_t iters_run = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a fixed seed.
/// Stops early once assignments stabilize; empty clusters are repaired by
/// splitting the largest cluster at its farthest member.
KMeansResult kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                    std::size_t k, std::size_t max_iters, std::uint64_t seed);

}  // namespace blockivf
