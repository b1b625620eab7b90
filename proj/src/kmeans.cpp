#include "blockivf/kmeans.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <random>
#include <stdexcept>

#include "blockivf/distance.hpp"

namespace blockivf {

namespace {

// Weighted pick by prefix sums; avoids std::discrete_distribution so the
// sampling sequence is fully pinned by the engine.
std::size_t pick_weighted(const std::vector<double>& weights, double total,
                          std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, total);
    const double r = u(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (r <= acc) return i;
    }
    return weights.size() - 1;
}

}  // namespace

KMeansResult kmeans(std::span<const float> points, std::size_t n, std::size_t dim,
                    std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (n < k) throw std::invalid_argument("kmeans: need at least k points");
    if (points.size() != n * dim) throw std::invalid_argument("kmeans: bad points extent");

    std::mt19937_64 rng(seed);
    KMeansResult res;
    res.centroids.assign(k * dim, 0.0f);
    res.assignment.assign(n, 0);

    // k-means++ seeding
    {
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        const std::size_t c0 = first(rng);
        std::memcpy(res.centroids.data(), points.data() + c0 * dim, dim * sizeof(float));
        std::vector<double> min_d2(n, 0.0);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            min_d2[i] = l2_sqr(points.data() + i * dim, res.centroids.data(), dim);
            total += min_d2[i];
        }
        for (std::size_t c = 1; c < k; ++c) {
            std::size_t pick;
            if (total <= 0.0) {
                std::uniform_int_distribution<std::size_t> any(0, n - 1);
                pick = any(rng);
            } else {
                pick = pick_weighted(min_d2, total, rng);
            }
            float* cent = res.centroids.data() + c * dim;
            std::memcpy(cent, points.data() + pick * dim, dim * sizeof(float));
            total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d2 = l2_sqr(points.data() + i * dim, cent, dim);
                if (d2 < min_d2[i]) min_d2[i] = d2;
                total += min_d2[i];
            }
        }
    }

    std::vector<double> sums(k * dim);
    std::vector<std::size_t> counts(k);
    std::vector<std::uint32_t> prev_assign(n, std::numeric_limits<std::uint32_t>::max());

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        res.iters_run = iter + 1;
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const float* p = points.data() + i * dim;
            float best = std::numeric_limits<float>::infinity();
            std::uint32_t best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const float d2 = l2_sqr(p, res.centroids.data() + c * dim, dim);
                if (d2 < best) {
                    best = d2;
                    best_c = static_cast<std::uint32_t>(c);
                }
            }
            res.assignment[i] = best_c;
            if (best_c != prev_assign[i]) changed = true;
        }
        if (!changed) break;
        prev_assign = res.assignment;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t c = res.assignment[i];
            const float* p = points.data() + i * dim;
            double* s = sums.data() + c * dim;
            for (std::size_t d = 0; d < dim; ++d) s[d] += p[d];
            ++counts[c];
        }

        // Empty-cluster repair: hand the farthest member of the largest
        // cluster to each empty one.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t big = std::max_element(counts.begin(), counts.end()) - counts.begin();
            if (counts[big] <= 1) continue;
            float far_d = -1.0f;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.assignment[i] != big) continue;
                const float d2 =
                    l2_sqr(points.data() + i * dim, res.centroids.data() + big * dim, dim);
                if (d2 > far_d) {
                    far_d = d2;
                    far_i = i;
                }
            }
            const float* p = points.data() + far_i * dim;
            for (std::size_t d = 0; d < dim; ++d) {
                sums[big * dim + d] -= p[d];
                sums[c * dim + d] += p[d];
            }
            --counts[big];
            ++counts[c];
            res.assignment[far_i] = static_cast<std::uint32_t>(c);
        }

        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            float* cent = res.centroids.data() + c * dim;
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t d = 0; d < dim; ++d)
                cent[d] = static_cast<float>(sums[c * dim + d] * inv);
        }
    }
    return res;
}

}  // namespace blockivf
