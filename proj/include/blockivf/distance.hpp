#pragma once

#include <cstddef>

namespace blockivf {

// Squared Euclidean distance. Accumulation is in ascending dimension order in
// both variants so contiguous and interleaved scans produce bit-identical
// sums (the exactness oracle compares distances, not just ids).

inline float l2_sqr(const float* a, const float* b, std::size_t dim) {
    float acc = 0.0f;
    for (std::size_t d = 0; d < dim; ++d) {
        const float t = a[d] - b[d];
        acc += t * t;
    }
    return acc;
}

/// `base` points at dimension 0 of a slot inside an interleaved group;
/// consecutive dimensions are `stride` scalars apart.
inline float l2_sqr_strided(const float* q, const float* base, std::size_t stride,
                            std::size_t dim) {
    float acc = 0.0f;
    for (std::size_t d = 0; d < dim; ++d) {
        const float t = q[d] - base[d * stride];
        acc += t * t;
    }
    return acc;
}

}  // namespace blockivf
