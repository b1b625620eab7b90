#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace blockivf {

/// A flat row-major collection of same-dimension float vectors.
struct Dataset {
    std::size_t dim = 0;
    std::vector<float> data;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const float> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }
    std::span<const float> all() const { return {data.data(), data.size()}; }
};

/// fvecs: per record, a 4-byte little-endian dimension then that many
/// little-endian float32 values. All records must agree on the dimension.
Dataset load_fvecs(const std::string& path);
void save_fvecs(const std::string& path, const Dataset& ds);

/// ivecs: same framing with int32 payloads. One vector of ids per record.
std::vector<std::vector<std::int32_t>> load_ivecs(const std::string& path);
void save_ivecs(const std::string& path, const std::vector<std::vector<std::int32_t>>& rows);

/// Seeded Gaussian-mixture generator: `components` spherical clusters spread
/// in the unit cube, so tests and desk-scale runs need no downloads.
Dataset synthetic_dataset(std::size_t n, std::size_t dim, std::size_t components,
                          std::uint64_t seed);

}  // namespace blockivf
