#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blockivf {

using vector_id = std::int64_t;
using block_index = std::int32_t;
using cluster_id = std::uint32_t;

inline constexpr block_index kNoBlock = -1;

/// Thrown when the pre-partitioned central pool has no free block left.
/// Carries how many vectors of the failing batch were inserted before the
/// pool ran out.
class PoolExhaustedError : public std::runtime_error {
public:
    explicit PoolExhaustedError(std::size_t inserted)
        : std::runtime_error("central memory pool exhausted after inserting " +
                             std::to_string(inserted) + " vectors of the batch"),
          inserted_(inserted) {}

    std::size_t inserted() const noexcept { return inserted_; }

private:
    std::size_t inserted_;
};

/// Thrown when a linked block list is found to be structurally invalid
/// (cycle, dangling link).
class CorruptListError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace blockivf
