#include "blockivf/dataset.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace blockivf {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::uint64_t offset,
                             const std::string& what) {
    throw std::runtime_error(path + ": " + what + " at byte offset " +
                             std::to_string(offset));
}

template <class Scalar>
std::vector<std::vector<Scalar>> load_vecs(const std::string& path, bool require_same_dim) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<Scalar>> rows;
    std::uint64_t offset = 0;
    std::int32_t first_dim = -1;
    for (;;) {
        std::int32_t d = 0;
        is.read(reinterpret_cast<char*>(&d), sizeof(d));
        if (is.gcount() == 0 && is.eof()) break;
        if (is.gcount() != sizeof(d)) parse_fail(path, offset, "truncated record header");
        if (d <= 0) parse_fail(path, offset, "non-positive dimension");
        if (require_same_dim) {
            if (first_dim < 0)
                first_dim = d;
            else if (d != first_dim)
                parse_fail(path, offset,
                           "inconsistent dimension (" + std::to_string(d) + " vs " +
                               std::to_string(first_dim) + ")");
        }
        offset += sizeof(d);
        std::vector<Scalar> row(static_cast<std::size_t>(d));
        is.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(Scalar)));
        if (is.gcount() != static_cast<std::streamsize>(row.size() * sizeof(Scalar)))
            parse_fail(path, offset, "truncated record payload");
        offset += row.size() * sizeof(Scalar);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

Dataset load_fvecs(const std::string& path) {
    auto rows = load_vecs<float>(path, /*require_same_dim=*/true);
    Dataset ds;
    if (rows.empty()) return ds;
    ds.dim = rows.front().size();
    ds.data.reserve(rows.size() * ds.dim);
    for (const auto& r : rows) ds.data.insert(ds.data.end(), r.begin(), r.end());
    return ds;
}

void save_fvecs(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    const auto d = static_cast<std::int32_t>(ds.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os.write(reinterpret_cast<const char*>(&d), sizeof(d));
        os.write(reinterpret_cast<const char*>(ds.data.data() + i * ds.dim),
                 static_cast<std::streamsize>(ds.dim * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<std::vector<std::int32_t>> load_ivecs(const std::string& path) {
    return load_vecs<std::int32_t>(path, /*require_same_dim=*/false);
}

void save_ivecs(const std::string& path, const std::vector<std::vector<std::int32_t>>& rows) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& row : rows) {
        const auto d = static_cast<std::int32_t>(row.size());
        os.write(reinterpret_cast<const char*>(&d), sizeof(d));
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(std::int32_t)));
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

Dataset synthetic_dataset(std::size_t n, std::size_t dim, std::size_t components,
                          std::uint64_t seed) {
    if (dim == 0 || components == 0) throw std::invalid_argument("synthetic_dataset: bad shape");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> center(0.0f, 100.0f);
    std::normal_distribution<float> noise(0.0f, 3.0f);

    std::vector<float> centers(components * dim);
    for (auto& c : centers) c = center(rng);

    Dataset ds;
    ds.dim = dim;
    ds.data.resize(n * dim);
    std::uniform_int_distribution<std::size_t> pick(0, components - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = pick(rng);
        for (std::size_t d = 0; d < dim; ++d)
            ds.data[i * dim + d] = centers[c * dim + d] + noise(rng);
    }
    return ds;
}

}  // namespace blockivf
