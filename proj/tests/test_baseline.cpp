#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockivf/baseline_index.hpp"
#include "blockivf/dataset.hpp"
#include "blockivf/ivf_index.hpp"

using namespace blockivf;

namespace {

IndexConfig cfg_for(std::size_t dim, std::size_t clusters) {
    IndexConfig cfg;
    cfg.num_clusters = clusters;
    cfg.dim = dim;
    cfg.nprobe_default = clusters;
    cfg.kmeans_iters = 15;
    cfg.pool = PoolConfig{.num_blocks = 4096, .block_capacity = 8, .dim = dim};
    return cfg;
}

}  // namespace

TEST_CASE("extending a 1000-vector cluster copies at least 1000*D scalars") {
    const std::size_t dim = 8;
    // single cluster so every vector lands in one list
    auto ds = synthetic_dataset(1000, dim, 1, 7);
    BaselineIndex index(ds.all(), ds.size(), cfg_for(dim, 1));
    const auto before = index.scalars_copied();
    const auto reallocs_before = index.reallocations();
    auto one = synthetic_dataset(1, dim, 1, 8);
    index.insert(one.all(), 1);
    CHECK(index.scalars_copied() - before >= 1000 * dim);
    CHECK(index.reallocations() - reallocs_before == 1);
}

TEST_CASE("extend copies exactly (old + new) * D scalars per affected cluster") {
    const std::size_t dim = 4;
    const std::vector<float> pts = {0, 0, 0, 0, 100, 100, 100, 100};
    BaselineIndex index(pts, 2, cfg_for(dim, 2));

    // old list holds 1 vector: copied = (1 + 1) * D
    const auto before = index.scalars_copied();
    auto got = index.insert(std::vector<float>{100, 100, 100, 99}, 1);
    CHECK(index.scalars_copied() - before == 2 * dim);
    CHECK(got.front() == 2);

    // now 2 vectors there: copied = (2 + 3) * D for a 3-vector batch
    const auto mid = index.scalars_copied();
    const std::vector<float> three = {100, 100, 100, 98, 100, 100, 100, 97, 100, 100, 100, 96};
    index.insert(three, 3);
    CHECK(index.scalars_copied() - mid == 5 * dim);
}

TEST_CASE("baseline and block backends return identical results at full probe") {
    const std::size_t dim = 12;
    auto ds = synthetic_dataset(600, dim, 8, 17);
    auto cfg = cfg_for(dim, 8);
    ClusterIndex block(ds.all(), ds.size(), cfg);
    BaselineIndex baseline(ds.all(), ds.size(), cfg);

    auto extra = synthetic_dataset(200, dim, 8, 18);
    // identical insertion sequences
    for (std::size_t i = 0; i < extra.size(); i += 50) {
        block.insert({extra.data.data() + i * dim, 50 * dim}, 50);
        baseline.insert({extra.data.data() + i * dim, 50 * dim}, 50);
    }
    CHECK(block.size() == baseline.size());

    auto queries = synthetic_dataset(20, dim, 8, 19);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto a = block.search(queries.row(q), 10, 8);
        const auto b = baseline.search(queries.row(q), 10, 8);
        CHECK(a.ids == b.ids);
        CHECK(a.distances == b.distances);
    }
}

TEST_CASE("baseline honors supplied ids and assigns auto ids") {
    const std::size_t dim = 4;
    auto ds = synthetic_dataset(50, dim, 4, 27);
    BaselineIndex index(ds.all(), ds.size(), cfg_for(dim, 4));
    auto more = synthetic_dataset(3, dim, 4, 28);
    const std::vector<vector_id> ids = {500, 600, 700};
    CHECK(index.insert(more.all(), 3, ids) == ids);
    const auto auto_ids = index.insert(more.all(), 3);
    CHECK(auto_ids.size() == 3);
    for (auto id : auto_ids) CHECK(id >= 50);
}

TEST_CASE("block insert cost is flat while baseline cost grows with the list") {
    const std::size_t dim = 8;
    auto ds = synthetic_dataset(64, dim, 1, 37);
    auto cfg = cfg_for(dim, 1);
    cfg.pool.num_blocks = 1 << 14;
    cfg.pool.block_capacity = 64;
    ClusterIndex block(ds.all(), ds.size(), cfg);
    BaselineIndex baseline(ds.all(), ds.size(), cfg);

    auto grow = synthetic_dataset(2000, dim, 1, 38);
    block.insert(grow.all(), grow.size());
    baseline.insert(grow.all(), grow.size());

    auto one = synthetic_dataset(1, dim, 1, 39);
    const auto b0 = block.scalars_copied();
    block.insert(one.all(), 1);
    CHECK(block.scalars_copied() - b0 == dim);  // exactly D, independent of list length

    const auto c0 = baseline.scalars_copied();
    baseline.insert(one.all(), 1);
    CHECK(baseline.scalars_copied() - c0 >= 2064 * dim);  // the whole old list again
}
