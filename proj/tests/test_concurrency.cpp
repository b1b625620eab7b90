#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <set>
#include <thread>

#include "blockivf/dataset.hpp"
#include "blockivf/distance.hpp"
#include "blockivf/ivf_index.hpp"
#include "blockivf/oracle.hpp"

using namespace blockivf;

namespace {

IndexConfig cfg_for(std::size_t dim, std::size_t clusters, std::size_t cap,
                    std::size_t blocks) {
    IndexConfig cfg;
    cfg.num_clusters = clusters;
    cfg.dim = dim;
    cfg.nprobe_default = clusters;
    cfg.kmeans_iters = 5;
    cfg.pool = PoolConfig{.num_blocks = blocks, .block_capacity = cap, .dim = dim};
    return cfg;
}

// Vector content derived from the id, so any read can be checked for tearing.
std::vector<float> vector_for_id(vector_id id, std::size_t dim) {
    std::vector<float> v(dim);
    for (std::size_t d = 0; d < dim; ++d)
        v[d] = static_cast<float>((id * 31 + static_cast<vector_id>(d) * 7) % 1009);
    return v;
}

}  // namespace

TEST_CASE("concurrent batches conserve counts and ids") {
    const std::size_t dim = 8, clusters = 8, threads = 4, per_thread = 500;
    auto base = synthetic_dataset(64, dim, clusters, 1);
    ClusterIndex index(base.all(), 64, cfg_for(dim, clusters, 16, 4096));

    std::size_t before = 0;
    for (std::size_t c = 0; c < clusters; ++c) before += index.list_length(c);

    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            std::vector<float> batch;
            std::vector<vector_id> ids;
            for (std::size_t i = 0; i < per_thread; ++i) {
                const auto id = static_cast<vector_id>(1000 + t * per_thread + i);
                const auto v = vector_for_id(id, dim);
                batch.insert(batch.end(), v.begin(), v.end());
                ids.push_back(id);
            }
            index.insert(batch, per_thread, ids);
        });
    }
    for (auto& w : workers) w.join();

    std::size_t after = 0;
    for (std::size_t c = 0; c < clusters; ++c) after += index.list_length(c);
    CHECK(after - before == threads * per_thread);

    // every inserted id present exactly once, with untorn content
    std::map<vector_id, std::vector<float>> seen;
    for (std::size_t c = 0; c < clusters; ++c) {
        for (auto& [id, vec] : index.cluster_contents(static_cast<cluster_id>(c))) {
            CHECK(seen.emplace(id, vec).second);
        }
    }
    for (std::size_t t = 0; t < threads; ++t) {
        for (std::size_t i = 0; i < per_thread; ++i) {
            const auto id = static_cast<vector_id>(1000 + t * per_thread + i);
            auto it = seen.find(id);
            REQUIRE(it != seen.end());
            CHECK(it->second == vector_for_id(id, dim));
        }
    }
}

TEST_CASE("searches concurrent with insertion never see torn vectors") {
    const std::size_t dim = 8, clusters = 4;
    auto base = synthetic_dataset(64, dim, clusters, 2);
    ClusterIndex index(base.all(), 64, cfg_for(dim, clusters, 8, 8192));

    std::atomic<bool> stop{false};
    std::atomic<std::size_t> checked{0};
    // the query equals an early-inserted vector, so it must surface with
    // distance zero once that insert is visible
    const auto query = vector_for_id(1005, dim);

    auto verify_one_search = [&] {
        const auto res = index.search(query, 20, clusters);
        std::set<vector_id> uniq(res.ids.begin(), res.ids.end());
        REQUIRE(uniq.size() == res.ids.size());
        for (std::size_t i = 1; i < res.distances.size(); ++i)
            REQUIRE(res.distances[i] >= res.distances[i - 1]);
        // any returned online id must carry exactly its derived content
        for (std::size_t i = 0; i < res.ids.size(); ++i) {
            if (res.ids[i] < 1000) continue;  // offline base vector
            const auto expect = vector_for_id(res.ids[i], dim);
            REQUIRE(res.distances[i] == l2_sqr(query.data(), expect.data(), dim));
            checked.fetch_add(1, std::memory_order_relaxed);
        }
        return res;
    };

    std::thread searcher([&] {
        while (!stop.load(std::memory_order_acquire)) verify_one_search();
    });

    std::vector<std::thread> writers;
    for (std::size_t t = 0; t < 3; ++t) {
        writers.emplace_back([&, t] {
            for (std::size_t i = 0; i < 400; ++i) {
                const auto id = static_cast<vector_id>(1000 + t * 400 + i);
                const auto v = vector_for_id(id, dim);
                index.insert(v, 1, std::vector<vector_id>{id});
            }
        });
    }
    for (auto& w : writers) w.join();
    stop.store(true, std::memory_order_release);
    searcher.join();

    // quiesced: the query's twin must rank first at distance zero
    const auto final_res = verify_one_search();
    REQUIRE(!final_res.ids.empty());
    CHECK(final_res.ids.front() == 1005);
    CHECK(final_res.distances.front() == 0.0f);
    CHECK(checked.load() > 0);

    std::size_t total = 0;
    for (std::size_t c = 0; c < clusters; ++c) total += index.list_length(c);
    CHECK(total == 1200);
}

TEST_CASE("searches concurrent with rearrangement stay exact") {
    const std::size_t dim = 4, clusters = 4;
    auto base = synthetic_dataset(32, dim, clusters, 3);
    ClusterIndex index(base.all(), 32, cfg_for(dim, clusters, 2, 2048));

    // fragment the lists with interleaved single inserts
    auto extra = synthetic_dataset(240, dim, clusters, 4);
    for (std::size_t i = 0; i < extra.size(); ++i) index.insert(extra.row(i), 1);

    // frozen oracle: content does not change during rearrangement
    std::vector<std::pair<vector_id, std::vector<float>>> contents;
    for (std::size_t c = 0; c < clusters; ++c) {
        auto part = index.cluster_contents(static_cast<cluster_id>(c));
        contents.insert(contents.end(), part.begin(), part.end());
    }
    auto queries = synthetic_dataset(8, dim, clusters, 5);
    std::vector<SearchResult> truth;
    for (std::size_t q = 0; q < queries.size(); ++q)
        truth.push_back(exact_knn_pairs(contents, queries.row(q), 10));

    std::atomic<bool> stop{false};
    std::atomic<std::size_t> rounds{0};
    std::thread searcher([&] {
        while (!stop.load(std::memory_order_acquire)) {
            for (std::size_t q = 0; q < queries.size(); ++q) {
                const auto got = index.search(queries.row(q), 10, clusters);
                REQUIRE(got.ids == truth[q].ids);
                REQUIRE(got.distances == truth[q].distances);
            }
            rounds.fetch_add(1, std::memory_order_relaxed);
        }
    });

    // the single rearrangement worker churns the physical layout
    for (int sweep = 0; sweep < 6; ++sweep) {
        for (std::size_t c = 0; c < clusters; ++c)
            index.rearrange(static_cast<cluster_id>(c));
    }
    // let the searcher observe the final layout a few times too
    const std::size_t target = rounds.load() + 3;
    while (rounds.load() < target) std::this_thread::yield();
    stop.store(true, std::memory_order_release);
    searcher.join();
    CHECK(rounds.load() >= 3);
}

TEST_CASE("insertions interleaved with rearrangement keep every vector reachable") {
    const std::size_t dim = 4, clusters = 3;
    auto base = synthetic_dataset(24, dim, clusters, 6);
    ClusterIndex index(base.all(), 24, cfg_for(dim, clusters, 2, 4096));

    // Bounded sweeps with a gap between them: a tight exclusive-lock loop
    // would starve the shared-lock inserters on a writer-preferring rwlock.
    std::atomic<bool> stop{false};
    std::thread rearranger([&] {
        for (int sweep = 0; sweep < 40 && !stop.load(std::memory_order_acquire); ++sweep) {
            for (std::size_t c = 0; c < clusters; ++c)
                index.rearrange(static_cast<cluster_id>(c));
            std::this_thread::sleep_for(std::chrono::microseconds(500));
        }
    });

    std::vector<std::thread> writers;
    for (std::size_t t = 0; t < 2; ++t) {
        writers.emplace_back([&, t] {
            for (std::size_t i = 0; i < 300; ++i) {
                const auto id = static_cast<vector_id>(500 + t * 300 + i);
                index.insert(vector_for_id(id, dim), 1, std::vector<vector_id>{id});
            }
        });
    }
    for (auto& w : writers) w.join();
    stop.store(true, std::memory_order_release);
    rearranger.join();

    std::set<vector_id> ids;
    for (std::size_t c = 0; c < clusters; ++c)
        for (auto& [id, vec] : index.cluster_contents(static_cast<cluster_id>(c))) {
            CHECK(ids.insert(id).second);
            if (id >= 500) CHECK(vec == vector_for_id(id, dim));
        }
    CHECK(ids.size() == 24 + 600);
}
