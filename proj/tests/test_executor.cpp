#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "blockivf/dataset.hpp"
#include "blockivf/executor.hpp"
#include "blockivf/ivf_index.hpp"

#include <nlohmann/json.hpp>

using namespace blockivf;
using namespace std::chrono_literals;

namespace {

IndexConfig small_cfg(std::size_t dim = 8, std::size_t clusters = 4) {
    IndexConfig cfg;
    cfg.num_clusters = clusters;
    cfg.dim = dim;
    cfg.nprobe_default = clusters;
    cfg.kmeans_iters = 8;
    cfg.pool = PoolConfig{.num_blocks = 4096, .block_capacity = 16, .dim = dim};
    return cfg;
}

/// Test double that stretches request durations so lane occupancy is
/// deterministic even on a single-core machine.
class SlowIndex final : public VectorIndex {
public:
    SlowIndex(VectorIndex& inner, std::chrono::milliseconds search_delay,
              std::chrono::milliseconds insert_delay)
        : inner_(inner), search_delay_(search_delay), insert_delay_(insert_delay) {}

    std::vector<vector_id> insert(std::span<const float> vectors, std::size_t n,
                                  std::span<const vector_id> ids) override {
        std::this_thread::sleep_for(insert_delay_);
        return inner_.insert(vectors, n, ids);
    }
    SearchResult search(std::span<const float> query, std::size_t k,
                        std::size_t nprobe) const override {
        std::this_thread::sleep_for(search_delay_);
        return inner_.search(query, k, nprobe);
    }
    cluster_id assign(std::span<const float> y) const override { return inner_.assign(y); }
    std::size_t dim() const override { return inner_.dim(); }
    std::size_t num_clusters() const override { return inner_.num_clusters(); }
    std::size_t size() const override { return inner_.size(); }
    std::uint64_t scalars_copied() const override { return inner_.scalars_copied(); }
    std::uint64_t reallocations() const override { return inner_.reallocations(); }

private:
    VectorIndex& inner_;
    std::chrono::milliseconds search_delay_;
    std::chrono::milliseconds insert_delay_;
};

ExecutorConfig exec_cfg(std::size_t lanes, std::size_t multiple = 128,
                        std::size_t cap = 1024,
                        std::chrono::milliseconds interval = 10s) {
    ExecutorConfig cfg;
    cfg.num_lanes = lanes;
    cfg.batch_multiple = multiple;
    cfg.batch_cap = cap;
    cfg.batch_flush_interval = interval;
    return cfg;
}

}  // namespace

TEST_CASE("a single search passes through to the index") {
    auto ds = synthetic_dataset(200, 8, 4, 1);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2));

    auto queries = synthetic_dataset(1, 8, 4, 2);
    auto ticket = exec.submit_search(queries.all(), 1, 5, 4);
    const auto& r = ticket.get();
    CHECK(r.status == TicketStatus::Done);
    REQUIRE(r.searches.size() == 1);

    const auto direct = index.search(queries.row(0), 5, 4);
    CHECK(r.searches[0].ids == direct.ids);
    CHECK(r.searches[0].distances == direct.distances);
    CHECK(r.lane >= 0);
    CHECK(r.latency_us >= r.exec_us);
    exec.shutdown();
}

TEST_CASE("the lane pool admits num_lanes searches and rejects the next") {
    auto ds = synthetic_dataset(100, 8, 4, 3);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    SlowIndex slow(index, 200ms, 0ms);
    Executor exec(slow, exec_cfg(2));

    auto queries = synthetic_dataset(3, 8, 4, 4);
    auto t1 = exec.submit_search({queries.data.data(), 8}, 1, 3, 4);
    auto t2 = exec.submit_search({queries.data.data() + 8, 8}, 1, 3, 4);
    auto t3 = exec.submit_search({queries.data.data() + 16, 8}, 1, 3, 4);

    CHECK(t3.rejected());                 // immediate, no queueing
    CHECK(t3.get().latency_us < 50000.0);  // resolved right away
    CHECK(t1.get().status == TicketStatus::Done);
    CHECK(t2.get().status == TicketStatus::Done);
    CHECK(exec.rejected_count() == 1);
    exec.shutdown();
}

TEST_CASE("insertions flush when the pending count reaches the multiple") {
    auto ds = synthetic_dataset(100, 8, 4, 5);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2, /*multiple=*/16, /*cap=*/1024, /*interval=*/10s));

    auto vecs = synthetic_dataset(16, 8, 4, 6);
    std::vector<Ticket> tickets;
    for (std::size_t i = 0; i < 16; ++i)
        tickets.push_back(exec.submit_insert(vecs.row(i), 1));
    for (auto& t : tickets) {
        const auto& r = t.get();
        CHECK(r.status == TicketStatus::Done);
        CHECK(r.latency_us < 5'000'000.0);  // flushed well before the 10s interval
    }
    CHECK(exec.largest_flush() == 16);
    CHECK(index.size() == 100 + 16);
    exec.shutdown();
}

TEST_CASE("a short batch flushes once the interval elapses") {
    auto ds = synthetic_dataset(100, 8, 4, 7);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2, /*multiple=*/1000, /*cap=*/1024, /*interval=*/200ms));

    auto vecs = synthetic_dataset(5, 8, 4, 8);
    std::vector<Ticket> tickets;
    for (std::size_t i = 0; i < 5; ++i) tickets.push_back(exec.submit_insert(vecs.row(i), 1));
    for (auto& t : tickets) {
        const auto& r = t.get();
        CHECK(r.status == TicketStatus::Done);
        CHECK(r.latency_us >= 100'000.0);    // waited for the timer
        CHECK(r.latency_us < 2'000'000.0);
    }
    CHECK(index.size() == 105);
    exec.shutdown();
}

TEST_CASE("flushes never exceed the cap") {
    auto ds = synthetic_dataset(100, 8, 4, 9);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2, /*multiple=*/16, /*cap=*/32, /*interval=*/10s));

    auto vecs = synthetic_dataset(100, 8, 4, 10);
    auto ticket = exec.submit_insert(vecs.all(), 100);
    const auto& r = ticket.get();
    CHECK(r.status == TicketStatus::Done);
    CHECK(r.inserted_ids.size() == 100);
    CHECK(exec.largest_flush() <= 32);
    CHECK(index.size() == 200);
    exec.shutdown();
}

TEST_CASE("manual flush dispatches a small pending batch immediately") {
    auto ds = synthetic_dataset(100, 8, 4, 11);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2, 1000, 1024, 10s));
    auto vecs = synthetic_dataset(3, 8, 4, 12);
    auto t = exec.submit_insert(vecs.all(), 3);
    exec.flush_insertions();
    CHECK(t.get().status == TicketStatus::Done);
    CHECK(index.size() == 103);
    exec.shutdown();
}

TEST_CASE("parallel mode lets an insertion finish during a long search") {
    auto ds = synthetic_dataset(100, 8, 4, 13);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    SlowIndex slow(index, 400ms, 0ms);
    auto cfg = exec_cfg(2, /*multiple=*/1, /*cap=*/1024, /*interval=*/10s);
    Executor exec(slow, cfg);

    auto queries = synthetic_dataset(1, 8, 4, 14);
    auto vecs = synthetic_dataset(1, 8, 4, 15);
    auto search_ticket = exec.submit_search(queries.all(), 1, 3, 4);
    auto insert_ticket = exec.submit_insert(vecs.all(), 1);

    const auto& ir = insert_ticket.get();
    const auto& sr = search_ticket.get();
    CHECK(ir.status == TicketStatus::Done);
    CHECK(sr.status == TicketStatus::Done);
    // the insertion started (and here, even finished) before the search ended
    CHECK(ir.start_time < sr.end_time);
    CHECK(ir.end_time < sr.end_time);
    exec.shutdown();
}

TEST_CASE("serialized mode runs FIFO on one lane") {
    auto ds = synthetic_dataset(100, 8, 4, 16);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    SlowIndex slow(index, 100ms, 100ms);
    auto cfg = exec_cfg(2);
    cfg.mode = ExecutionMode::Serialized;
    Executor exec(slow, cfg);

    auto vecs = synthetic_dataset(1, 8, 4, 17);
    auto queries = synthetic_dataset(1, 8, 4, 18);
    auto insert_ticket = exec.submit_insert(vecs.all(), 1);
    auto search_ticket = exec.submit_search(queries.all(), 1, 3, 4);

    const auto& ir = insert_ticket.get();
    const auto& sr = search_ticket.get();
    // insertion was ahead in the queue: the search starts only after it ends
    CHECK(sr.start_time >= ir.end_time);
    CHECK(sr.lane == 0);
    exec.shutdown();
}

TEST_CASE("both modes produce identical results with quiesced interleaving") {
    auto ds = synthetic_dataset(300, 8, 4, 19);
    auto vecs = synthetic_dataset(64, 8, 4, 20);
    auto queries = synthetic_dataset(8, 8, 4, 21);

    auto run = [&](ExecutionMode mode) {
        ClusterIndex index(ds.all(), ds.size(), small_cfg());
        auto cfg = exec_cfg(2, 1, 1024, 10s);
        cfg.mode = mode;
        Executor exec(index, cfg);
        // deterministic checkpoint: insert fully, then search
        exec.submit_insert(vecs.all(), vecs.size()).wait();
        std::vector<std::vector<vector_id>> out;
        for (std::size_t q = 0; q < queries.size(); ++q) {
            auto t = exec.submit_search(queries.row(q), 1, 10, 4);
            out.push_back(t.get().searches.at(0).ids);
        }
        exec.shutdown();
        return out;
    };
    CHECK(run(ExecutionMode::Parallel) == run(ExecutionMode::Serialized));
}

TEST_CASE("set_mode requires an idle executor") {
    auto ds = synthetic_dataset(100, 8, 4, 22);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    SlowIndex slow(index, 300ms, 0ms);
    Executor exec(slow, exec_cfg(2));
    auto queries = synthetic_dataset(1, 8, 4, 23);
    auto t = exec.submit_search(queries.all(), 1, 3, 4);
    CHECK_THROWS_AS(exec.set_mode(ExecutionMode::Serialized), std::logic_error);
    t.wait();
    // lane bookkeeping settles shortly after the ticket resolves
    for (int i = 0; i < 200 && exec.in_flight() != 0; ++i)
        std::this_thread::sleep_for(5ms);
    exec.set_mode(ExecutionMode::Serialized);
    CHECK(exec.mode() == ExecutionMode::Serialized);
    exec.shutdown();
}

TEST_CASE("lane stress: no lane is ever held twice") {
    auto ds = synthetic_dataset(200, 8, 4, 24);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(8));
    auto queries = synthetic_dataset(16, 8, 4, 25);

    std::atomic<std::size_t> accepted{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 250; ++i) {
                auto ticket =
                    exec.submit_search(queries.row((t * 250 + i) % 16), 1, 5, 4);
                if (!ticket.get().searches.empty()) accepted.fetch_add(1);
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(exec.lane_double_hold_violations() == 0);
    CHECK(accepted.load() + exec.rejected_count() == 1000);
    exec.shutdown();
}

TEST_CASE("central grants are taken for oversized scans and returned") {
    auto ds = synthetic_dataset(3000, 8, 4, 26);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    auto cfg = exec_cfg(2);
    cfg.lane_cache_bytes = 64;  // force every scan estimate over the cache
    cfg.central_grants = 2;
    Executor exec(index, cfg);
    auto queries = synthetic_dataset(4, 8, 4, 27);
    for (std::size_t q = 0; q < 4; ++q)
        exec.submit_search(queries.row(q), 1, 5, 4).wait();
    CHECK(exec.grants_total() >= 1);
    CHECK(exec.grants_outstanding() == 0);  // all returned
    CHECK(exec.lane_cache_allocations() == 2);  // one reservation per lane, ever
    exec.shutdown();
}

TEST_CASE("shutdown drains pending insertions then rejects new work") {
    auto ds = synthetic_dataset(100, 8, 4, 28);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    auto exec = std::make_unique<Executor>(index, exec_cfg(2, 1000, 1024, 10s));
    auto vecs = synthetic_dataset(4, 8, 4, 29);
    auto pending = exec->submit_insert(vecs.all(), 4);
    exec->shutdown();
    CHECK(pending.get().status == TicketStatus::Done);  // drained, not dropped
    CHECK(index.size() == 104);

    auto queries = synthetic_dataset(1, 8, 4, 30);
    auto late = exec->submit_search(queries.all(), 1, 3, 4);
    CHECK(late.get().status == TicketStatus::Error);
}

TEST_CASE("search batches above the limit are refused outright") {
    auto ds = synthetic_dataset(100, 8, 4, 31);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    Executor exec(index, exec_cfg(2));
    auto queries = synthetic_dataset(11, 8, 4, 32);
    CHECK_THROWS_AS(exec.submit_search(queries.all(), 11, 3, 4), std::invalid_argument);
    exec.shutdown();
}

TEST_CASE("completed requests emit one JSON log line each") {
    auto ds = synthetic_dataset(100, 8, 4, 33);
    ClusterIndex index(ds.all(), ds.size(), small_cfg());
    std::mutex m;
    std::vector<std::string> lines;
    Executor exec(index, exec_cfg(1, 1, 1024, 10s), [&](const std::string& line) {
        std::lock_guard<std::mutex> g(m);
        lines.push_back(line);
    });
    auto queries = synthetic_dataset(1, 8, 4, 34);
    exec.submit_search(queries.all(), 1, 3, 4).wait();
    auto vecs = synthetic_dataset(1, 8, 4, 35);
    exec.submit_insert(vecs.all(), 1).wait();
    exec.shutdown();

    std::lock_guard<std::mutex> g(m);
    REQUIRE(lines.size() == 2);
    bool saw_search = false, saw_insert = false;
    for (const auto& line : lines) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("lane"));
        CHECK(j.contains("queue_us"));
        CHECK(j.contains("exec_us"));
        CHECK(j.contains("result_count"));
        CHECK(j["rejected"] == false);
        if (j["type"] == "search") saw_search = true;
        if (j["type"] == "insertion") saw_insert = true;
    }
    CHECK(saw_search);
    CHECK(saw_insert);
}
