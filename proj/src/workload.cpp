#include "blockivf/workload.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include "blockivf/oracle.hpp"

namespace blockivf {

using Clock = std::chrono::steady_clock;

void WorkloadSpec::validate() const {
    if (qps_search < 0 || qps_insert < 0)
        throw std::invalid_argument("WorkloadSpec: rates must be >= 0");
    if (duration_s <= 0) throw std::invalid_argument("WorkloadSpec: duration must be > 0");
    if (search_batch < 1 || search_batch > 10)
        throw std::invalid_argument("WorkloadSpec: search_batch out of [1, 10]");
    if (insert_batch < 1) throw std::invalid_argument("WorkloadSpec: insert_batch must be >= 1");
    if (k < 1) throw std::invalid_argument("WorkloadSpec: k must be >= 1");
}

LatencyStats summarize_latencies(std::vector<double> samples_ms) {
    LatencyStats s;
    s.count = samples_ms.size();
    if (samples_ms.empty()) return s;
    std::sort(samples_ms.begin(), samples_ms.end());
    s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) /
                static_cast<double>(samples_ms.size());
    auto pct = [&](double q) {
        const auto n = samples_ms.size();
        const std::size_t idx =
            std::min(n - 1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(n))) -
                                (q > 0 ? 1 : 0));
        return samples_ms[idx];
    };
    s.p50_ms = pct(0.50);
    s.p95_ms = pct(0.95);
    s.p99_ms = pct(0.99);
    s.max_ms = samples_ms.back();
    return s;
}

std::vector<std::size_t> zipf_insertion_order(const VectorIndex& index,
                                              const Dataset& held_out, double s,
                                              std::uint64_t seed) {
    const std::size_t n = held_out.size();
    const std::size_t n_clusters = index.num_clusters();
    std::vector<std::deque<std::size_t>> per_cluster(n_clusters);

    // Cluster assignment defines the buckets; Zipf over a seeded cluster
    // permutation decides which bucket each emission drains.
    for (std::size_t i = 0; i < n; ++i)
        per_cluster[index.assign(held_out.row(i))].push_back(i);

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> rank(n_clusters);
    std::iota(rank.begin(), rank.end(), 0);
    std::shuffle(rank.begin(), rank.end(), rng);

    std::vector<double> weights(n_clusters);
    double total = 0.0;
    for (std::size_t r = 0; r < n_clusters; ++r) {
        weights[r] = 1.0 / std::pow(static_cast<double>(r + 1), s);
        total += weights[r];
    }

    std::vector<std::size_t> order;
    order.reserve(n);
    std::uniform_real_distribution<double> u(0.0, total);
    std::size_t emitted = 0;
    while (emitted < n) {
        const double x = u(rng);
        double acc = 0.0;
        std::size_t r = 0;
        for (; r + 1 < n_clusters; ++r) {
            acc += weights[r];
            if (x <= acc) break;
        }
        // Drain the ranked cluster, falling forward when it is exhausted.
        for (std::size_t probe = 0; probe < n_clusters; ++probe) {
            auto& bucket = per_cluster[rank[(r + probe) % n_clusters]];
            if (!bucket.empty()) {
                order.push_back(bucket.front());
                bucket.pop_front();
                ++emitted;
                break;
            }
        }
    }
    return order;
}

double calibrate_timeout_ms(VectorIndex& index, const Dataset& queries, std::size_t k,
                            std::size_t nprobe) {
    if (queries.size() == 0 || index.size() == 0) return 20.0;
    std::vector<double> ms;
    const std::size_t probes = std::min<std::size_t>(5, queries.size());
    for (std::size_t i = 0; i < probes; ++i) {
        const auto t0 = Clock::now();
        (void)index.search(queries.row(i), k, nprobe);
        ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const double median = ms[ms.size() / 2];
    const double factor = std::max(1.0, median / 2.0);
    return 20.0 * factor;
}

WorkloadReport replay(const WorkloadSpec& spec, Executor& executor, VectorIndex& index,
                      const Dataset& queries, const Dataset& insertions,
                      bool compute_recall) {
    spec.validate();
    if (spec.qps_search > 0 && queries.size() == 0)
        throw std::invalid_argument("replay: search rate set but no queries");
    if (spec.qps_insert > 0 && insertions.size() == 0)
        throw std::invalid_argument("replay: insert rate set but no insertion vectors");

    WorkloadReport report;
    report.timeout_ms = spec.timeout_ms > 0
                            ? spec.timeout_ms
                            : calibrate_timeout_ms(index, queries, spec.k, spec.nprobe);

    // Build the full deterministic schedule up front.
    struct Event {
        double at_s;
        bool is_search;
        std::size_t seq;
    };
    std::vector<Event> events;
    std::mt19937_64 rng(spec.seed);
    auto schedule = [&](double qps, bool is_search) {
        if (qps <= 0) return;
        std::exponential_distribution<double> exp_gap(qps);
        double t = 0.0;
        std::size_t seq = 0;
        for (;;) {
            t += spec.arrival == ArrivalProcess::FixedInterval ? 1.0 / qps : exp_gap(rng);
            if (t >= spec.duration_s) break;
            events.push_back({t, is_search, seq++});
        }
    };
    schedule(spec.qps_search, true);
    schedule(spec.qps_insert, false);
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.at_s < b.at_s; });

    std::vector<std::size_t> insert_order;
    if (spec.zipf_insertions)
        insert_order = zipf_insertion_order(index, insertions, spec.zipf_s, spec.seed);

    const std::size_t dim = index.dim();
    std::vector<float> insert_buf(spec.insert_batch * dim);
    std::vector<float> query_buf(spec.search_batch * dim);

    struct Issued {
        Ticket ticket;
        bool is_search;
        double at_s;
    };
    std::vector<Issued> issued;
    issued.reserve(events.size());

    std::size_t insert_cursor = 0;
    std::size_t query_cursor = 0;
    const auto t_start = Clock::now();
    for (const Event& ev : events) {
        const auto due = t_start + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>(ev.at_s));
        std::this_thread::sleep_until(due);
        if (ev.is_search) {
            for (std::size_t q = 0; q < spec.search_batch; ++q) {
                const auto row = queries.row(query_cursor++ % queries.size());
                std::copy(row.begin(), row.end(), query_buf.begin() + q * dim);
            }
            issued.push_back({executor.submit_search(query_buf, spec.search_batch, spec.k,
                                                     spec.nprobe),
                              true, ev.at_s});
        } else {
            for (std::size_t v = 0; v < spec.insert_batch; ++v) {
                const std::size_t raw = insert_cursor++ % insertions.size();
                const std::size_t pick =
                    insert_order.empty() ? raw : insert_order[raw % insert_order.size()];
                const auto row = insertions.row(pick);
                std::copy(row.begin(), row.end(), insert_buf.begin() + v * dim);
            }
            issued.push_back({executor.submit_insert(insert_buf, spec.insert_batch), false,
                              ev.at_s});
        }
    }
    executor.flush_insertions();

    // Await every ticket and collect samples within the measurement window.
    const double window_lo = spec.warmup_s;
    const double window_hi = spec.warmup_s + spec.measure_window_s;
    for (const auto& item : issued) {
        const auto& r = item.ticket.get();
        if (item.is_search)
            ++report.search_issued;
        else
            ++report.insert_issued;
        if (r.status == TicketStatus::Rejected) {
            ++report.rejected;
            continue;
        }
        if (r.status == TicketStatus::Error) {
            ++report.errors;
            continue;
        }
        if (item.at_s < window_lo || item.at_s >= window_hi) continue;
        const double ms = r.latency_us / 1000.0;
        if (item.is_search) {
            report.search_samples_ms.push_back(ms);
            if (ms > report.timeout_ms) ++report.timeouts_search;
        } else {
            report.insert_samples_ms.push_back(ms);
            if (ms > report.timeout_ms) ++report.timeouts_insert;
        }
    }

    report.search = summarize_latencies(report.search_samples_ms);
    report.insertion = summarize_latencies(report.insert_samples_ms);
    report.combined_latency_ms = report.search.mean_ms + report.insertion.mean_ms;
    report.duration_s = spec.duration_s;
    report.scalars_copied = index.scalars_copied();
    report.reallocations = index.reallocations();

    const std::size_t total = report.search_issued + report.insert_issued;
    const std::size_t bad = report.rejected + report.timeouts_search + report.timeouts_insert;
    report.saturated = total > 0 && bad * 4 >= total;  // >= 25% dropped or late

    if (auto* block = dynamic_cast<ClusterIndex*>(&index)) {
        std::size_t hop_total = 0;
        for (std::size_t c = 0; c < block->num_clusters(); ++c) {
            const std::size_t h = block->hop_count(static_cast<cluster_id>(c));
            if (report.hop_histogram.size() <= h) report.hop_histogram.resize(h + 1, 0);
            ++report.hop_histogram[h];
            hop_total += h;
        }
        report.hop_mean =
            static_cast<double>(hop_total) / static_cast<double>(block->num_clusters());
        report.rearrange_events = block->take_rearrange_events();
    }

    if (compute_recall && queries.size() > 0) {
        const std::size_t nq = std::min<std::size_t>(queries.size(), 100);
        std::vector<std::pair<vector_id, std::vector<float>>> everything;
        if (auto* block = dynamic_cast<ClusterIndex*>(&index)) {
            for (std::size_t c = 0; c < block->num_clusters(); ++c) {
                auto part = block->cluster_contents(static_cast<cluster_id>(c));
                everything.insert(everything.end(), std::make_move_iterator(part.begin()),
                                  std::make_move_iterator(part.end()));
            }
        }
        if (!everything.empty()) {
            std::vector<SearchResult> got, truth;
            for (std::size_t q = 0; q < nq; ++q) {
                got.push_back(index.search(queries.row(q), spec.k, spec.nprobe));
                truth.push_back(exact_knn_pairs(everything, queries.row(q), spec.k));
            }
            report.recall = recall_at_k(got, truth, spec.k);
        }
    }
    return report;
}

}  // namespace blockivf
