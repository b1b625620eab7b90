#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockivf/dataset.hpp"
#include "blockivf/executor.hpp"
#include "blockivf/ivf_index.hpp"

namespace blockivf {

enum class ArrivalProcess { FixedInterval, Poisson };

struct WorkloadSpec {
    double qps_search = 0.0;
    double qps_insert = 0.0;       ///< insertion requests per second
    double duration_s = 1.0;
    std::size_t search_batch = 1;  ///< <= 10
    std::size_t insert_batch = 1;  ///< vectors per insertion request
    std::size_t k = 10;
    std::size_t nprobe = 8;
    std::uint64_t seed = 1;
    ArrivalProcess arrival = ArrivalProcess::FixedInterval;
    double timeout_ms = 0.0;        ///< 0 = auto-calibrated at startup
    double measure_window_s = 10.0; ///< stats cover the first N seconds
    double warmup_s = 0.0;
    bool zipf_insertions = false;   ///< skew insertions toward hot clusters
    double zipf_s = 1.0;

    void validate() const;
};

struct LatencyStats {
    std::size_t count = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
};

LatencyStats summarize_latencies(std::vector<double> samples_ms);

struct WorkloadReport {
    LatencyStats search;
    LatencyStats insertion;
    double combined_latency_ms = 0.0;  ///< mean(search) + mean(insertion)
    std::size_t search_issued = 0;
    std::size_t insert_issued = 0;
    std::size_t rejected = 0;
    std::size_t timeouts_search = 0;
    std::size_t timeouts_insert = 0;
    std::size_t errors = 0;
    double timeout_ms = 0.0;
    double recall = -1.0;  ///< -1 when not computed
    bool saturated = false;
    double duration_s = 0.0;
    std::uint64_t scalars_copied = 0;
    std::uint64_t reallocations = 0;
    std::vector<std::size_t> hop_histogram;  ///< [h] = clusters with h hops
    double hop_mean = 0.0;
    std::vector<RearrangeEvent> rearrange_events;
    std::vector<double> search_samples_ms;   ///< raw, within the window
    std::vector<double> insert_samples_ms;

    bool empty() const {
        return search_issued == 0 && insert_issued == 0 && search.count == 0 &&
               insertion.count == 0 && rearrange_events.empty() && rejected == 0 &&
               errors == 0 && recall < 0 && hop_histogram.empty() &&
               scalars_copied == 0 && search.mean_ms == 0.0 && insertion.mean_ms == 0.0;
    }
};

/// Deterministic insertion order over held-out vectors, skewed by a Zipf(s)
/// draw over clusters so hot lists keep growing (the pathological case for
/// copy-based extends).
std::vector<std::size_t> zipf_insertion_order(const VectorIndex& index,
                                              const Dataset& held_out, double s,
                                              std::uint64_t seed);

/// Issue search and insertion requests against the executor at the configured
/// rates, await every ticket, and aggregate the report. The schedule is fully
/// determined by the workload seed.
WorkloadReport replay(const WorkloadSpec& spec, Executor& executor, VectorIndex& index,
                      const Dataset& queries, const Dataset& insertions,
                      bool compute_recall = false);

/// Median search cost based timeout scale: 20ms reference latency multiplied
/// by how much slower this machine is than a ~2ms/search baseline.
double calibrate_timeout_ms(VectorIndex& index, const Dataset& queries, std::size_t k,
                            std::size_t nprobe);

}  // namespace blockivf
