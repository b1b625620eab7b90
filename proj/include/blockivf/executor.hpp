#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "blockivf/mpmc_queue.hpp"
#include "blockivf/vector_index.hpp"

namespace blockivf {

enum class ExecutionMode { Parallel, Serialized };
enum class RequestType { BatchSearch, VectorInsertion };
enum class TicketStatus { Pending, Done, Rejected, Error };

struct ExecutorConfig {
    std::size_t num_lanes = 32;
    std::size_t lane_cache_bytes = 512 * 1024;        // paper-scale: 50MB
    std::size_t central_grant_bytes = 2 * 1024 * 1024;  // paper-scale: 200MB
    std::size_t central_grants = 4;
    std::chrono::milliseconds batch_flush_interval{1000};
    std::size_t batch_multiple = 128;
    std::size_t batch_cap = 1024;
    std::size_t max_search_batch = 10;
    ExecutionMode mode = ExecutionMode::Parallel;

    void validate() const;
};

struct TicketResult {
    TicketStatus status = TicketStatus::Pending;
    RequestType type = RequestType::BatchSearch;
    std::vector<SearchResult> searches;   // one per query for search tickets
    std::vector<vector_id> inserted_ids;  // for insertion tickets
    std::string error;
    int lane = -1;
    double queue_us = 0.0;
    double exec_us = 0.0;
    double latency_us = 0.0;  // completion - submit
    std::chrono::steady_clock::time_point submit_time{};
    std::chrono::steady_clock::time_point start_time{};
    std::chrono::steady_clock::time_point end_time{};
};

/// Awaitable handle for a submitted request.
class Ticket {
public:
    Ticket() = default;
    bool valid() const { return state_ != nullptr; }
    void wait() const;
    const TicketResult& get() const;  // waits
    bool rejected() const { return get().status == TicketStatus::Rejected; }

private:
    friend class Executor;
    struct State {
        mutable std::mutex mutex;
        mutable std::condition_variable cv;
        TicketResult result;
        bool ready = false;
    };
    std::shared_ptr<State> state_;
};

/// Multi-lane request executor. Search requests each take a lane from the
/// pool and run concurrently; insertions funnel through one dedicated lane
/// with dynamic batching. Serialized mode runs everything FIFO on a single
/// lane for comparison.
class Executor {
public:
    using LogSink = std::function<void(const std::string&)>;

    Executor(VectorIndex& index, ExecutorConfig config, LogSink sink = {});
    ~Executor();

    Executor(const Executor&) = delete;
    Executor& operator=(const Executor&) = delete;

    Ticket submit_search(std::span<const float> queries, std::size_t nq, std::size_t k,
                         std::size_t nprobe);
    Ticket submit_insert(std::span<const float> vectors, std::size_t n,
                         std::span<const vector_id> ids = {});

    /// Force the batcher to dispatch pending insertions now.
    void flush_insertions();

    void set_mode(ExecutionMode mode);  // executor must be idle
    ExecutionMode mode() const { return config_.mode; }
    const ExecutorConfig& config() const { return config_; }

    /// Drain in-flight work; subsequent submissions are rejected.
    void shutdown();

    // --- instrumentation ---
    std::size_t rejected_count() const { return rejected_.load(std::memory_order_relaxed); }
    std::size_t completed_count() const { return completed_.load(std::memory_order_relaxed); }
    std::size_t in_flight() const { return in_flight_.load(std::memory_order_relaxed); }
    std::size_t grants_outstanding() const { return grants_outstanding_.load(std::memory_order_relaxed); }
    std::size_t grants_total() const { return grants_total_.load(std::memory_order_relaxed); }
    std::size_t lane_cache_allocations() const { return lane_cache_allocations_; }
    std::size_t lane_double_hold_violations() const {
        return double_hold_.load(std::memory_order_relaxed);
    }
    std::size_t largest_flush() const { return largest_flush_.load(std::memory_order_relaxed); }

private:
    struct SearchTask {
        Ticket ticket;
        std::vector<float> queries;
        std::size_t nq = 0;
        std::size_t k = 0;
        std::size_t nprobe = 0;
    };
    struct PendingInsert {
        Ticket ticket;
        std::vector<float> vectors;
        std::vector<vector_id> ids;  // empty => auto-assign
        std::vector<vector_id> inserted_ids;
        std::size_t count = 0;
        std::size_t flushed = 0;     // vectors already dispatched
        std::size_t completed = 0;   // vectors whose batch finished
        bool failed = false;
        std::string error;
    };
    struct Lane {
        std::vector<std::byte> cache;
        std::thread worker;
        std::mutex mutex;
        std::condition_variable cv;
        std::unique_ptr<SearchTask> task;
        std::atomic<bool> busy{false};
        bool stop = false;
    };
    struct SerialTask {
        RequestType type;
        std::unique_ptr<SearchTask> search;
        std::shared_ptr<PendingInsert> insert;
    };

    static Ticket make_ticket(RequestType type);
    void resolve(const Ticket& ticket, TicketResult&& result);
    void reject(const Ticket& ticket, RequestType type, const std::string& reason);
    void log_completion(const TicketResult& r);

    void lane_main(std::size_t lane_id);
    TicketResult run_search(SearchTask& task, int lane_id, std::vector<std::byte>& cache);
    void insertion_main();
    void serial_main();
    // Dispatch one aggregated batch. Caller holds batch_mutex_; the lock is
    // released around the index call.
    void flush_locked(std::unique_lock<std::mutex>& lock);
    TicketResult run_insert_unit(PendingInsert& item, std::size_t from, std::size_t count);

    VectorIndex& index_;
    ExecutorConfig config_;
    LogSink sink_;

    std::vector<std::unique_ptr<Lane>> lanes_;
    MpmcQueue<std::uint32_t> free_lanes_;
    std::size_t lane_cache_allocations_ = 0;

    // insertion batcher
    std::thread insertion_thread_;
    std::mutex batch_mutex_;
    std::condition_variable batch_cv_;
    std::deque<std::shared_ptr<PendingInsert>> pending_;
    std::size_t pending_vectors_ = 0;
    bool manual_flush_ = false;
    std::chrono::steady_clock::time_point last_flush_;

    // serialized mode
    std::thread serial_thread_;
    std::mutex serial_mutex_;
    std::condition_variable serial_cv_;
    std::deque<SerialTask> serial_queue_;

    std::atomic<bool> accepting_{true};
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> rejected_{0};
    std::atomic<std::size_t> completed_{0};
    std::atomic<std::size_t> grants_outstanding_{0};
    std::atomic<std::size_t> grants_total_{0};
    std::atomic<std::size_t> grants_available_;
    std::atomic<std::size_t> double_hold_{0};
    std::atomic<std::size_t> largest_flush_{0};
};

}  // namespace blockivf
