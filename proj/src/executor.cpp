#include "blockivf/executor.hpp"

#include <algorithm>
#include <cstring>

#include <nlohmann/json.hpp>

namespace blockivf {

using Clock = std::chrono::steady_clock;

namespace {

double us_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::micro>(b - a).count();
}

constexpr std::size_t kCandidateRecordBytes = sizeof(float) + sizeof(vector_id);

}  // namespace

void ExecutorConfig::validate() const {
    if (num_lanes < 1) throw std::invalid_argument("ExecutorConfig: num_lanes must be >= 1");
    if (batch_multiple < 1)
        throw std::invalid_argument("ExecutorConfig: batch_multiple must be >= 1");
    if (batch_cap < batch_multiple)
        throw std::invalid_argument("ExecutorConfig: batch_cap must be >= batch_multiple");
    if (max_search_batch < 1)
        throw std::invalid_argument("ExecutorConfig: max_search_batch must be >= 1");
}

void Ticket::wait() const {
    std::unique_lock<std::mutex> lock(state_->mutex);
    state_->cv.wait(lock, [this] { return state_->ready; });
}

const TicketResult& Ticket::get() const {
    wait();
    return state_->result;
}

Ticket Executor::make_ticket(RequestType type) {
    Ticket t;
    t.state_ = std::make_shared<Ticket::State>();
    t.state_->result.type = type;
    t.state_->result.submit_time = Clock::now();
    return t;
}

void Executor::resolve(const Ticket& ticket, TicketResult&& result) {
    result.submit_time = ticket.state_->result.submit_time;
    result.type = ticket.state_->result.type;
    result.latency_us = us_between(result.submit_time, result.end_time);
    result.queue_us = us_between(result.submit_time, result.start_time);
    result.exec_us = us_between(result.start_time, result.end_time);
    {
        std::lock_guard<std::mutex> lock(ticket.state_->mutex);
        ticket.state_->result = std::move(result);
        ticket.state_->result.status = ticket.state_->result.status == TicketStatus::Pending
                                           ? TicketStatus::Done
                                           : ticket.state_->result.status;
        ticket.state_->ready = true;
    }
    ticket.state_->cv.notify_all();
    completed_.fetch_add(1, std::memory_order_relaxed);
    log_completion(ticket.state_->result);
}

void Executor::reject(const Ticket& ticket, RequestType type, const std::string& reason) {
    TicketResult r;
    r.type = type;
    r.status = TicketStatus::Rejected;
    r.error = reason;
    r.start_time = r.end_time = Clock::now();
    rejected_.fetch_add(1, std::memory_order_relaxed);
    {
        std::lock_guard<std::mutex> lock(ticket.state_->mutex);
        r.submit_time = ticket.state_->result.submit_time;
        r.latency_us = us_between(r.submit_time, r.end_time);
        ticket.state_->result = std::move(r);
        ticket.state_->ready = true;
    }
    ticket.state_->cv.notify_all();
    log_completion(ticket.state_->result);
}

void Executor::log_completion(const TicketResult& r) {
    if (!sink_) return;
    nlohmann::json line{
        {"type", r.type == RequestType::BatchSearch ? "search" : "insertion"},
        {"lane", r.lane},
        {"queue_us", r.queue_us},
        {"exec_us", r.exec_us},
        {"latency_us", r.latency_us},
        {"result_count",
         r.type == RequestType::BatchSearch ? r.searches.size() : r.inserted_ids.size()},
        {"rejected", r.status == TicketStatus::Rejected},
    };
    if (r.status == TicketStatus::Error) line["error"] = r.error;
    sink_(line.dump());
}

Executor::Executor(VectorIndex& index, ExecutorConfig config, LogSink sink)
    : index_(index),
      config_(config),
      sink_(std::move(sink)),
      free_lanes_(std::max<std::size_t>(config.num_lanes, 2)),
      grants_available_(config.central_grants) {
    config_.validate();
    lanes_.reserve(config_.num_lanes);
    for (std::size_t i = 0; i < config_.num_lanes; ++i) {
        auto lane = std::make_unique<Lane>();
        lane->cache.resize(config_.lane_cache_bytes);
        ++lane_cache_allocations_;
        lanes_.push_back(std::move(lane));
    }
    for (std::size_t i = 0; i < config_.num_lanes; ++i)
        free_lanes_.try_push(static_cast<std::uint32_t>(i));
    for (std::size_t i = 0; i < config_.num_lanes; ++i)
        lanes_[i]->worker = std::thread(&Executor::lane_main, this, i);
    last_flush_ = Clock::now();
    insertion_thread_ = std::thread(&Executor::insertion_main, this);
    serial_thread_ = std::thread(&Executor::serial_main, this);
}

Executor::~Executor() { shutdown(); }

Ticket Executor::submit_search(std::span<const float> queries, std::size_t nq, std::size_t k,
                               std::size_t nprobe) {
    if (nq < 1 || nq > config_.max_search_batch)
        throw std::invalid_argument("submit_search: batch size out of [1, max_search_batch]");
    if (queries.size() != nq * index_.dim())
        throw std::invalid_argument("submit_search: queries extent does not match nq * dim");
    if (k < 1) throw std::invalid_argument("submit_search: k must be >= 1");
    if (nprobe < 1 || nprobe > index_.num_clusters())
        throw std::invalid_argument("submit_search: nprobe out of [1, num_clusters]");

    Ticket ticket = make_ticket(RequestType::BatchSearch);
    if (!accepting_.load(std::memory_order_acquire)) {
        TicketResult r;
        r.status = TicketStatus::Error;
        r.error = "executor is shut down";
        r.start_time = r.end_time = Clock::now();
        resolve(ticket, std::move(r));
        return ticket;
    }

    auto task = std::make_unique<SearchTask>();
    task->ticket = ticket;
    task->queries.assign(queries.begin(), queries.end());
    task->nq = nq;
    task->k = k;
    task->nprobe = nprobe;

    if (config_.mode == ExecutionMode::Serialized) {
        in_flight_.fetch_add(1, std::memory_order_acq_rel);
        {
            std::lock_guard<std::mutex> lock(serial_mutex_);
            serial_queue_.push_back({RequestType::BatchSearch, std::move(task), nullptr});
        }
        serial_cv_.notify_one();
        return ticket;
    }

    std::uint32_t lane_id;
    if (!free_lanes_.try_pop(lane_id)) {
        // All lanes busy: reject, never queue.
        reject(ticket, RequestType::BatchSearch, "all search lanes busy");
        return ticket;
    }
    in_flight_.fetch_add(1, std::memory_order_acq_rel);
    Lane& lane = *lanes_[lane_id];
    {
        std::lock_guard<std::mutex> lock(lane.mutex);
        lane.task = std::move(task);
    }
    lane.cv.notify_one();
    return ticket;
}

Ticket Executor::submit_insert(std::span<const float> vectors, std::size_t n,
                               std::span<const vector_id> ids) {
    if (n < 1) throw std::invalid_argument("submit_insert: empty batch");
    if (vectors.size() != n * index_.dim())
        throw std::invalid_argument("submit_insert: vectors extent does not match n * dim");
    if (!ids.empty() && ids.size() != n)
        throw std::invalid_argument("submit_insert: ids size does not match n");

    Ticket ticket = make_ticket(RequestType::VectorInsertion);
    if (!accepting_.load(std::memory_order_acquire)) {
        TicketResult r;
        r.status = TicketStatus::Error;
        r.error = "executor is shut down";
        r.start_time = r.end_time = Clock::now();
        resolve(ticket, std::move(r));
        return ticket;
    }

    auto item = std::make_shared<PendingInsert>();
    item->ticket = ticket;
    item->vectors.assign(vectors.begin(), vectors.end());
    item->ids.assign(ids.begin(), ids.end());
    item->count = n;

    in_flight_.fetch_add(1, std::memory_order_acq_rel);
    if (config_.mode == ExecutionMode::Serialized) {
        {
            std::lock_guard<std::mutex> lock(serial_mutex_);
            serial_queue_.push_back({RequestType::VectorInsertion, nullptr, std::move(item)});
        }
        serial_cv_.notify_one();
        return ticket;
    }

    {
        std::lock_guard<std::mutex> lock(batch_mutex_);
        pending_.push_back(std::move(item));
        pending_vectors_ += n;
    }
    batch_cv_.notify_one();
    return ticket;
}

void Executor::flush_insertions() {
    {
        std::lock_guard<std::mutex> lock(batch_mutex_);
        if (pending_.empty()) return;
        manual_flush_ = true;
    }
    batch_cv_.notify_one();
}

void Executor::set_mode(ExecutionMode mode) {
    if (in_flight_.load(std::memory_order_acquire) != 0)
        throw std::logic_error("set_mode: executor is busy");
    config_.mode = mode;
}

void Executor::lane_main(std::size_t lane_id) {
    Lane& lane = *lanes_[lane_id];
    for (;;) {
        std::unique_ptr<SearchTask> task;
        {
            std::unique_lock<std::mutex> lock(lane.mutex);
            lane.cv.wait(lock, [&] { return lane.stop || lane.task; });
            if (lane.stop && !lane.task) return;
            task = std::move(lane.task);
        }
        if (lane.busy.exchange(true, std::memory_order_acq_rel))
            double_hold_.fetch_add(1, std::memory_order_relaxed);
        TicketResult result = run_search(*task, static_cast<int>(lane_id), lane.cache);
        // Hand the lane back before resolving, so a caller that awaited the
        // ticket always finds the pool replenished.
        lane.busy.store(false, std::memory_order_release);
        free_lanes_.try_push(static_cast<std::uint32_t>(lane_id));
        in_flight_.fetch_sub(1, std::memory_order_acq_rel);
        resolve(task->ticket, std::move(result));
    }
}

TicketResult Executor::run_search(SearchTask& task, int lane_id,
                                  std::vector<std::byte>& cache) {
    TicketResult r;
    r.lane = lane_id;
    r.start_time = Clock::now();

    // Two-tier scratch: the lane cache covers the estimated candidate volume;
    // a single central grant backs it when the probed lists are larger.
    const std::size_t clusters = std::max<std::size_t>(index_.num_clusters(), 1);
    const std::size_t avg_list = index_.size() / clusters + 1;
    const std::size_t demand =
        task.nq * task.nprobe * avg_list * kCandidateRecordBytes;
    bool grant_held = false;
    if (demand > cache.size()) {
        std::size_t avail = grants_available_.load(std::memory_order_acquire);
        while (avail > 0 && !grants_available_.compare_exchange_weak(
                                avail, avail - 1, std::memory_order_acq_rel)) {
        }
        if (avail > 0) {
            grant_held = true;
            grants_outstanding_.fetch_add(1, std::memory_order_relaxed);
            grants_total_.fetch_add(1, std::memory_order_relaxed);
        }
    }

    // Stage the query batch in the lane's cached scratch.
    const std::size_t stage_bytes = task.queries.size() * sizeof(float);
    const float* queries = task.queries.data();
    if (stage_bytes <= cache.size()) {
        std::memcpy(cache.data(), task.queries.data(), stage_bytes);
        queries = reinterpret_cast<const float*>(cache.data());
    }

    try {
        const std::size_t dim = index_.dim();
        r.searches.reserve(task.nq);
        for (std::size_t q = 0; q < task.nq; ++q)
            r.searches.push_back(index_.search({queries + q * dim, dim}, task.k, task.nprobe));
    } catch (const std::exception& e) {
        r.status = TicketStatus::Error;
        r.error = e.what();
    }

    if (grant_held) {
        grants_available_.fetch_add(1, std::memory_order_acq_rel);
        grants_outstanding_.fetch_sub(1, std::memory_order_relaxed);
    }
    r.end_time = Clock::now();
    return r;
}

TicketResult Executor::run_insert_unit(PendingInsert& item, std::size_t from,
                                       std::size_t count) {
    const std::size_t dim = index_.dim();
    TicketResult r;
    r.lane = static_cast<int>(config_.num_lanes);  // the dedicated data lane
    r.start_time = Clock::now();
    try {
        std::span<const vector_id> ids;
        if (!item.ids.empty()) ids = {item.ids.data() + from, count};
        r.inserted_ids = index_.insert({item.vectors.data() + from * dim, count * dim}, count, ids);
        index_.post_insert_maintenance();
    } catch (const std::exception& e) {
        r.status = TicketStatus::Error;
        r.error = e.what();
    }
    r.end_time = Clock::now();
    return r;
}

void Executor::flush_locked(std::unique_lock<std::mutex>& lock) {
    if (pending_.empty()) return;

    struct Part {
        std::shared_ptr<PendingInsert> item;
        std::size_t from;
        std::size_t count;
        std::size_t batch_from;
    };
    const std::size_t dim = index_.dim();
    std::vector<Part> parts;
    std::vector<float> batch;
    std::vector<vector_id> batch_ids;
    const bool with_ids = !pending_.front()->ids.empty();
    std::size_t taken = 0;

    while (!pending_.empty() && taken < config_.batch_cap) {
        auto item = pending_.front();
        if ((!item->ids.empty()) != with_ids) break;  // keep one id-mode per batch
        const std::size_t avail = item->count - item->flushed;
        const std::size_t take = std::min(avail, config_.batch_cap - taken);
        batch.insert(batch.end(), item->vectors.data() + item->flushed * dim,
                     item->vectors.data() + (item->flushed + take) * dim);
        if (with_ids)
            batch_ids.insert(batch_ids.end(), item->ids.begin() + item->flushed,
                             item->ids.begin() + item->flushed + take);
        parts.push_back({item, item->flushed, take, taken});
        item->flushed += take;
        taken += take;
        if (item->flushed == item->count)
            pending_.pop_front();
        else
            break;  // cap hit mid-request
    }
    pending_vectors_ -= taken;
    {
        std::size_t prev = largest_flush_.load(std::memory_order_relaxed);
        while (taken > prev && !largest_flush_.compare_exchange_weak(prev, taken)) {
        }
    }

    lock.unlock();
    const auto start = Clock::now();
    std::vector<vector_id> assigned;
    bool failed = false;
    std::string error;
    try {
        assigned = index_.insert({batch.data(), batch.size()}, taken,
                                 with_ids ? std::span<const vector_id>{batch_ids} : std::span<const vector_id>{});
        index_.post_insert_maintenance();
    } catch (const std::exception& e) {
        failed = true;
        error = e.what();
    }
    const auto end = Clock::now();

    for (auto& part : parts) {
        auto& item = *part.item;
        if (item.inserted_ids.empty()) item.inserted_ids.assign(item.count, vector_id{-1});
        if (failed) {
            item.failed = true;
            item.error = error;
        } else {
            for (std::size_t i = 0; i < part.count; ++i)
                item.inserted_ids[part.from + i] = assigned[part.batch_from + i];
        }
        item.completed += part.count;
        if (item.completed == item.count) {
            TicketResult r;
            r.lane = static_cast<int>(config_.num_lanes);
            r.start_time = start;
            r.end_time = end;
            r.inserted_ids = std::move(item.inserted_ids);
            if (item.failed) {
                r.status = TicketStatus::Error;
                r.error = item.error;
            }
            in_flight_.fetch_sub(1, std::memory_order_acq_rel);
            resolve(item.ticket, std::move(r));
        }
    }
    lock.lock();
}

void Executor::insertion_main() {
    std::unique_lock<std::mutex> lock(batch_mutex_);
    last_flush_ = Clock::now();
    for (;;) {
        if (stopping_.load(std::memory_order_acquire) && pending_.empty()) return;
        if (pending_vectors_ == 0 && !manual_flush_) {
            batch_cv_.wait(lock, [&] {
                return stopping_.load(std::memory_order_acquire) || pending_vectors_ > 0 ||
                       manual_flush_;
            });
            last_flush_ = Clock::now();
            continue;
        }
        const auto deadline = last_flush_ + config_.batch_flush_interval;
        const bool threshold = pending_vectors_ >= config_.batch_multiple;
        if (!threshold && !manual_flush_ && !stopping_.load(std::memory_order_acquire)) {
            batch_cv_.wait_until(lock, deadline, [&] {
                return stopping_.load(std::memory_order_acquire) || manual_flush_ ||
                       pending_vectors_ >= config_.batch_multiple;
            });
        }
        const bool timer_due = Clock::now() >= deadline;
        if (pending_vectors_ >= config_.batch_multiple || manual_flush_ || timer_due ||
            stopping_.load(std::memory_order_acquire)) {
            manual_flush_ = false;
            // Drain everything pending, in batch_cap sized chunks.
            while (!pending_.empty()) flush_locked(lock);
            last_flush_ = Clock::now();
        }
    }
}

void Executor::serial_main() {
    for (;;) {
        SerialTask task;
        {
            std::unique_lock<std::mutex> lock(serial_mutex_);
            serial_cv_.wait(lock, [&] {
                return stopping_.load(std::memory_order_acquire) || !serial_queue_.empty();
            });
            if (serial_queue_.empty()) {
                if (stopping_.load(std::memory_order_acquire)) return;
                continue;
            }
            task = std::move(serial_queue_.front());
            serial_queue_.pop_front();
        }
        if (task.type == RequestType::BatchSearch) {
            TicketResult r = run_search(*task.search, 0, lanes_[0]->cache);
            in_flight_.fetch_sub(1, std::memory_order_acq_rel);
            resolve(task.search->ticket, std::move(r));
        } else {
            TicketResult r = run_insert_unit(*task.insert, 0, task.insert->count);
            in_flight_.fetch_sub(1, std::memory_order_acq_rel);
            resolve(task.insert->ticket, std::move(r));
        }
    }
}

void Executor::shutdown() {
    bool expected = true;
    if (!accepting_.compare_exchange_strong(expected, false, std::memory_order_acq_rel)) {
        return;  // already shut down
    }
    stopping_.store(true, std::memory_order_release);
    batch_cv_.notify_all();
    serial_cv_.notify_all();
    if (insertion_thread_.joinable()) insertion_thread_.join();
    if (serial_thread_.joinable()) serial_thread_.join();
    for (auto& lane : lanes_) {
        {
            std::lock_guard<std::mutex> lock(lane->mutex);
            lane->stop = true;
        }
        lane->cv.notify_one();
    }
    for (auto& lane : lanes_)
        if (lane->worker.joinable()) lane->worker.join();
}

}  // namespace blockivf
