// blockivf command line: train an index, replay workloads against it, sweep
// parameters, and produce exact ground truth for recall evaluation.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "blockivf/baseline_index.hpp"
#include "blockivf/dataset.hpp"
#include "blockivf/executor.hpp"
#include "blockivf/ivf_index.hpp"
#include "blockivf/oracle.hpp"
#include "blockivf/report.hpp"
#include "blockivf/workload.hpp"

namespace {

using namespace blockivf;

struct CommonData {
    std::string input;
    std::size_t synthetic_n = 0;
    std::size_t synthetic_dim = 32;
    std::size_t synthetic_components = 16;
    std::uint64_t seed = 42;
};

Dataset load_or_synthesize(const CommonData& c) {
    if (!c.input.empty()) return load_fvecs(c.input);
    if (c.synthetic_n == 0)
        throw CLI::ValidationError("provide --input or --synthetic N");
    return synthetic_dataset(c.synthetic_n, c.synthetic_dim, c.synthetic_components, c.seed);
}

IndexConfig make_index_config(std::size_t clusters, std::size_t dim, std::size_t block_capacity,
                              std::size_t rearrange_threshold, std::uint64_t seed,
                              std::size_t expected_vectors) {
    IndexConfig cfg;
    cfg.num_clusters = clusters;
    cfg.dim = dim;
    cfg.kmeans_seed = seed;
    cfg.rearrange_threshold = rearrange_threshold;
    cfg.pool.block_capacity = block_capacity;
    cfg.pool.dim = dim;
    // Enough blocks for every cluster to round up, plus slack for fragmentation.
    cfg.pool.num_blocks =
        (expected_vectors + block_capacity - 1) / block_capacity + 2 * clusters + 64;
    cfg.nprobe_default = std::min<std::size_t>(8, clusters);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blockivf: IVF-flat index with real-time block-based insertion"};
    app.set_config("--config", "", "Read options from an INI/TOML config file");
    app.require_subcommand(1);

    // ---- train ----
    auto* train = app.add_subcommand("train", "Train an index and write a snapshot");
    CommonData train_data;
    std::size_t clusters = 100;
    std::size_t block_capacity = 64;
    std::size_t rearrange_threshold = 256;
    std::string out_path;
    train->add_option("--input", train_data.input, "Offline vectors (fvecs)");
    train->add_option("--synthetic", train_data.synthetic_n, "Generate N synthetic vectors");
    train->add_option("--dim", train_data.synthetic_dim, "Synthetic dimensionality");
    train->add_option("--components", train_data.synthetic_components,
                      "Synthetic mixture components");
    train->add_option("--clusters", clusters, "Number of IVF clusters (N)");
    train->add_option("--block-capacity", block_capacity, "Vectors per memory block (T_m)");
    train->add_option("--rearrange-threshold", rearrange_threshold,
                      "Online list size that triggers rearrangement (T'_m)");
    train->add_option("--seed", train_data.seed, "Training seed");
    train->add_option("--out", out_path, "Snapshot output path")->required();

    // ---- oracle ----
    auto* oracle = app.add_subcommand("oracle", "Exact brute-force ground truth");
    std::string oracle_input, oracle_queries, oracle_out;
    std::size_t oracle_k = 10;
    oracle->add_option("--input", oracle_input, "Base vectors (fvecs)")->required();
    oracle->add_option("--queries", oracle_queries, "Query vectors (fvecs)")->required();
    oracle->add_option("--k", oracle_k, "Neighbors per query");
    oracle->add_option("--out", oracle_out, "Ground truth output (ivecs)")->required();

    // ---- replay ----
    auto* replay_cmd = app.add_subcommand("replay", "Replay a timed workload");
    std::string replay_index, replay_backend = "block", replay_mode = "parallel";
    std::string replay_report, replay_format = "csv", replay_queries_path, replay_insert_path;
    std::string dump_pool_path;
    WorkloadSpec spec;
    std::size_t exec_lanes = 32;
    bool compute_recall = false;
    replay_cmd->add_option("--index", replay_index, "Index snapshot from `train`")->required();
    replay_cmd->add_option("--backend", replay_backend, "block|baseline")
        ->check(CLI::IsMember({"block", "baseline"}));
    replay_cmd->add_option("--mode", replay_mode, "parallel|serialized")
        ->check(CLI::IsMember({"parallel", "serialized"}));
    replay_cmd->add_option("--qps-search", spec.qps_search, "Search requests per second");
    replay_cmd->add_option("--qps-insert", spec.qps_insert, "Insertion requests per second");
    replay_cmd->add_option("--duration", spec.duration_s, "Replay duration in seconds");
    replay_cmd->add_option("--k", spec.k, "Neighbors per query");
    replay_cmd->add_option("--nprobe", spec.nprobe, "Clusters probed per query");
    replay_cmd->add_option("--search-batch", spec.search_batch, "Queries per search request");
    replay_cmd->add_option("--insert-batch", spec.insert_batch, "Vectors per insert request");
    replay_cmd->add_option("--seed", spec.seed, "Schedule seed");
    replay_cmd->add_option("--timeout-ms", spec.timeout_ms, "Latency timeout (0 = calibrated)");
    replay_cmd->add_option("--warmup", spec.warmup_s, "Warmup seconds excluded from stats");
    replay_cmd->add_option("--window", spec.measure_window_s, "Measurement window seconds");
    replay_cmd->add_flag("--zipf", spec.zipf_insertions, "Zipf-skew insertions to hot clusters");
    replay_cmd->add_flag("--recall", compute_recall, "Compute recall@k after the run");
    replay_cmd->add_option("--lanes", exec_lanes, "Concurrent search lanes");
    replay_cmd->add_option("--queries", replay_queries_path, "Query vectors (fvecs)");
    replay_cmd->add_option("--insert-input", replay_insert_path, "Held-out insert vectors (fvecs)");
    replay_cmd->add_option("--report", replay_report, "Report output path")->required();
    replay_cmd->add_option("--format", replay_format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    replay_cmd->add_option("--dump-pool", dump_pool_path,
                           "Write the block pool debug dump here after the run");
    std::string arrival = "fixed";
    replay_cmd->add_option("--arrival", arrival, "fixed|poisson")
        ->check(CLI::IsMember({"fixed", "poisson"}));

    // ---- sweep ----
    auto* sweep = app.add_subcommand("sweep", "Sweep one parameter and report per value");
    std::string sweep_param, sweep_report, sweep_format = "csv";
    std::vector<std::size_t> sweep_values;
    CommonData sweep_data;
    std::size_t sweep_clusters = 64;
    std::size_t sweep_inserts = 50000;
    std::size_t sweep_k = 10;
    sweep->add_option("--param", sweep_param, "block-capacity|rearrange-threshold|nprobe")
        ->required()
        ->check(CLI::IsMember({"block-capacity", "rearrange-threshold", "nprobe"}));
    sweep->add_option("--values", sweep_values, "Values to sweep")->required();
    sweep->add_option("--input", sweep_data.input, "Offline vectors (fvecs)");
    sweep->add_option("--synthetic", sweep_data.synthetic_n, "Generate N synthetic vectors");
    sweep->add_option("--dim", sweep_data.synthetic_dim, "Synthetic dimensionality");
    sweep->add_option("--clusters", sweep_clusters, "Number of IVF clusters");
    sweep->add_option("--inserts", sweep_inserts, "Insertion workload size");
    sweep->add_option("--k", sweep_k, "Neighbors per query");
    sweep->add_option("--seed", sweep_data.seed, "Seed");
    sweep->add_option("--report", sweep_report, "Report output path")->required();
    sweep->add_option("--format", sweep_format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            Dataset ds = load_or_synthesize(train_data);
            auto cfg = make_index_config(clusters, ds.dim, block_capacity, rearrange_threshold,
                                         train_data.seed, ds.size() * 2);
            ClusterIndex index(ds.all(), ds.size(), cfg);
            index.save(out_path);
            std::cout << "trained " << clusters << " clusters over " << ds.size()
                      << " vectors (dim " << ds.dim << ") -> " << out_path << "\n";
            return 0;
        }

        if (*oracle) {
            Dataset base = load_fvecs(oracle_input);
            Dataset queries = load_fvecs(oracle_queries);
            std::vector<std::vector<std::int32_t>> rows;
            rows.reserve(queries.size());
            for (std::size_t q = 0; q < queries.size(); ++q) {
                auto res = exact_knn(base.all(), base.size(), base.dim, queries.row(q), oracle_k);
                std::vector<std::int32_t> row(res.ids.begin(), res.ids.end());
                rows.push_back(std::move(row));
            }
            save_ivecs(oracle_out, rows);
            std::cout << "wrote ground truth for " << queries.size() << " queries -> "
                      << oracle_out << "\n";
            return 0;
        }

        if (*replay_cmd) {
            auto index = ClusterIndex::load(replay_index);
            spec.arrival =
                arrival == "poisson" ? ArrivalProcess::Poisson : ArrivalProcess::FixedInterval;
            spec.nprobe = std::min(spec.nprobe, index->num_clusters());

            Dataset queries = replay_queries_path.empty()
                                  ? synthetic_dataset(256, index->dim(), 16, spec.seed + 1)
                                  : load_fvecs(replay_queries_path);
            Dataset inserts = replay_insert_path.empty()
                                  ? synthetic_dataset(std::max<std::size_t>(
                                                          1024, static_cast<std::size_t>(
                                                                    spec.qps_insert *
                                                                    spec.duration_s *
                                                                    spec.insert_batch) +
                                                                    1),
                                                      index->dim(), 16, spec.seed + 2)
                                  : load_fvecs(replay_insert_path);

            ExecutorConfig ecfg;
            ecfg.num_lanes = exec_lanes;
            ecfg.mode = replay_mode == "serialized" ? ExecutionMode::Serialized
                                                    : ExecutionMode::Parallel;

            WorkloadReport report;
            if (replay_backend == "baseline") {
                // Rebuild the baseline backend from the snapshot contents.
                std::vector<float> flat;
                std::vector<std::pair<vector_id, std::vector<float>>> all;
                for (std::size_t c = 0; c < index->num_clusters(); ++c) {
                    auto part = index->cluster_contents(static_cast<cluster_id>(c));
                    all.insert(all.end(), part.begin(), part.end());
                }
                std::sort(all.begin(), all.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                flat.reserve(all.size() * index->dim());
                for (const auto& [id, vec] : all)
                    flat.insert(flat.end(), vec.begin(), vec.end());
                IndexConfig bcfg = index->config();
                BaselineIndex baseline({flat.data(), flat.size()}, all.size(), bcfg);
                Executor exec(baseline, ecfg);
                report = replay(spec, exec, baseline, queries, inserts, compute_recall);
                exec.shutdown();
            } else {
                Executor exec(*index, ecfg);
                report = replay(spec, exec, *index, queries, inserts, compute_recall);
                exec.shutdown();
                if (!dump_pool_path.empty()) {
                    std::ofstream dump(dump_pool_path);
                    index->dump_pool(dump);
                }
            }
            report_emit(report, replay_report,
                        replay_format == "json" ? ReportFormat::Json : ReportFormat::Csv,
                        replay_backend + "_" + replay_mode);
            std::cout << "combined latency " << report.combined_latency_ms << " ms ("
                      << report.search.count << " searches, " << report.insertion.count
                      << " insertions, " << report.rejected << " rejected) -> " << replay_report
                      << "\n";
            return 0;
        }

        if (*sweep) {
            Dataset ds = load_or_synthesize(sweep_data);
            const std::size_t half = ds.size() / 2;
            Dataset offline{ds.dim, {ds.data.begin(), ds.data.begin() + half * ds.dim}};
            Dataset held{ds.dim, {ds.data.begin() + half * ds.dim, ds.data.end()}};
            std::vector<std::pair<std::string, WorkloadReport>> reports;

            for (const std::size_t value : sweep_values) {
                const std::size_t cap = sweep_param == "block-capacity" ? value : 64;
                const std::size_t threshold =
                    sweep_param == "rearrange-threshold" ? value : 1ull << 30;
                auto cfg = make_index_config(sweep_clusters, ds.dim, cap, threshold,
                                             sweep_data.seed, half + sweep_inserts);
                ClusterIndex index(offline.all(), half, cfg);

                const std::size_t nprobe =
                    sweep_param == "nprobe" ? std::min(value, sweep_clusters) : 8;

                // Insert the workload in executor-sized batches.
                std::size_t cursor = 0;
                while (cursor < sweep_inserts) {
                    const std::size_t chunk = std::min<std::size_t>(1024, sweep_inserts - cursor);
                    std::vector<float> buf;
                    buf.reserve(chunk * ds.dim);
                    for (std::size_t i = 0; i < chunk; ++i) {
                        const auto row = held.row((cursor + i) % held.size());
                        buf.insert(buf.end(), row.begin(), row.end());
                    }
                    index.insert(buf, chunk);
                    cursor += chunk;
                    if (sweep_param == "rearrange-threshold") index.rearrange_sweep();
                }

                WorkloadReport rep;
                // Timed search pass before/after rearrangement for the
                // threshold sweep; plain stats otherwise.
                Dataset probeq = synthetic_dataset(64, ds.dim, 16, sweep_data.seed + 3);
                auto timed_mean_ms = [&]() {
                    const auto t0 = std::chrono::steady_clock::now();
                    for (std::size_t q = 0; q < probeq.size(); ++q)
                        (void)index.search(probeq.row(q), sweep_k,
                                           std::min(nprobe, sweep_clusters));
                    const auto t1 = std::chrono::steady_clock::now();
                    return std::chrono::duration<double, std::milli>(t1 - t0).count() /
                           static_cast<double>(probeq.size());
                };
                if (sweep_param == "rearrange-threshold") {
                    rep.search.mean_ms = timed_mean_ms();  // latency before
                    for (std::size_t c = 0; c < sweep_clusters; ++c)
                        index.rearrange(static_cast<cluster_id>(c));
                    rep.insertion.mean_ms = timed_mean_ms();  // latency after
                    rep.combined_latency_ms = rep.search.mean_ms + rep.insertion.mean_ms;
                    rep.rearrange_events = index.take_rearrange_events();
                } else if (sweep_param == "nprobe") {
                    std::vector<SearchResult> got, truth;
                    std::vector<std::pair<vector_id, std::vector<float>>> everything;
                    for (std::size_t c = 0; c < sweep_clusters; ++c) {
                        auto part = index.cluster_contents(static_cast<cluster_id>(c));
                        everything.insert(everything.end(), part.begin(), part.end());
                    }
                    for (std::size_t q = 0; q < probeq.size(); ++q) {
                        got.push_back(index.search(probeq.row(q), sweep_k, nprobe));
                        truth.push_back(exact_knn_pairs(everything, probeq.row(q), sweep_k));
                    }
                    rep.recall = recall_at_k(got, truth, sweep_k);
                    rep.search.mean_ms = timed_mean_ms();
                } else {
                    rep.search.mean_ms = timed_mean_ms();
                }
                std::size_t hop_total = 0;
                for (std::size_t c = 0; c < sweep_clusters; ++c) {
                    const std::size_t h = index.hop_count(static_cast<cluster_id>(c));
                    if (rep.hop_histogram.size() <= h) rep.hop_histogram.resize(h + 1, 0);
                    ++rep.hop_histogram[h];
                    hop_total += h;
                }
                rep.hop_mean = static_cast<double>(hop_total) / sweep_clusters;
                rep.scalars_copied = index.scalars_copied();
                reports.emplace_back(sweep_param + "_" + std::to_string(value), rep);
            }
            report_emit_all(reports, sweep_report,
                            sweep_format == "json" ? ReportFormat::Json : ReportFormat::Csv);
            std::cout << "swept " << sweep_param << " over " << sweep_values.size()
                      << " values -> " << sweep_report << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
