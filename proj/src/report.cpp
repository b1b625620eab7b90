#include "blockivf/report.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace blockivf {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void rows(std::ostream& os, const std::string& exp, const WorkloadReport& r) {
    auto row = [&](const std::string& metric, const std::string& value) {
        os << exp << ',' << metric << ',' << value << '\n';
    };
    row("latency_search_ms", fmt(r.search.mean_ms));
    row("latency_insert_ms", fmt(r.insertion.mean_ms));
    row("latency_combined_ms", fmt(r.combined_latency_ms));
    row("search_p50_ms", fmt(r.search.p50_ms));
    row("search_p95_ms", fmt(r.search.p95_ms));
    row("search_p99_ms", fmt(r.search.p99_ms));
    row("insert_p50_ms", fmt(r.insertion.p50_ms));
    row("insert_p95_ms", fmt(r.insertion.p95_ms));
    row("insert_p99_ms", fmt(r.insertion.p99_ms));
    row("search_count", std::to_string(r.search.count));
    row("insert_count", std::to_string(r.insertion.count));
    row("search_issued", std::to_string(r.search_issued));
    row("insert_issued", std::to_string(r.insert_issued));
    row("rejected", std::to_string(r.rejected));
    row("timeouts_search", std::to_string(r.timeouts_search));
    row("timeouts_insert", std::to_string(r.timeouts_insert));
    row("errors", std::to_string(r.errors));
    row("timeout_ms", fmt(r.timeout_ms));
    row("saturated", r.saturated ? "1" : "0");
    row("scalars_copied", std::to_string(r.scalars_copied));
    row("reallocations", std::to_string(r.reallocations));
    row("hop_mean", fmt(r.hop_mean));
    if (r.recall >= 0) row("recall_at_k", fmt(r.recall));
    for (std::size_t h = 0; h < r.hop_histogram.size(); ++h)
        row("hop_hist_" + std::to_string(h), std::to_string(r.hop_histogram[h]));
    for (std::size_t i = 0; i < r.rearrange_events.size(); ++i) {
        const auto& ev = r.rearrange_events[i];
        const std::string p = "rearrange_" + std::to_string(i) + "_";
        row(p + "cluster", std::to_string(ev.cluster));
        row(p + "hops_before", std::to_string(ev.hops_before));
        row(p + "hops_after", std::to_string(ev.hops_after));
        row(p + "cost_ms", fmt(ev.duration_us / 1000.0));
    }
}

nlohmann::json to_json(const WorkloadReport& r) {
    auto stats = [](const LatencyStats& s) {
        return nlohmann::json{{"count", s.count}, {"mean_ms", s.mean_ms},
                              {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms},
                              {"p99_ms", s.p99_ms}, {"max_ms", s.max_ms}};
    };
    nlohmann::json j{
        {"search", stats(r.search)},
        {"insertion", stats(r.insertion)},
        {"latency_combined_ms", r.combined_latency_ms},
        {"search_issued", r.search_issued},
        {"insert_issued", r.insert_issued},
        {"rejected", r.rejected},
        {"timeouts_search", r.timeouts_search},
        {"timeouts_insert", r.timeouts_insert},
        {"errors", r.errors},
        {"timeout_ms", r.timeout_ms},
        {"saturated", r.saturated},
        {"duration_s", r.duration_s},
        {"scalars_copied", r.scalars_copied},
        {"reallocations", r.reallocations},
        {"hop_mean", r.hop_mean},
        {"hop_histogram", r.hop_histogram},
    };
    if (r.recall >= 0) j["recall_at_k"] = r.recall;
    auto events = nlohmann::json::array();
    for (const auto& ev : r.rearrange_events) {
        events.push_back({{"cluster", ev.cluster},
                          {"hops_before", ev.hops_before},
                          {"hops_after", ev.hops_after},
                          {"merges", ev.merges},
                          {"cost_ms", ev.duration_us / 1000.0}});
    }
    j["rearrange_events"] = events;
    return j;
}

}  // namespace

void emit_csv(std::ostream& os, const std::string& experiment, const WorkloadReport& report,
              bool with_header) {
    if (with_header) os << "experiment,metric,value\n";
    if (!report.empty()) rows(os, experiment, report);
}

std::string report_to_json(const std::string& experiment, const WorkloadReport& report) {
    nlohmann::json j;
    j[experiment] = to_json(report);
    return j.dump(2);
}

void report_emit(const WorkloadReport& report, const std::string& path, ReportFormat format,
                 const std::string& experiment) {
    report_emit_all({{experiment, report}}, path, format);
}

void report_emit_all(const std::vector<std::pair<std::string, WorkloadReport>>& reports,
                     const std::string& path, ReportFormat format) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot open " + path + " for writing");
    if (format == ReportFormat::Csv) {
        os << "experiment,metric,value\n";
        for (const auto& [name, rep] : reports)
            if (!rep.empty()) rows(os, name, rep);
    } else {
        nlohmann::json j;
        for (const auto& [name, rep] : reports) j[name] = to_json(rep);
        os << j.dump(2) << '\n';
    }
    if (!os) throw std::runtime_error("report: write failed for " + path);
}

}  // namespace blockivf
