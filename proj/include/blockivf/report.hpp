#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "blockivf/workload.hpp"

namespace blockivf {

enum class ReportFormat { Csv, Json };

/// CSV rows are "experiment,metric,value" in a fixed metric order; JSON is one
/// nested object per experiment. Both carry the same metrics so Fig.3/Fig.4
/// style curves can be plotted externally.
void emit_csv(std::ostream& os, const std::string& experiment, const WorkloadReport& report,
              bool with_header = true);
std::string report_to_json(const std::string& experiment, const WorkloadReport& report);

void report_emit(const WorkloadReport& report, const std::string& path, ReportFormat format,
                 const std::string& experiment = "replay");

/// Multi-experiment emission (sweeps).
void report_emit_all(const std::vector<std::pair<std::string, WorkloadReport>>& reports,
                     const std::string& path, ReportFormat format);

}  // namespace blockivf
