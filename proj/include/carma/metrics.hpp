#pragma once

#include <map>
#include <string>
#include <vector>

#include "carma/manager.hpp"

namespace carma {

// Everything the metrics pass needs from a finished simulation.
struct RunRecord {
    std::map<std::string, TaskTiming> timing;
    std::map<std::string, TaskSpec> tasks;
    int oom_count = 0;
    int n_gpus = 0;
    std::vector<double> gpu_energy_j;
    std::vector<double> gpu_mean_smact;
    std::vector<Bytes> gpu_peak_mem;
    SimSeconds first_submit = 0.0;
    SimSeconds last_complete = 0.0;
    // Config echo.
    PolicyConfig config;
    std::uint64_t seed = 0;
    std::string trace_name;
    SimConstants constants;
};

struct TaskOutcome {
    std::string id;
    SimSeconds submit = 0.0;
    SimSeconds final_dispatch = 0.0;
    SimSeconds complete = 0.0;
    SimSeconds wait = 0.0;  // everything before the successful dispatch
    SimSeconds exec = 0.0;  // residency of the successful attempt
    SimSeconds jct = 0.0;
    int ooms = 0;
};

struct GpuSummary {
    int id = 0;
    double energy_j = 0.0;
    double mean_smact = 0.0;
    Bytes peak_mem = 0;
};

struct RunReport {
    SimSeconds trace_total_time = 0.0;
    SimSeconds avg_wait = 0.0;
    SimSeconds avg_exec = 0.0;
    SimSeconds avg_jct = 0.0;
    int oom_count = 0;
    double energy_mj = 0.0;
    std::vector<TaskOutcome> tasks;
    std::vector<GpuSummary> per_gpu;
    PolicyConfig config;
    std::uint64_t seed = 0;
    std::string trace_name;
};

// Throws IncompleteRun unless every task completed.
RunReport compute_report(const RunRecord& record);

enum class ReportFormat { json, csv };

// Stable field ordering; identical reports serialize to identical bytes.
std::string emit_report(const RunReport& report, ReportFormat format);

RunReport parse_report_json(const std::string& text);

// Header of the one-row CSV form (also used for sweep tables).
std::string report_csv_header();

}  // namespace carma
