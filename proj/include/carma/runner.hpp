#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carma/metrics.hpp"
#include "carma/traces.hpp"
#include "carma/world.hpp"

namespace carma {

// A fully resolved, deterministic experiment: trace source, policy, platform
// constants, estimator provisioning, and output switches.
struct RunConfig {
    std::string trace_path;  // used when mix is not set
    std::optional<TraceMix> mix;
    std::uint64_t trace_seed = 1;

    PolicyConfig policy;
    SimConstants constants;
    std::vector<double> mig_instances;  // fractions, mig mode only

    // Learned-estimator provisioning: snapshots when given, otherwise
    // trained in-process from seeded synthetic datasets.
    std::map<ModelFamily, std::string> estimator_snapshots;
    std::uint64_t estimator_seed = 11;
    std::size_t estimator_k = 5;
    std::size_t estimator_samples = 4000;

    bool enable_timeline = false;
    SimSeconds sample_interval = 10.0;
    bool enable_event_log = false;
    bool verbose_decisions = false;
};

struct RunArtifacts {
    RunReport report;
    RunRecord record;
    std::map<std::string, TaskRun> runs;  // final residency bookkeeping
    std::vector<std::vector<std::pair<SimSeconds, double>>> smact_steps;
    std::vector<double> gpu_energy_j;
    std::vector<std::string> timeline;  // t,gpu,smact,mem_used_bytes,power_w
    std::vector<std::string> event_log;
    std::vector<std::string> decision_log;
};

RunArtifacts run_simulation(const RunConfig& config);

std::map<ModelFamily, LearnedEstimator> provision_estimators(
    const RunConfig& config, const std::vector<TaskSpec>& tasks);

struct SweepCell {
    PolicyConfig policy;
    std::string label;  // optional; defaults to the policy/estimator/mode triple
};

struct SweepConfig {
    RunConfig base;
    std::vector<SweepCell> cells;          // declared order is output order
    std::vector<std::uint64_t> seeds = {1};
    int max_threads = 0;  // 0: CARMA_SIM_THREADS or hardware concurrency
};

struct SweepResult {
    std::vector<std::vector<RunReport>> reports;  // [cell][seed]
    std::string csv;  // per-seed rows plus one median row per cell
};

// Runs the matrix; cells execute concurrently, any failure aborts the sweep.
SweepResult run_sweep(const SweepConfig& config);

double median(std::vector<double> values);

}  // namespace carma
