#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carma/estimators.hpp"
#include "carma/world.hpp"

namespace carma {

enum class Policy { exclusive, rr, magm, lug, mug };

std::string_view policy_name(Policy p);
Policy policy_from_name(std::string_view name);

enum class EstimatorKind { none, oracle, analytical, static_graph, learned };

std::string_view estimator_kind_name(EstimatorKind k);
EstimatorKind estimator_kind_from_name(std::string_view name);

// Memory / utilization gates a GPU must clear before receiving a collocated
// task. max_smact is compared against the windowed average, min_free_mem
// against reported total free memory (>= on both sides).
struct PreconditionSet {
    double max_smact = 0.80;
    std::optional<Bytes> min_free_mem;
    Bytes safety_margin = 2 * kGiB;  // oracle mode only
};

struct PolicyConfig {
    Policy policy = Policy::magm;
    PreconditionSet preconditions;
    EstimatorKind estimator = EstimatorKind::none;
    CollocationMode collocation_mode = CollocationMode::mps;
    SimSeconds monitor_window = 60.0;
    // RR ignores preconditions unless they were explicitly configured.
    bool rr_apply_preconditions = false;
};

struct TaskTiming {
    SimSeconds submit = -1.0;
    std::vector<SimSeconds> dispatch_attempts;
    std::vector<SimSeconds> crash_times;
    SimSeconds final_dispatch = -1.0;  // the successful one
    SimSeconds complete = -1.0;
    int oom_count = 0;
};

struct ManagerState {
    std::deque<std::string> main_queue;
    std::deque<std::string> recovery_queue;  // entries are re-run exclusively
    int rr_cursor = 0;
    int oom_count = 0;
    std::map<std::string, TaskSpec> tasks;
    std::map<std::string, TaskTiming> timing;
};

struct MapDecision {
    std::vector<int> gpu_ids;          // empty means defer
    std::map<int, int> instances;      // mig instance per gpu
    std::optional<MemoryEstimate> estimate;

    bool deferred() const { return gpu_ids.empty(); }
};

// The scheduling pipeline: FIFO main queue, higher-priority recovery queue,
// a monitoring window that serializes mapping decisions, pluggable memory
// estimators, and the policy-driven task-to-GPU mapping.
class Manager {
  public:
    Manager(World& world, PolicyConfig config);

    void set_learned_estimators(std::map<ModelFamily, LearnedEstimator> bank);

    void submit(const TaskSpec& task);  // throws DuplicateTaskId
    std::optional<TaskSpec> select_next();

    std::vector<int> eligible_gpus(const PreconditionSet& pre, Bytes need) const;

    MapDecision map_task(const TaskSpec& task,
                         const std::optional<MemoryEstimate>& estimate,
                         bool from_recovery);

    // Attempts the placement; on failure schedules the crash event. Returns
    // true when the task became resident.
    bool dispatch(const TaskSpec& task, const MapDecision& decision);

    void handle_oom(const std::string& task_id);

    // Event glue used by the runner.
    void on_event(const Event& ev);

    // One mapping decision, if the monitor gate allows it right now.
    void try_schedule();

    const ManagerState& state() const { return state_; }
    ManagerState& state() { return state_; }
    const PolicyConfig& config() const { return config_; }
    SimSeconds window_deadline() const { return window_deadline_; }

    bool all_done() const;

    std::optional<MemoryEstimate> make_estimate(const TaskSpec& task);

    using LogSink = std::function<void(const std::string&)>;
    void set_decision_log(LogSink sink) { decision_log_ = std::move(sink); }

  private:
    bool gate_open() const;
    void arm_window();
    std::optional<int> pick_instance(const GpuDevice& gpu, Bytes need) const;

    World& world_;
    PolicyConfig config_;
    ManagerState state_;
    std::map<ModelFamily, LearnedEstimator> learned_;
    SimSeconds window_deadline_ = 0.0;
    LogSink decision_log_;
};

}  // namespace carma
