#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "carma/gpu.hpp"
#include "carma/task.hpp"

namespace carma {

enum class EventKind { arrival, window_expiry, completion, oom_crash, sample_tick };

std::string_view event_kind_name(EventKind k);

struct Event {
    SimSeconds t = 0.0;
    std::uint64_t seq = 0;  // insertion order; breaks time ties
    EventKind kind = EventKind::arrival;
    std::string task_id;
    std::uint64_t gen = 0;  // completion generation; stale events are skipped
};

struct PlaceFailure {
    int gpu = -1;
    OomFailure oom;
};

// One task's residency bookkeeping. remaining_work counts sim-seconds at
// full rate; the effective rate is the min across the task's devices.
struct TaskRun {
    TaskSpec spec;
    std::vector<int> gpu_ids;
    std::map<int, MemRegion> regions;
    std::map<int, int> instance_of;  // gpu id -> mig instance
    SimSeconds remaining = 0.0;
    double rate = 0.0;
    SimSeconds last_update = 0.0;
    SimSeconds executed_integral = 0.0;  // integral of rate over residency
    std::uint64_t gen = 0;
    bool resident = false;
    bool completed = false;
};

// Deterministic single-threaded event loop over a bank of GPUs. The world
// owns residency, memory, rates, and energy accounting; queueing policy
// lives in the manager, which drives the world through place/complete.
class World {
  public:
    World(const SimConstants& consts, CollocationMode mode,
          const std::vector<double>& mig_fractions = {});

    SimSeconds now() const { return now_; }
    const SimConstants& constants() const { return consts_; }
    std::vector<GpuDevice>& gpus() { return gpus_; }
    const std::vector<GpuDevice>& gpus() const { return gpus_; }
    CollocationMode mode() const { return mode_; }

    void schedule(SimSeconds t, EventKind kind, const std::string& task_id = {},
                  std::uint64_t gen = 0);
    bool has_events() const { return !queue_.empty(); }

    // Handler sees arrival / window_expiry / completion / oom_crash events
    // after the world's own bookkeeping ran for them.
    using Handler = std::function<void(const Event&)>;
    void set_handler(Handler h) { handler_ = std::move(h); }

    // Processes one pending event: integrates power to the event time and
    // dispatches it. Returns false when the queue is empty.
    bool step();

    // Processes all events with t <= until, then integrates power to
    // `until`. Idle spans accumulate idle-floor energy.
    void advance(SimSeconds until);

    // Runs the queue dry.
    void run();

    // Allocates the task's footprint on every listed GPU and makes it
    // resident; on any per-GPU failure everything already placed is rolled
    // back and the failure is returned.
    std::optional<PlaceFailure> place(const TaskSpec& task,
                                      const std::vector<int>& gpu_ids,
                                      const std::map<int, int>& instances = {});

    // Completion bookkeeping driven from the completion event.
    void finish(const std::string& task_id);

    const TaskRun* find_run(const std::string& task_id) const;
    TaskRun* find_run(const std::string& task_id);
    const std::map<std::string, TaskRun>& runs() const { return runs_; }

    bool all_idle() const;

    double total_energy_j() const;

    using LogSink = std::function<void(const std::string&)>;
    void set_event_log(LogSink sink) { log_ = std::move(sink); }

    void emit_timeline_row(std::vector<std::string>& out) const;

  private:
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            if (a.t != b.t) return a.t > b.t;
            return a.seq > b.seq;
        }
    };

    void integrate_to(SimSeconds t);
    void refresh_rates(const std::vector<int>& touched_gpus);
    void log_event(const std::string& line);

    SimConstants consts_;
    CollocationMode mode_;
    SimSeconds now_ = 0.0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::vector<GpuDevice> gpus_;
    std::map<std::string, TaskRun> runs_;
    Handler handler_;
    LogSink log_;
};

}  // namespace carma
