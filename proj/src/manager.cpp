#include "carma/manager.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "carma/errors.hpp"

namespace carma {

std::string_view policy_name(Policy p) {
    switch (p) {
        case Policy::exclusive: return "exclusive";
        case Policy::rr: return "rr";
        case Policy::magm: return "magm";
        case Policy::lug: return "lug";
        case Policy::mug: return "mug";
    }
    return "unknown";
}

Policy policy_from_name(std::string_view name) {
    if (name == "exclusive") return Policy::exclusive;
    if (name == "rr") return Policy::rr;
    if (name == "magm") return Policy::magm;
    if (name == "lug") return Policy::lug;
    if (name == "mug") return Policy::mug;
    throw ConfigError("unknown policy '" + std::string(name) + "'");
}

std::string_view estimator_kind_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::none: return "none";
        case EstimatorKind::oracle: return "oracle";
        case EstimatorKind::analytical: return "analytical";
        case EstimatorKind::static_graph: return "static_graph";
        case EstimatorKind::learned: return "learned";
    }
    return "unknown";
}

EstimatorKind estimator_kind_from_name(std::string_view name) {
    if (name == "none") return EstimatorKind::none;
    if (name == "oracle") return EstimatorKind::oracle;
    if (name == "analytical") return EstimatorKind::analytical;
    if (name == "static_graph") return EstimatorKind::static_graph;
    if (name == "learned") return EstimatorKind::learned;
    throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

Manager::Manager(World& world, PolicyConfig config)
    : world_(world), config_(std::move(config)) {}

void Manager::set_learned_estimators(std::map<ModelFamily, LearnedEstimator> bank) {
    learned_ = std::move(bank);
}

void Manager::submit(const TaskSpec& task) {
    if (state_.tasks.count(task.id))
        throw DuplicateTaskId("task id '" + task.id + "' already submitted");
    state_.tasks.emplace(task.id, task);
    state_.main_queue.push_back(task.id);
    state_.timing[task.id].submit = world_.now();
}

std::optional<TaskSpec> Manager::select_next() {
    if (!state_.recovery_queue.empty()) {
        std::string id = state_.recovery_queue.front();
        state_.recovery_queue.pop_front();
        return state_.tasks.at(id);
    }
    if (!state_.main_queue.empty()) {
        std::string id = state_.main_queue.front();
        state_.main_queue.pop_front();
        return state_.tasks.at(id);
    }
    return std::nullopt;
}

std::optional<MemoryEstimate> Manager::make_estimate(const TaskSpec& task) {
    try {
        switch (config_.estimator) {
            case EstimatorKind::none:
                return std::nullopt;
            case EstimatorKind::oracle:
                return estimate_oracle(task, config_.preconditions.safety_margin);
            case EstimatorKind::analytical:
                return estimate_analytical(task);
            case EstimatorKind::static_graph:
                return estimate_static_graph(task);
            case EstimatorKind::learned: {
                auto it = learned_.find(task.model.family);
                if (it == learned_.end())
                    throw FamilyMismatch("no learned estimator for family");
                FeatureVector fv = extract_features(task.model, task.batch_size);
                return estimate_learned(it->second, fv, task.model.family);
            }
        }
    } catch (const IncompatibleFamily&) {
        // The estimator cannot handle this task; fall back to no estimate,
        // exactly what happens when the real tool reports nothing.
        return std::nullopt;
    } catch (const FamilyMismatch&) {
        return std::nullopt;
    }
    return std::nullopt;
}

std::vector<int> Manager::eligible_gpus(const PreconditionSet& pre,
                                        Bytes need) const {
    // Free memory is the reported total, not the largest contiguous block:
    // the monitor cannot see fragmentation.
    std::vector<int> out;
    const Bytes floor = std::max(pre.min_free_mem.value_or(0), need);
    for (const auto& gpu : world_.gpus()) {
        if (gpu.windowed_smact(world_.now(), config_.monitor_window) >
            pre.max_smact)
            continue;
        if (gpu.total_free() < floor) continue;
        out.push_back(gpu.id());
    }
    return out;
}

std::optional<int> Manager::pick_instance(const GpuDevice& gpu, Bytes need) const {
    // MIG instances host at most one task each.
    for (std::size_t i = 0; i < gpu.instances().size(); ++i) {
        int idx = static_cast<int>(i);
        if (!gpu.instance_idle(idx)) continue;
        if (gpu.instance_free(idx) < std::max<Bytes>(need, 1)) continue;
        return idx;
    }
    return std::nullopt;
}

MapDecision Manager::map_task(const TaskSpec& task,
                              const std::optional<MemoryEstimate>& estimate,
                              bool from_recovery) {
    MapDecision decision;
    decision.estimate = estimate;
    const int n = static_cast<int>(world_.gpus().size());
    const std::size_t want = static_cast<std::size_t>(task.gpus_requested);
    const bool mig = world_.mode() == CollocationMode::mig;

    const Policy policy =
        from_recovery ? Policy::exclusive : config_.policy;  // crashed tasks re-run exclusively

    if (policy == Policy::exclusive) {
        for (const auto& gpu : world_.gpus()) {
            if (!gpu.idle()) continue;
            decision.gpu_ids.push_back(gpu.id());
            if (mig) {
                auto inst = pick_instance(gpu, 1);
                decision.instances[gpu.id()] = inst.value_or(0);
            }
            if (decision.gpu_ids.size() == want) break;
        }
        if (decision.gpu_ids.size() != want) decision.gpu_ids.clear();
        return decision;
    }

    Bytes need = 0;
    if (estimate) {
        // A wild over-estimate must not wedge the queue forever: a fully
        // idle GPU is the best the system can ever offer.
        need = std::min(estimate->bytes, world_.constants().gpu_capacity);
    }

    std::vector<int> eligible;
    if (policy == Policy::rr && !config_.rr_apply_preconditions) {
        for (int i = 0; i < n; ++i) eligible.push_back(i);
    } else {
        eligible = eligible_gpus(config_.preconditions, need);
    }

    if (mig) {
        std::vector<int> filtered;
        for (int g : eligible) {
            auto inst = pick_instance(world_.gpus()[static_cast<std::size_t>(g)],
                                      std::max<Bytes>(need, 1));
            if (inst) {
                filtered.push_back(g);
                decision.instances[g] = *inst;
            }
        }
        eligible.swap(filtered);
    }

    if (eligible.size() < want) {
        decision.gpu_ids.clear();
        decision.instances.clear();
        return decision;
    }

    switch (policy) {
        case Policy::rr: {
            // Cyclic scan from the cursor over eligible devices.
            std::vector<int> order;
            for (int step = 0; step < n && order.size() < want; ++step) {
                int g = (state_.rr_cursor + step) % n;
                if (std::find(eligible.begin(), eligible.end(), g) != eligible.end())
                    order.push_back(g);
            }
            if (order.size() == want) {
                decision.gpu_ids = order;
                state_.rr_cursor = (order.back() + 1) % n;
            }
            break;
        }
        case Policy::magm:
        case Policy::lug:
        case Policy::mug: {
            std::vector<int> sorted = eligible;
            std::stable_sort(sorted.begin(), sorted.end(), [&](int a, int b) {
                const auto& ga = world_.gpus()[static_cast<std::size_t>(a)];
                const auto& gb = world_.gpus()[static_cast<std::size_t>(b)];
                if (policy == Policy::magm) {
                    if (ga.total_free() != gb.total_free())
                        return ga.total_free() > gb.total_free();
                } else {
                    double sa = ga.windowed_smact(world_.now(), config_.monitor_window);
                    double sb = gb.windowed_smact(world_.now(), config_.monitor_window);
                    if (sa != sb)
                        return policy == Policy::lug ? sa < sb : sa > sb;
                }
                return a < b;  // ties to the lowest id
            });
            decision.gpu_ids.assign(sorted.begin(),
                                    sorted.begin() + static_cast<std::ptrdiff_t>(want));
            break;
        }
        case Policy::exclusive:
            break;  // handled above
    }

    if (mig) {
        // keep only instances for the chosen devices
        std::map<int, int> chosen;
        for (int g : decision.gpu_ids)
            if (auto it = decision.instances.find(g); it != decision.instances.end())
                chosen[g] = it->second;
        decision.instances = std::move(chosen);
    }
    return decision;
}

bool Manager::dispatch(const TaskSpec& task, const MapDecision& decision) {
    auto& timing = state_.timing[task.id];
    timing.dispatch_attempts.push_back(world_.now());
    auto failure = world_.place(task, decision.gpu_ids, decision.instances);
    if (failure) {
        // Partial allocations were rolled back; the crash surfaces after the
        // framework startup delay and recovery picks the task up from there.
        world_.schedule(world_.now() + world_.constants().oom_startup_delay,
                        EventKind::oom_crash, task.id);
        return false;
    }
    timing.final_dispatch = world_.now();
    return true;
}

void Manager::handle_oom(const std::string& task_id) {
    state_.oom_count++;
    state_.timing[task_id].oom_count++;
    state_.timing[task_id].crash_times.push_back(world_.now());
    state_.recovery_queue.push_back(task_id);
}

bool Manager::gate_open() const {
    if (world_.now() >= window_deadline_) return true;
    // An idle server needs no observation window.
    return world_.all_idle();
}

void Manager::arm_window() {
    window_deadline_ = world_.now() + config_.monitor_window;
    world_.schedule(window_deadline_, EventKind::window_expiry);
}

void Manager::try_schedule() {
    if (!gate_open()) return;

    bool from_recovery = !state_.recovery_queue.empty();
    const std::string* head = nullptr;
    if (from_recovery)
        head = &state_.recovery_queue.front();
    else if (!state_.main_queue.empty())
        head = &state_.main_queue.front();
    if (!head) return;

    const TaskSpec& task = state_.tasks.at(*head);
    std::optional<MemoryEstimate> estimate;
    if (!from_recovery && config_.policy != Policy::exclusive)
        estimate = make_estimate(task);

    MapDecision decision = map_task(task, estimate, from_recovery);

    if (decision_log_) {
        char buf[256];
        if (decision.deferred()) {
            std::snprintf(buf, sizeof(buf),
                          "t=%.3f decide task=%s policy=%s gpu=defer est_bytes=%llu",
                          world_.now(), task.id.c_str(),
                          std::string(policy_name(config_.policy)).c_str(),
                          static_cast<unsigned long long>(
                              estimate ? estimate->bytes : 0));
        } else {
            std::snprintf(buf, sizeof(buf),
                          "t=%.3f decide task=%s policy=%s gpu=%d est_bytes=%llu",
                          world_.now(), task.id.c_str(),
                          std::string(policy_name(from_recovery
                                                      ? Policy::exclusive
                                                      : config_.policy))
                              .c_str(),
                          decision.gpu_ids.front(),
                          static_cast<unsigned long long>(
                              estimate ? estimate->bytes : 0));
        }
        decision_log_(buf);
    }

    if (decision.deferred()) return;  // retried on the next completion/expiry

    if (from_recovery)
        state_.recovery_queue.pop_front();
    else
        state_.main_queue.pop_front();

    dispatch(task, decision);
    arm_window();
}

void Manager::on_event(const Event& ev) {
    switch (ev.kind) {
        case EventKind::arrival: {
            // arrival events carry the task in state_.tasks already (runner
            // submits through us); nothing extra here
            try_schedule();
            break;
        }
        case EventKind::window_expiry:
            if (ev.t == window_deadline_) try_schedule();
            break;
        case EventKind::completion: {
            auto& timing = state_.timing[ev.task_id];
            timing.complete = world_.now();
            try_schedule();
            break;
        }
        case EventKind::oom_crash:
            handle_oom(ev.task_id);
            try_schedule();
            break;
        case EventKind::sample_tick:
            break;
    }
}

bool Manager::all_done() const {
    for (const auto& [id, timing] : state_.timing)
        if (timing.complete < 0.0) return false;
    return !state_.tasks.empty();
}

}  // namespace carma
