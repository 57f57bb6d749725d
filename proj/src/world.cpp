#include "carma/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "carma/errors.hpp"

namespace carma {

std::string_view event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::arrival: return "arrival";
        case EventKind::window_expiry: return "window_expiry";
        case EventKind::completion: return "completion";
        case EventKind::oom_crash: return "oom_crash";
        case EventKind::sample_tick: return "sample_tick";
    }
    return "unknown";
}

World::World(const SimConstants& consts, CollocationMode mode,
             const std::vector<double>& mig_fractions)
    : consts_(consts), mode_(mode) {
    for (int i = 0; i < consts.gpu_count; ++i)
        gpus_.emplace_back(i, consts.gpu_capacity, mode, consts.alloc_block,
                           mig_fractions);
}

void World::schedule(SimSeconds t, EventKind kind, const std::string& task_id,
                     std::uint64_t gen) {
    if (t < now_) throw CarmaError("cannot schedule an event in the past");
    queue_.push(Event{t, next_seq_++, kind, task_id, gen});
}

void World::integrate_to(SimSeconds t) {
    if (t < now_) throw CarmaError("time went backwards");
    const double dt = t - now_;
    if (dt > 0.0) {
        for (auto& gpu : gpus_) gpu.energy_j += gpu.power_draw(consts_) * dt;
    }
    now_ = t;
}

bool World::step() {
    if (queue_.empty()) return false;
    Event ev = queue_.top();
    queue_.pop();
    integrate_to(ev.t);

    if (ev.kind == EventKind::completion) {
        TaskRun* run = find_run(ev.task_id);
        if (!run || !run->resident || run->gen != ev.gen)
            return true;  // superseded by a rate change
        finish(ev.task_id);
    }
    if (handler_) handler_(ev);
    return true;
}

void World::advance(SimSeconds until) {
    if (until < now_) throw CarmaError("advance target is in the past");
    while (!queue_.empty() && queue_.top().t <= until) step();
    integrate_to(until);
}

void World::run() {
    while (step()) {
    }
}

std::optional<PlaceFailure> World::place(const TaskSpec& task,
                                         const std::vector<int>& gpu_ids,
                                         const std::map<int, int>& instances) {
    auto it = runs_.find(task.id);
    if (it == runs_.end())
        it = runs_.emplace(task.id, TaskRun{}).first;
    TaskRun& run = it->second;
    run.spec = task;

    std::vector<std::pair<int, MemRegion>> placed;
    for (int g : gpu_ids) {
        GpuDevice& gpu = gpus_.at(static_cast<std::size_t>(g));
        int inst = 0;
        if (auto iit = instances.find(g); iit != instances.end()) inst = iit->second;
        AllocResult res = mode_ == CollocationMode::mig
                              ? gpu.allocate_on_instance(inst, task.true_mem_bytes)
                              : gpu.allocate(task.true_mem_bytes);
        if (std::holds_alternative<OomFailure>(res)) {
            for (auto& [pg, region] : placed)
                gpus_.at(static_cast<std::size_t>(pg)).free_region(region);
            char buf[160];
            std::snprintf(buf, sizeof(buf),
                          "t=%.3f ev=alloc_oom gpu=%d task=%s req=%llu free=%llu "
                          "largest=%llu",
                          now_, g, task.id.c_str(),
                          static_cast<unsigned long long>(
                              std::get<OomFailure>(res).requested),
                          static_cast<unsigned long long>(
                              std::get<OomFailure>(res).total_free),
                          static_cast<unsigned long long>(
                              std::get<OomFailure>(res).largest_free));
            log_event(buf);
            return PlaceFailure{g, std::get<OomFailure>(res)};
        }
        placed.push_back({g, std::get<MemRegion>(res)});
    }

    run.gpu_ids = gpu_ids;
    run.regions.clear();
    run.instance_of.clear();
    for (auto& [g, region] : placed) run.regions[g] = region;
    for (auto& [g, inst] : instances) run.instance_of[g] = inst;
    run.remaining = task.total_work();
    run.last_update = now_;
    run.resident = true;
    for (int g : gpu_ids) {
        int inst = 0;
        if (auto iit = run.instance_of.find(g); iit != run.instance_of.end())
            inst = iit->second;
        gpus_.at(static_cast<std::size_t>(g)).add_resident(task.id, task.smact_demand, inst);
    }
    refresh_rates(gpu_ids);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "t=%.3f ev=place task=%s gpus=%zu", now_,
                  task.id.c_str(), gpu_ids.size());
    log_event(buf);
    return std::nullopt;
}

void World::finish(const std::string& task_id) {
    TaskRun* run = find_run(task_id);
    if (!run || !run->resident)
        throw CarmaError("finish on a non-resident task '" + task_id + "'");
    // Settle progress up to now; the completion event was scheduled for the
    // instant remaining work hits zero.
    const double dt = now_ - run->last_update;
    run->executed_integral += run->rate * dt;
    run->remaining = std::max(0.0, run->remaining - run->rate * dt);
    run->last_update = now_;
    run->resident = false;
    run->completed = true;

    for (int g : run->gpu_ids) {
        GpuDevice& gpu = gpus_.at(static_cast<std::size_t>(g));
        gpu.free_region(run->regions.at(g));
        gpu.remove_resident(task_id);
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "t=%.3f ev=complete task=%s", now_,
                  task_id.c_str());
    log_event(buf);
    refresh_rates(run->gpu_ids);
}

void World::refresh_rates(const std::vector<int>& touched_gpus) {
    // Tasks on any touched GPU may change rate; multi-GPU tasks run at the
    // slowest of their devices.
    std::set<std::string> affected;
    for (int g : touched_gpus) {
        gpus_.at(static_cast<std::size_t>(g)).record_smact(now_);
        for (const auto& r : gpus_.at(static_cast<std::size_t>(g)).residents())
            affected.insert(r.task_id);
    }
    std::map<int, std::map<std::string, double>> rates_by_gpu;
    for (const std::string& id : affected) {
        TaskRun& run = runs_.at(id);
        double rate = 1.0;
        for (int g : run.gpu_ids) {
            auto& rates = rates_by_gpu[g];
            if (rates.empty())
                rates = gpus_.at(static_cast<std::size_t>(g)).effective_rates();
            rate = std::min(rate, rates.at(id));
        }
        if (rate == run.rate && run.gen != 0) continue;
        const double dt = now_ - run.last_update;
        run.executed_integral += run.rate * dt;
        run.remaining = std::max(0.0, run.remaining - run.rate * dt);
        run.last_update = now_;
        run.rate = rate;
        run.gen++;
        if (rate <= 0.0) throw CarmaError("resident task with zero rate");
        schedule(now_ + run.remaining / rate, EventKind::completion, id, run.gen);
    }
}

const TaskRun* World::find_run(const std::string& task_id) const {
    auto it = runs_.find(task_id);
    return it == runs_.end() ? nullptr : &it->second;
}

TaskRun* World::find_run(const std::string& task_id) {
    auto it = runs_.find(task_id);
    return it == runs_.end() ? nullptr : &it->second;
}

bool World::all_idle() const {
    for (const auto& gpu : gpus_)
        if (!gpu.idle()) return false;
    return true;
}

double World::total_energy_j() const {
    double sum = 0.0;
    for (const auto& gpu : gpus_) sum += gpu.energy_j;
    return sum;
}

void World::emit_timeline_row(std::vector<std::string>& out) const {
    char buf[160];
    for (const auto& gpu : gpus_) {
        std::snprintf(buf, sizeof(buf), "%.3f,%d,%.4f,%llu,%.2f", now_, gpu.id(),
                      gpu.instantaneous_smact(),
                      static_cast<unsigned long long>(gpu.used_bytes()),
                      gpu.power_draw(consts_));
        out.push_back(buf);
    }
}

void World::log_event(const std::string& line) {
    if (log_) log_(line);
}

}  // namespace carma
