#include "carma/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "carma/errors.hpp"

namespace carma {

std::map<ModelFamily, LearnedEstimator> provision_estimators(
    const RunConfig& config, const std::vector<TaskSpec>& tasks) {
    std::map<ModelFamily, LearnedEstimator> bank;
    if (config.policy.estimator != EstimatorKind::learned) return bank;

    std::set<ModelFamily> families;
    for (const auto& t : tasks) families.insert(t.model.family);

    for (ModelFamily family : families) {
        auto snap = config.estimator_snapshots.find(family);
        if (snap != config.estimator_snapshots.end()) {
            bank.emplace(family, LearnedEstimator::load(snap->second));
            continue;
        }
        const std::uint64_t seed =
            config.estimator_seed + static_cast<std::uint64_t>(family) * 101;
        EstimatorDataset ds = generate_synthetic_dataset(
            family, config.estimator_samples, seed);
        bank.emplace(family, train_learned_estimator(ds, config.estimator_k));
    }
    return bank;
}

RunArtifacts run_simulation(const RunConfig& config) {
    std::vector<TaskSpec> tasks;
    std::string trace_name;
    if (config.mix) {
        TraceFile trace = generate_trace(*config.mix, config.trace_seed);
        tasks = materialize_trace(trace);
        trace_name = std::string(mix_name(*config.mix)) + "-seed" +
                     std::to_string(config.trace_seed);
    } else {
        if (config.trace_path.empty())
            throw ConfigError("run needs either a trace path or a mix+seed");
        tasks = load_trace(config.trace_path);
        trace_name = config.trace_path;
    }
    if (tasks.empty()) throw ConfigError("trace contains no tasks");

    RunArtifacts art;

    World world(config.constants, config.policy.collocation_mode,
                config.mig_instances);
    Manager manager(world, config.policy);
    manager.set_learned_estimators(provision_estimators(config, tasks));

    if (config.enable_event_log)
        world.set_event_log([&](const std::string& line) {
            art.event_log.push_back(line);
        });
    if (config.verbose_decisions)
        manager.set_decision_log([&](const std::string& line) {
            art.decision_log.push_back(line);
        });

    std::map<std::string, const TaskSpec*> by_id;
    for (const auto& t : tasks) {
        if (by_id.count(t.id))
            throw DuplicateTaskId("trace repeats task id '" + t.id + "'");
        by_id[t.id] = &t;
        world.schedule(t.submit_time, EventKind::arrival, t.id);
    }

    if (config.enable_timeline) {
        art.timeline.push_back("t,gpu,smact,mem_used_bytes,power_w");
        world.schedule(tasks.front().submit_time, EventKind::sample_tick);
    }

    world.set_handler([&](const Event& ev) {
        if (ev.kind == EventKind::arrival) manager.submit(*by_id.at(ev.task_id));
        if (ev.kind == EventKind::sample_tick) {
            world.emit_timeline_row(art.timeline);
            if (!manager.all_done())
                world.schedule(world.now() + config.sample_interval,
                               EventKind::sample_tick);
            return;
        }
        manager.on_event(ev);
    });

    world.run();

    if (!manager.all_done()) {
        int pending = 0;
        for (const auto& [id, t] : manager.state().timing)
            if (t.complete < 0.0) ++pending;
        throw IncompleteRun(std::to_string(pending) +
                            " task(s) never completed; the platform cannot "
                            "host them under this config");
    }

    SimSeconds first_submit = tasks.front().submit_time;
    for (const auto& t : tasks) first_submit = std::min(first_submit, t.submit_time);
    SimSeconds last_complete = 0.0;
    for (const auto& [id, t] : manager.state().timing)
        last_complete = std::max(last_complete, t.complete);

    // Trailing window expiries advance the clock past the last completion;
    // energy is read at trace end, and the world is idle after it, so back
    // out the constant idle draw accrued since then.
    const double overshoot = world.now() - last_complete;
    if (overshoot > 0.0)
        for (auto& gpu : world.gpus())
            gpu.energy_j -= gpu.power_draw(config.constants) * overshoot;

    RunRecord record;
    record.timing = manager.state().timing;
    record.tasks = manager.state().tasks;
    record.oom_count = manager.state().oom_count;
    record.n_gpus = static_cast<int>(world.gpus().size());
    record.first_submit = first_submit;
    record.last_complete = last_complete;
    record.config = config.policy;
    record.seed = config.trace_seed;
    record.trace_name = trace_name;
    record.constants = config.constants;
    for (auto& gpu : world.gpus()) {
        record.gpu_energy_j.push_back(gpu.energy_j);
        const double span = last_complete - first_submit;
        record.gpu_mean_smact.push_back(
            span > 0.0 ? gpu.windowed_smact(last_complete, span) : 0.0);
        record.gpu_peak_mem.push_back(gpu.peak_used);
        art.smact_steps.push_back(gpu.smact_steps());
        art.gpu_energy_j.push_back(gpu.energy_j);
    }

    art.report = compute_report(record);
    art.record = std::move(record);
    art.runs = world.runs();
    return art;
}

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

int sweep_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CARMA_SIM_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::string csv_row(const RunReport& rep, const std::string& seed_field) {
    char buf[512];
    const auto& c = rep.config;
    char min_free[32];
    if (c.preconditions.min_free_mem)
        std::snprintf(min_free, sizeof(min_free), "%.2f",
                      as_gib(*c.preconditions.min_free_mem));
    else
        std::snprintf(min_free, sizeof(min_free), "none");
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,%s,%.2f,%s,%.0f,%s,%s,%.3f,%.3f,%.3f,%.3f,%d,%.2f",
                  std::string(policy_name(c.policy)).c_str(),
                  std::string(estimator_kind_name(c.estimator)).c_str(),
                  std::string(mode_name(c.collocation_mode)).c_str(),
                  c.preconditions.max_smact, min_free, c.monitor_window,
                  seed_field.c_str(), rep.trace_name.c_str(),
                  rep.trace_total_time, rep.avg_wait, rep.avg_exec, rep.avg_jct,
                  rep.oom_count, rep.energy_mj);
    return buf;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config) {
    if (config.cells.empty()) throw ConfigError("sweep has no cells");
    if (config.seeds.empty()) throw ConfigError("sweep has no seeds");

    struct Job {
        std::size_t cell;
        std::size_t seed_idx;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < config.cells.size(); ++c)
        for (std::size_t s = 0; s < config.seeds.size(); ++s)
            jobs.push_back({c, s});

    SweepResult result;
    result.reports.assign(config.cells.size(),
                          std::vector<RunReport>(config.seeds.size()));

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error.empty()) return;  // abort on failure
            }
            try {
                RunConfig rc = config.base;
                rc.policy = config.cells[job.cell].policy;
                rc.trace_seed = config.seeds[job.seed_idx];
                result.reports[job.cell][job.seed_idx] =
                    run_simulation(rc).report;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error.empty()) {
                    first_error = "sweep cell '" +
                                  (config.cells[job.cell].label.empty()
                                       ? std::string(policy_name(
                                             config.cells[job.cell].policy.policy))
                                       : config.cells[job.cell].label) +
                                  "' seed " +
                                  std::to_string(config.seeds[job.seed_idx]) +
                                  " failed: " + e.what();
                }
            }
        }
    };

    const int n_threads =
        std::min<int>(sweep_threads(config.max_threads),
                      static_cast<int>(jobs.size()));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (!first_error.empty()) throw CarmaError(first_error);

    std::ostringstream csv;
    csv << report_csv_header() << "\n";
    for (std::size_t c = 0; c < config.cells.size(); ++c) {
        for (std::size_t s = 0; s < config.seeds.size(); ++s)
            csv << csv_row(result.reports[c][s],
                           std::to_string(config.seeds[s]))
                << "\n";
        if (config.seeds.size() > 1) {
            // Synthetic median row: metric-wise medians across seeds.
            RunReport med = result.reports[c][0];
            std::vector<double> total, wait, exec, jct, oom, energy;
            for (const auto& r : result.reports[c]) {
                total.push_back(r.trace_total_time);
                wait.push_back(r.avg_wait);
                exec.push_back(r.avg_exec);
                jct.push_back(r.avg_jct);
                oom.push_back(r.oom_count);
                energy.push_back(r.energy_mj);
            }
            med.trace_total_time = median(total);
            med.avg_wait = median(wait);
            med.avg_exec = median(exec);
            med.avg_jct = median(jct);
            med.oom_count = static_cast<int>(std::llround(median(oom)));
            med.energy_mj = median(energy);
            csv << csv_row(med, "median") << "\n";
        }
    }
    result.csv = csv.str();
    return result;
}

}  // namespace carma
