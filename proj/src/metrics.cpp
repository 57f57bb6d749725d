#include "carma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carma/errors.hpp"

namespace carma {

using ordered_json = nlohmann::ordered_json;

RunReport compute_report(const RunRecord& record) {
    RunReport rep;
    rep.config = record.config;
    rep.seed = record.seed;
    rep.trace_name = record.trace_name;
    rep.oom_count = record.oom_count;

    if (record.timing.empty()) throw IncompleteRun("no tasks in the record");

    double wait_sum = 0.0, exec_sum = 0.0, jct_sum = 0.0;
    for (const auto& [id, t] : record.timing) {
        if (t.complete < 0.0 || t.final_dispatch < 0.0)
            throw IncompleteRun("task '" + id + "' did not complete");
        TaskOutcome out;
        out.id = id;
        out.submit = t.submit;
        out.final_dispatch = t.final_dispatch;
        out.complete = t.complete;
        // Crashed attempts and re-queue intervals all land in waiting time;
        // execution is the successful residency only, so jct = wait + exec
        // holds exactly per task.
        out.wait = t.final_dispatch - t.submit;
        out.exec = t.complete - t.final_dispatch;
        out.jct = t.complete - t.submit;
        out.ooms = t.oom_count;
        wait_sum += out.wait;
        exec_sum += out.exec;
        jct_sum += out.jct;
        rep.tasks.push_back(std::move(out));
    }
    std::sort(rep.tasks.begin(), rep.tasks.end(),
              [](const TaskOutcome& a, const TaskOutcome& b) {
                  if (a.submit != b.submit) return a.submit < b.submit;
                  return a.id < b.id;
              });

    const double n = static_cast<double>(rep.tasks.size());
    rep.avg_wait = wait_sum / n;
    rep.avg_exec = exec_sum / n;
    rep.avg_jct = jct_sum / n;
    rep.trace_total_time = record.last_complete - record.first_submit;

    double energy_j = 0.0;
    for (int g = 0; g < record.n_gpus; ++g) {
        GpuSummary s;
        s.id = g;
        s.energy_j = record.gpu_energy_j.at(static_cast<std::size_t>(g));
        s.mean_smact = record.gpu_mean_smact.at(static_cast<std::size_t>(g));
        s.peak_mem = record.gpu_peak_mem.at(static_cast<std::size_t>(g));
        energy_j += s.energy_j;
        rep.per_gpu.push_back(s);
    }
    rep.energy_mj = energy_j / 1e6;
    return rep;
}

namespace {

ordered_json config_json(const PolicyConfig& c) {
    ordered_json j;
    j["policy"] = std::string(policy_name(c.policy));
    j["estimator"] = std::string(estimator_kind_name(c.estimator));
    j["mode"] = std::string(mode_name(c.collocation_mode));
    j["max_smact"] = c.preconditions.max_smact;
    if (c.preconditions.min_free_mem)
        j["min_free_bytes"] = *c.preconditions.min_free_mem;
    else
        j["min_free_bytes"] = nullptr;
    j["safety_margin_bytes"] = c.preconditions.safety_margin;
    j["monitor_window_s"] = c.monitor_window;
    j["rr_apply_preconditions"] = c.rr_apply_preconditions;
    return j;
}

PolicyConfig config_from_json(const ordered_json& j) {
    PolicyConfig c;
    c.policy = policy_from_name(j.at("policy").get<std::string>());
    c.estimator = estimator_kind_from_name(j.at("estimator").get<std::string>());
    c.collocation_mode = mode_from_name(j.at("mode").get<std::string>());
    c.preconditions.max_smact = j.at("max_smact").get<double>();
    if (!j.at("min_free_bytes").is_null())
        c.preconditions.min_free_mem = j.at("min_free_bytes").get<Bytes>();
    c.preconditions.safety_margin = j.at("safety_margin_bytes").get<Bytes>();
    c.monitor_window = j.at("monitor_window_s").get<double>();
    c.rr_apply_preconditions = j.at("rr_apply_preconditions").get<bool>();
    return c;
}

}  // namespace

std::string report_csv_header() {
    return "policy,estimator,mode,max_smact,min_free_gib,window_s,seed,trace,"
           "total_time_s,avg_wait_s,avg_exec_s,avg_jct_s,oom_count,energy_mj";
}

std::string emit_report(const RunReport& report, ReportFormat format) {
    if (format == ReportFormat::csv) {
        char buf[512];
        const auto& c = report.config;
        char min_free[32];
        if (c.preconditions.min_free_mem)
            std::snprintf(min_free, sizeof(min_free), "%.2f",
                          as_gib(*c.preconditions.min_free_mem));
        else
            std::snprintf(min_free, sizeof(min_free), "none");
        std::snprintf(buf, sizeof(buf),
                      "%s,%s,%s,%.2f,%s,%.0f,%llu,%s,%.3f,%.3f,%.3f,%.3f,%d,%.2f",
                      std::string(policy_name(c.policy)).c_str(),
                      std::string(estimator_kind_name(c.estimator)).c_str(),
                      std::string(mode_name(c.collocation_mode)).c_str(),
                      c.preconditions.max_smact, min_free, c.monitor_window,
                      static_cast<unsigned long long>(report.seed),
                      report.trace_name.c_str(), report.trace_total_time,
                      report.avg_wait, report.avg_exec, report.avg_jct,
                      report.oom_count, report.energy_mj);
        return report_csv_header() + "\n" + buf + "\n";
    }

    ordered_json j;
    j["schema"] = "carma-run-report/v1";
    j["config"] = config_json(report.config);
    j["seed"] = report.seed;
    j["trace"] = report.trace_name;
    ordered_json metrics;
    metrics["trace_total_time_s"] = report.trace_total_time;
    metrics["avg_wait_s"] = report.avg_wait;
    metrics["avg_exec_s"] = report.avg_exec;
    metrics["avg_jct_s"] = report.avg_jct;
    metrics["oom_count"] = report.oom_count;
    metrics["energy_mj"] = report.energy_mj;
    j["metrics"] = metrics;
    auto& gpus = j["per_gpu"] = ordered_json::array();
    for (const auto& g : report.per_gpu) {
        gpus.push_back({{"id", g.id},
                        {"energy_j", g.energy_j},
                        {"mean_smact", g.mean_smact},
                        {"peak_mem_bytes", g.peak_mem}});
    }
    auto& tasks = j["tasks"] = ordered_json::array();
    for (const auto& t : report.tasks) {
        tasks.push_back({{"id", t.id},
                         {"submit_s", t.submit},
                         {"dispatch_s", t.final_dispatch},
                         {"complete_s", t.complete},
                         {"wait_s", t.wait},
                         {"exec_s", t.exec},
                         {"jct_s", t.jct},
                         {"ooms", t.ooms}});
    }
    return j.dump(2) + "\n";
}

RunReport parse_report_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    if (j.value("schema", "") != "carma-run-report/v1")
        throw CarmaError("unrecognized report schema");
    RunReport rep;
    rep.config = config_from_json(j.at("config"));
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.trace_name = j.at("trace").get<std::string>();
    const auto& m = j.at("metrics");
    rep.trace_total_time = m.at("trace_total_time_s").get<double>();
    rep.avg_wait = m.at("avg_wait_s").get<double>();
    rep.avg_exec = m.at("avg_exec_s").get<double>();
    rep.avg_jct = m.at("avg_jct_s").get<double>();
    rep.oom_count = m.at("oom_count").get<int>();
    rep.energy_mj = m.at("energy_mj").get<double>();
    for (const auto& g : j.at("per_gpu")) {
        GpuSummary s;
        s.id = g.at("id").get<int>();
        s.energy_j = g.at("energy_j").get<double>();
        s.mean_smact = g.at("mean_smact").get<double>();
        s.peak_mem = g.at("peak_mem_bytes").get<Bytes>();
        rep.per_gpu.push_back(s);
    }
    for (const auto& t : j.at("tasks")) {
        TaskOutcome out;
        out.id = t.at("id").get<std::string>();
        out.submit = t.at("submit_s").get<double>();
        out.final_dispatch = t.at("dispatch_s").get<double>();
        out.complete = t.at("complete_s").get<double>();
        out.wait = t.at("wait_s").get<double>();
        out.exec = t.at("exec_s").get<double>();
        out.jct = t.at("jct_s").get<double>();
        out.ooms = t.at("ooms").get<int>();
        rep.tasks.push_back(std::move(out));
    }
    return rep;
}

}  // namespace carma
