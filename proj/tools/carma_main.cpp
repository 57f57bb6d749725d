// carma: collocation-aware GPU resource manager on a simulated multi-GPU
// server. Subcommands generate workload traces, train the learned memory
// estimator, run single experiments, and sweep policy matrices.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carma/errors.hpp"
#include "carma/runner.hpp"

namespace fs = std::filesystem;
using namespace carma;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw CarmaError("cannot open '" + path + "' for writing");
    out << content;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// Flat key=value config file, same shape as task spec documents. Flags given
// on the command line override file values, which override defaults.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line is not key = value: " + line);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

struct RunFlags {
    std::string trace;
    std::string mix;
    std::uint64_t seed = 1;
    std::string policy = "magm";
    std::string estimator = "none";
    std::string mode = "mps";
    double max_smact = 0.8;
    double min_free_gib = -1.0;
    double margin_gib = 2.0;
    double window_s = 60.0;
    int gpus = 4;
    double capacity_gib = 40.0;
    std::string mig_instances;
    bool rr_preconditions = false;
    double p_idle = 55.0, p_max = 400.0, p_boost = 30.0;
    double oom_delay_s = 5.0;
    std::uint64_t est_seed = 11;
    std::size_t est_k = 5;
    std::size_t est_samples = 4000;
    std::string out;
    std::string timeline;
    std::string event_log;
    bool verbose = false;
    std::string config_file;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--trace", f.trace, "trace file to replay");
    cmd->add_option("--mix", f.mix, "generate a trace: t90 or t60");
    cmd->add_option("--seed", f.seed, "trace generation seed");
    cmd->add_option("--policy", f.policy,
                    "mapping policy: exclusive|rr|magm|lug|mug");
    cmd->add_option("--estimator", f.estimator,
                    "memory estimator: none|oracle|analytical|static_graph|learned");
    cmd->add_option("--mode", f.mode, "collocation mode: streams|mps|mig");
    cmd->add_option("--max-smact", f.max_smact, "utilization precondition u");
    cmd->add_option("--min-free-gib", f.min_free_gib,
                    "memory precondition m in GiB");
    cmd->add_option("--margin-gib", f.margin_gib, "oracle safety margin in GiB");
    cmd->add_option("--window-s", f.window_s, "monitoring window seconds");
    cmd->add_option("--gpus", f.gpus, "GPU count");
    cmd->add_option("--capacity-gib", f.capacity_gib, "per-GPU memory in GiB");
    cmd->add_option("--mig-instances", f.mig_instances,
                    "comma-separated instance fractions (mig mode)");
    cmd->add_flag("--rr-preconditions", f.rr_preconditions,
                  "apply preconditions under the rr policy");
    cmd->add_option("--p-idle", f.p_idle, "idle power draw (W)");
    cmd->add_option("--p-max", f.p_max, "full-load power draw (W)");
    cmd->add_option("--p-boost", f.p_boost, "high-power mode extra draw (W)");
    cmd->add_option("--oom-delay-s", f.oom_delay_s,
                    "startup delay before an OOM crash is detected");
    cmd->add_option("--est-seed", f.est_seed, "learned estimator training seed");
    cmd->add_option("--est-k", f.est_k, "learned estimator k");
    cmd->add_option("--est-samples", f.est_samples,
                    "synthetic samples per family for the learned estimator");
    cmd->add_option("--config", f.config_file, "key = value config file");
    cmd->add_option("--timeline", f.timeline, "write per-GPU timeline CSV here");
    cmd->add_option("--event-log", f.event_log, "write the event log here");
    cmd->add_flag("--verbose", f.verbose, "print mapping decisions");
}

// Applies config-file values for flags the user did not pass explicitly.
void apply_config_file(CLI::App* cmd, RunFlags& f) {
    if (f.config_file.empty()) return;
    auto kv = read_config_file(f.config_file);
    auto take = [&](const char* flag, const char* key, auto& slot) {
        if (cmd->count(flag) > 0) return;  // explicit flag wins
        auto it = kv.find(key);
        if (it == kv.end()) return;
        std::istringstream ss(it->second);
        ss >> slot;
        if (ss.fail()) throw ConfigError(std::string("bad value for ") + key);
    };
    take("--trace", "trace", f.trace);
    take("--mix", "mix", f.mix);
    take("--seed", "seed", f.seed);
    take("--policy", "policy", f.policy);
    take("--estimator", "estimator", f.estimator);
    take("--mode", "mode", f.mode);
    take("--max-smact", "max_smact", f.max_smact);
    take("--min-free-gib", "min_free_gib", f.min_free_gib);
    take("--margin-gib", "margin_gib", f.margin_gib);
    take("--window-s", "window_s", f.window_s);
    take("--gpus", "gpus", f.gpus);
    take("--capacity-gib", "capacity_gib", f.capacity_gib);
    take("--mig-instances", "mig_instances", f.mig_instances);
    take("--p-idle", "p_idle", f.p_idle);
    take("--p-max", "p_max", f.p_max);
    take("--p-boost", "p_boost", f.p_boost);
    take("--oom-delay-s", "oom_delay_s", f.oom_delay_s);
    take("--est-seed", "est_seed", f.est_seed);
    take("--est-k", "est_k", f.est_k);
    take("--est-samples", "est_samples", f.est_samples);
}

RunConfig build_run_config(CLI::App* cmd, RunFlags& f) {
    apply_config_file(cmd, f);
    RunConfig rc;
    if (!f.mix.empty()) {
        rc.mix = mix_from_name(f.mix);
        rc.trace_seed = f.seed;
    } else {
        rc.trace_path = f.trace;
    }
    rc.policy.policy = policy_from_name(f.policy);
    rc.policy.estimator = estimator_kind_from_name(f.estimator);
    rc.policy.collocation_mode = mode_from_name(f.mode);
    rc.policy.monitor_window = f.window_s;
    rc.policy.preconditions.max_smact = f.max_smact;
    if (f.min_free_gib >= 0.0)
        rc.policy.preconditions.min_free_mem = gib(f.min_free_gib);
    rc.policy.preconditions.safety_margin = gib(f.margin_gib);
    rc.policy.rr_apply_preconditions =
        f.rr_preconditions || cmd->count("--max-smact") > 0 ||
        cmd->count("--min-free-gib") > 0;
    rc.constants.gpu_count = f.gpus;
    rc.constants.gpu_capacity = gib(f.capacity_gib);
    rc.constants.p_idle_w = f.p_idle;
    rc.constants.p_max_w = f.p_max;
    rc.constants.p_boost_w = f.p_boost;
    rc.constants.oom_startup_delay = f.oom_delay_s;
    for (const auto& part : split_list(f.mig_instances))
        rc.mig_instances.push_back(std::stod(part));
    rc.estimator_seed = f.est_seed;
    rc.estimator_k = f.est_k;
    rc.estimator_samples = f.est_samples;
    rc.enable_timeline = !f.timeline.empty();
    rc.enable_event_log = !f.event_log.empty();
    rc.verbose_decisions = f.verbose;
    return rc;
}

int cmd_gen_trace(const std::string& mix, std::uint64_t seed,
                  const std::string& out) {
    TraceFile trace = generate_trace(mix_from_name(mix), seed);
    save_trace(trace, out);
    std::cout << "wrote " << trace.rows.size() << " tasks to " << out << "\n";
    return 0;
}

int cmd_train_est(const std::string& family_name_str, std::size_t n,
                  double range_gib, std::uint64_t seed, std::size_t k,
                  const std::string& out, const std::string& report_path,
                  const std::string& dataset_csv) {
    ModelFamily family = family_from_name(family_name_str);
    std::optional<Bytes> range;
    if (range_gib > 0.0) range = gib(range_gib);
    EstimatorDataset ds = generate_synthetic_dataset(family, n, seed, range);
    if (!dataset_csv.empty()) save_dataset_csv(ds, dataset_csv);
    LearnedEstimator est = train_learned_estimator(ds, k);
    if (!out.empty()) est.save(out);

    nlohmann::ordered_json rep;
    rep["family"] = std::string(family_name(family));
    rep["samples"] = n;
    rep["bucket_range_bytes"] = ds.bucket_range;
    rep["seed"] = seed;
    rep["k"] = k;
    rep["accuracy"] = est.holdout().accuracy;
    rep["macro_f1"] = est.holdout().macro_f1;
    rep["train_size"] = est.holdout().train_size;
    rep["holdout_size"] = est.holdout().holdout_size;
    rep["underestimate_rate"] = est.holdout().underestimate_rate;
    const std::string text = rep.dump(2) + "\n";
    if (!report_path.empty())
        write_file(report_path, text);
    else
        std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collocation-aware GPU resource manager (simulated server)"};
    app.require_subcommand(1);

    // gen-trace
    auto* gen = app.add_subcommand("gen-trace", "generate a workload trace");
    std::string gen_mix;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--mix", gen_mix, "t90 or t60")->required();
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("-o,--out", gen_out, "output path")->required();

    // train-est
    auto* train = app.add_subcommand("train-est", "train the learned estimator");
    std::string tr_family;
    std::size_t tr_n = 4000;
    double tr_range = 0.0;
    std::uint64_t tr_seed = 0;
    std::size_t tr_k = 5;
    std::string tr_out, tr_report, tr_csv;
    train->add_option("--family", tr_family, "mlp|cnn|transformer")->required();
    train->add_option("--n", tr_n, "synthetic sample count");
    train->add_option("--range-gib", tr_range,
                      "bucket range in GiB (default: per-family)");
    train->add_option("--seed", tr_seed, "generation seed")->required();
    train->add_option("--k", tr_k, "nearest neighbors");
    train->add_option("-o,--out", tr_out, "snapshot output path");
    train->add_option("--report", tr_report, "accuracy report path (default: stdout)");
    train->add_option("--dataset-csv", tr_csv, "also dump the dataset as CSV");

    // run
    auto* run = app.add_subcommand("run", "run one experiment");
    RunFlags rf;
    add_run_flags(run, rf);
    run->add_option("-o,--out", rf.out, "report output path (JSON)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run a policy matrix");
    RunFlags sf;
    std::string sw_policies = "magm", sw_estimators = "none", sw_modes = "mps";
    std::string sw_seeds = "1";
    std::string sw_out;
    add_run_flags(sweep, sf);
    sweep->add_option("--policies", sw_policies, "comma-separated policies");
    sweep->add_option("--estimators", sw_estimators, "comma-separated estimators");
    sweep->add_option("--modes", sw_modes, "comma-separated modes");
    sweep->add_option("--seeds", sw_seeds, "comma-separated trace seeds");
    sweep->add_option("-o,--out", sw_out, "sweep CSV output path")->required();

    // report
    auto* rep = app.add_subcommand("report", "re-render a run report");
    std::string rp_in, rp_format = "csv", rp_out;
    rep->add_option("--in", rp_in, "report JSON path")->required();
    rep->add_option("--format", rp_format, "json or csv");
    rep->add_option("-o,--out", rp_out, "output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;  // usage errors exit 2
    }

    try {
        if (gen->parsed()) return cmd_gen_trace(gen_mix, gen_seed, gen_out);

        if (train->parsed())
            return cmd_train_est(tr_family, tr_n, tr_range, tr_seed, tr_k, tr_out,
                                 tr_report, tr_csv);

        if (run->parsed()) {
            RunConfig rc = build_run_config(run, rf);
            RunArtifacts art = run_simulation(rc);
            const std::string text = emit_report(art.report, ReportFormat::json);
            if (!rf.out.empty())
                write_file(rf.out, text);
            else
                std::cout << text;
            if (!rf.timeline.empty()) {
                std::ostringstream t;
                for (const auto& line : art.timeline) t << line << "\n";
                write_file(rf.timeline, t.str());
            }
            if (!rf.event_log.empty()) {
                std::ostringstream t;
                for (const auto& line : art.event_log) t << line << "\n";
                write_file(rf.event_log, t.str());
            }
            if (rf.verbose)
                for (const auto& line : art.decision_log) std::cerr << line << "\n";
            return 0;
        }

        if (sweep->parsed()) {
            SweepConfig sc;
            sc.base = build_run_config(sweep, sf);
            for (const auto& policy : split_list(sw_policies))
                for (const auto& est : split_list(sw_estimators))
                    for (const auto& mode : split_list(sw_modes)) {
                        SweepCell cell;
                        cell.policy = sc.base.policy;
                        cell.policy.policy = policy_from_name(policy);
                        cell.policy.estimator = estimator_kind_from_name(est);
                        cell.policy.collocation_mode = mode_from_name(mode);
                        cell.label = policy + "/" + est + "/" + mode;
                        sc.cells.push_back(cell);
                    }
            for (const auto& s : split_list(sw_seeds))
                sc.seeds.push_back(std::stoull(s));
            if (!sc.seeds.empty() && sweep->count("--seeds") == 0)
                sc.seeds = {sf.seed};
            SweepResult result = run_sweep(sc);
            write_file(sw_out, result.csv);
            std::cout << "wrote " << sc.cells.size() << "x" << sc.seeds.size()
                      << " sweep to " << sw_out << "\n";
            return 0;
        }

        if (rep->parsed()) {
            std::ifstream in(rp_in);
            if (!in) throw CarmaError("cannot open '" + rp_in + "'");
            std::stringstream buf;
            buf << in.rdbuf();
            RunReport report = parse_report_json(buf.str());
            ReportFormat format =
                rp_format == "json" ? ReportFormat::json : ReportFormat::csv;
            const std::string text = emit_report(report, format);
            if (!rp_out.empty())
                write_file(rp_out, text);
            else
                std::cout << text;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
