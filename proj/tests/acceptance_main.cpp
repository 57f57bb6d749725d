// Acceptance suite: runs every criterion end-to-end against the simulator
// and prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "carma/errors.hpp"
#include "carma/rng.hpp"
#include "carma/runner.hpp"

using namespace carma;

namespace {

int g_failures = 0;
double g_max_run_seconds = 0.0;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", idx,
                name.c_str(), detail.c_str());
    if (!pass) ++g_failures;
}

struct SimSpec {
    TraceMix mix = TraceMix::t90;
    std::uint64_t seed = 1;
    Policy policy = Policy::exclusive;
    EstimatorKind estimator = EstimatorKind::none;
    CollocationMode mode = CollocationMode::mps;
    double max_smact = 0.80;
    std::optional<Bytes> min_free;
    Bytes margin = 2 * kGiB;
    bool rr_preconditions = false;
};

RunArtifacts simulate(const SimSpec& s) {
    RunConfig rc;
    rc.mix = s.mix;
    rc.trace_seed = s.seed;
    rc.policy.policy = s.policy;
    rc.policy.estimator = s.estimator;
    rc.policy.collocation_mode = s.mode;
    rc.policy.preconditions.max_smact = s.max_smact;
    rc.policy.preconditions.min_free_mem = s.min_free;
    rc.policy.preconditions.safety_margin = s.margin;
    rc.policy.rr_apply_preconditions = s.rr_preconditions;
    const auto start = std::chrono::steady_clock::now();
    RunArtifacts art = run_simulation(rc);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (elapsed > g_max_run_seconds) g_max_run_seconds = elapsed;
    return art;
}

// Runs one spec across seeds 1..5 concurrently; returns per-seed artifacts.
std::vector<RunArtifacts> seeds5(SimSpec s) {
    std::vector<std::future<RunArtifacts>> futs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SimSpec cur = s;
        cur.seed = seed;
        futs.push_back(std::async(std::launch::async,
                                  [cur]() { return simulate(cur); }));
    }
    std::vector<RunArtifacts> out;
    for (auto& f : futs) out.push_back(f.get());
    return out;
}

double median_of(const std::vector<RunArtifacts>& arts,
                 double (*metric)(const RunReport&)) {
    std::vector<double> v;
    for (const auto& a : arts) v.push_back(metric(a.report));
    return median(v);
}

double m_total(const RunReport& r) { return r.trace_total_time; }
double m_wait(const RunReport& r) { return r.avg_wait; }
double m_oom(const RunReport& r) { return r.oom_count; }
double m_energy(const RunReport& r) { return r.energy_mj; }

bool check_work_conservation(const RunArtifacts& art, double tol,
                             std::string& why) {
    for (const auto& [id, run] : art.runs) {
        if (!run.completed) continue;
        const double want = run.spec.total_work();
        const double got = run.executed_integral;
        if (std::abs(got - want) > tol * want) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "task %s executed %.9g of %.9g",
                          id.c_str(), got, want);
            why = buf;
            return false;
        }
    }
    return true;
}

std::vector<RunArtifacts> g_conservation_samples;

void criterion1_oracle_zero_oom() {
    bool pass = true;
    std::ostringstream detail;
    int runs = 0;
    for (Policy policy : {Policy::rr, Policy::magm, Policy::lug}) {
        for (TraceMix mix : {TraceMix::t60, TraceMix::t90}) {
            SimSpec s;
            s.mix = mix;
            s.policy = policy;
            s.estimator = EstimatorKind::oracle;
            s.max_smact = 0.80;
            s.margin = 2 * kGiB;
            s.rr_preconditions = true;  // the run sets u explicitly
            auto arts = seeds5(s);
            for (auto& a : arts) {
                ++runs;
                if (a.report.oom_count != 0) {
                    pass = false;
                    detail << policy_name(policy) << "/" << mix_name(mix)
                           << " seed " << a.report.seed << ": "
                           << a.report.oom_count << " OOMs; ";
                }
            }
            if (!arts.empty())
                g_conservation_samples.push_back(std::move(arts.front()));
        }
    }
    if (g_max_run_seconds >= 10.0) {
        pass = false;
        detail << "slowest run took " << g_max_run_seconds << " s (>= 10 s); ";
    }
    if (pass) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "0 OOMs across %d oracle runs (slowest run %.2f s)", runs,
                      g_max_run_seconds);
        detail << buf;
    }
    report(1, "oracle zero-OOM", pass, detail.str());
}

void criterion2_oom_ordering() {
    SimSpec rr_none;
    rr_none.policy = Policy::rr;
    rr_none.rr_preconditions = false;

    SimSpec magm_none;
    magm_none.policy = Policy::magm;
    magm_none.max_smact = 1.0;  // no utilization gate

    SimSpec magm_u = magm_none;
    magm_u.max_smact = 0.80;

    SimSpec magm_um = magm_u;
    magm_um.min_free = 2 * kGiB;

    const double rr = median_of(seeds5(rr_none), m_oom);
    const double m0 = median_of(seeds5(magm_none), m_oom);
    const double m1 = median_of(seeds5(magm_u), m_oom);
    const double m2 = median_of(seeds5(magm_um), m_oom);

    const bool pass = rr >= m0 && m0 >= m1 && m1 >= m2 && rr > m2;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "median OOMs on t90: rr(none)=%.1f >= magm(none)=%.1f >= "
                  "magm(u=.8)=%.1f >= magm(u=.8,m=2GiB)=%.1f, first > last",
                  rr, m0, m1, m2);
    report(2, "OOM ordering without estimators", pass, buf);
}

void criterion3_estimator_suppression() {
    SimSpec learned;
    learned.mix = TraceMix::t60;
    learned.policy = Policy::magm;
    learned.estimator = EstimatorKind::learned;
    learned.max_smact = 0.80;

    SimSpec sgraph = learned;
    sgraph.estimator = EstimatorKind::static_graph;

    SimSpec none = learned;
    none.estimator = EstimatorKind::none;
    none.min_free = 2 * kGiB;

    const double l = median_of(seeds5(learned), m_oom);
    const double s = median_of(seeds5(sgraph), m_oom);
    const double n = median_of(seeds5(none), m_oom);

    const bool pass = l <= s && l <= n && l <= 1.0;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "median OOMs on t60 with MAGM: learned=%.1f <= "
                  "static_graph=%.1f, <= none(m=2GiB)=%.1f, and learned <= 1",
                  l, s, n);
    report(3, "estimator OOM suppression", pass, buf);
}

void criterion4_collocation_speedup() {
    SimSpec excl90;
    excl90.policy = Policy::exclusive;
    SimSpec magm90;
    magm90.policy = Policy::magm;
    magm90.estimator = EstimatorKind::oracle;
    magm90.max_smact = 0.80;

    const double t_ex90 = median_of(seeds5(excl90), m_total);
    const double t_magm90 = median_of(seeds5(magm90), m_total);
    const double red90 = 100.0 * (1.0 - t_magm90 / t_ex90);

    SimSpec excl60 = excl90;
    excl60.mix = TraceMix::t60;
    SimSpec learned60;
    learned60.mix = TraceMix::t60;
    learned60.policy = Policy::magm;
    learned60.estimator = EstimatorKind::learned;
    learned60.max_smact = 0.80;

    const double t_ex60 = median_of(seeds5(excl60), m_total);
    const double t_l60 = median_of(seeds5(learned60), m_total);
    const double red60 = 100.0 * (1.0 - t_l60 / t_ex60);

    const bool pass =
        red90 >= 15.0 && red90 <= 45.0 && red60 >= 15.0 && red60 <= 40.0;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "t90 magm+mps+oracle %.1f%% below exclusive (band 15-45); "
                  "t60 magm+learned %.1f%% below exclusive (band 15-40)",
                  red90, red60);
    report(4, "collocation speedup", pass, buf);
}

void criterion5_streams_marginality() {
    SimSpec excl;
    excl.policy = Policy::exclusive;
    auto excl_arts = seeds5(excl);
    const double t_ex = median_of(excl_arts, m_total);
    const double w_ex = median_of(excl_arts, m_wait);

    bool pass = true;
    std::ostringstream detail;
    for (Policy policy : {Policy::rr, Policy::magm}) {
        // Streams collocation without estimators or preconditions, the same
        // shape as the trace-study streams rows.
        SimSpec streams;
        streams.policy = policy;
        streams.mode = CollocationMode::streams;
        streams.max_smact = 1.0;
        streams.rr_preconditions = false;
        auto arts = seeds5(streams);
        const double t = median_of(arts, m_total);
        const double w = median_of(arts, m_wait);
        const double improvement = 100.0 * (1.0 - t / t_ex);
        const double wait_red = 100.0 * (1.0 - w / w_ex);
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%s+streams: total %+.1f%% vs exclusive (< 5), wait "
                      "-%.1f%% (> 25); ",
                      std::string(policy_name(policy)).c_str(), improvement,
                      wait_red);
        detail << buf;
        if (!(improvement < 5.0 && wait_red > 25.0)) pass = false;
    }
    report(5, "streams marginality", pass, detail.str());
}

void criterion6_energy_ordering() {
    SimSpec excl;
    excl.mix = TraceMix::t60;
    excl.policy = Policy::exclusive;

    SimSpec rr_streams;
    rr_streams.mix = TraceMix::t60;
    rr_streams.policy = Policy::rr;
    rr_streams.mode = CollocationMode::streams;
    rr_streams.rr_preconditions = false;

    SimSpec learned;
    learned.mix = TraceMix::t60;
    learned.policy = Policy::magm;
    learned.estimator = EstimatorKind::learned;
    learned.max_smact = 0.80;

    const double e_ex = median_of(seeds5(excl), m_energy);
    const double e_rr = median_of(seeds5(rr_streams), m_energy);
    const double e_l = median_of(seeds5(learned), m_energy);
    const double savings = 100.0 * (1.0 - e_l / e_ex);

    const bool pass =
        e_rr > e_ex && e_ex > e_l && savings >= 5.0 && savings <= 25.0;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "t60 energy (MJ): rr+streams=%.2f > exclusive=%.2f > "
                  "magm+learned=%.2f; savings %.1f%% (band 5-25)",
                  e_rr, e_ex, e_l, savings);
    report(6, "energy ordering", pass, buf);
}

void criterion7_learned_quality() {
    const auto start = std::chrono::steady_clock::now();
    EstimatorDataset mlp = generate_synthetic_dataset(ModelFamily::MLP, 5000, 3);
    LearnedEstimator e_mlp = train_learned_estimator(mlp, 5);
    EstimatorDataset cnn = generate_synthetic_dataset(ModelFamily::CNN, 5000, 3);
    LearnedEstimator e_cnn = train_learned_estimator(cnn, 5);
    EstimatorDataset tf =
        generate_synthetic_dataset(ModelFamily::Transformer, 5000, 3);
    LearnedEstimator e_tf = train_learned_estimator(tf, 5);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();

    const double a_mlp = e_mlp.holdout().accuracy;
    const double a_cnn = e_cnn.holdout().accuracy;
    const double a_tf = e_tf.holdout().accuracy;
    const bool pass =
        a_mlp >= 0.85 && a_cnn >= 0.75 && a_tf >= 0.75 && elapsed < 60.0;
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "holdout accuracy: mlp/1GiB=%.3f (>= .85), cnn/8GiB=%.3f "
                  "(>= .75), transformer/8GiB=%.3f (>= .75); %.1f s (< 60)",
                  a_mlp, a_cnn, a_tf, elapsed);
    report(7, "learned-estimator quality", pass, buf);
}

void criterion8_property_suites() {
    bool pass = true;
    std::ostringstream detail;

    // 8a: allocator conservation and coalescing under random traffic.
    {
        SimConstants consts;
        GpuDevice gpu(0, consts.gpu_capacity, CollocationMode::mps,
                      consts.alloc_block);
        Rng rng(99);
        std::vector<MemRegion> live;
        bool ok = true;
        for (int step = 0; step < 100000 && ok; ++step) {
            const bool do_alloc = live.empty() || rng.next_double() < 0.55;
            if (do_alloc) {
                Bytes want = (1 + rng.uniform(64)) * 256 * kMiB;
                auto res = gpu.allocate(want);
                if (std::holds_alternative<MemRegion>(res))
                    live.push_back(std::get<MemRegion>(res));
            } else {
                std::size_t idx =
                    static_cast<std::size_t>(rng.uniform(live.size()));
                gpu.free_region(live[idx]);
                live.erase(live.begin() + static_cast<std::ptrdiff_t>(idx));
            }
            Bytes used = 0;
            for (const auto& r : live) used += r.size;
            if (gpu.total_free() + used != consts.gpu_capacity) ok = false;
            try {
                gpu.check_invariants();
            } catch (const std::exception&) {
                ok = false;
            }
        }
        for (const auto& r : live) gpu.free_region(r);
        if (gpu.largest_free() != consts.gpu_capacity) ok = false;
        if (!ok) {
            pass = false;
            detail << "allocator conservation failed; ";
        } else {
            detail << "allocator: 1e5 random steps conserve capacity; ";
        }
    }

    // 8b: work conservation across the retained acceptance runs.
    {
        bool ok = true;
        std::string why;
        for (const auto& art : g_conservation_samples)
            if (!check_work_conservation(art, 1e-6, why)) ok = false;
        if (!ok) {
            pass = false;
            detail << "work conservation violated: " << why << "; ";
        } else {
            detail << "work conserved to 1e-6 across "
                   << g_conservation_samples.size() << " full runs; ";
        }
    }

    // 8c: the 5+4 GiB fragmentation scenario with recovery.
    {
        SimConstants consts;
        World world(consts, CollocationMode::mps);
        PolicyConfig cfg;
        cfg.policy = Policy::magm;
        cfg.preconditions.max_smact = 1.0;
        Manager mgr(world, cfg);
        world.set_handler([&](const Event& ev) {
            if (ev.kind != EventKind::arrival) mgr.on_event(ev);
        });

        auto pin = [&](const std::string& id, double mem_gib, double work_s) {
            TaskSpec t;
            t.id = id;
            t.model = default_descriptor(ModelFamily::CNN);
            t.batch_size = 32;
            t.epochs = 1;
            t.nominal_epoch_time = work_s;
            t.smact_demand = 0.1;
            t.true_mem_bytes = gib(mem_gib);
            t.weight_class = WeightClass::medium;
            return t;
        };
        // Target layout on GPU 0: [hole 5][pin-c 26][hole 4][pin-b 5], so the
        // monitor reports 9 GiB free while the largest chunk is 5 GiB.
        TaskSpec a = pin("hole-a", 5, 900);
        TaskSpec b = pin("pin-b", 5, 50000);
        TaskSpec c = pin("pin-c", 26, 50000);
        TaskSpec newcomer = pin("newcomer", 8, 600);

        mgr.submit(a);
        mgr.try_schedule();
        // Occupy GPUs 1-3 first so MAGM keeps stacking GPU 0.
        for (int g = 1; g <= 3; ++g) {
            world.advance(world.now() + 61);
            TaskSpec blocker = pin("blocker-" + std::to_string(g), 38, 3000);
            mgr.submit(blocker);
            mgr.try_schedule();
        }
        world.advance(244);
        mgr.submit(b);
        mgr.try_schedule();
        world.advance(305);
        mgr.submit(c);
        mgr.try_schedule();
        // hole-a completes at 900 s leaving 5 GiB + 4 GiB free on GPU 0.
        world.advance(1100);
        const auto& gpu0 = world.gpus()[0];
        const bool layout_ok =
            gpu0.total_free() == gib(9) && gpu0.largest_free() == gib(5);

        mgr.submit(newcomer);
        mgr.try_schedule();  // 9 GiB reported free, needs 8: the trap
        world.run();

        const auto& st = mgr.state();
        bool ok = layout_ok;
        ok = ok && st.oom_count == 1;
        ok = ok && st.timing.at("newcomer").oom_count == 1;
        ok = ok && st.timing.at("newcomer").complete > 0.0;
        ok = ok && st.timing.at("pin-b").complete >
                       st.timing.at("newcomer").crash_times.at(0);
        ok = ok && mgr.all_done();
        if (!ok) {
            pass = false;
            detail << "fragmentation/recovery scenario failed (free="
                   << as_gib(gpu0.total_free())
                   << " largest=" << as_gib(gpu0.largest_free())
                   << " ooms=" << st.oom_count << "); ";
        } else {
            detail << "5+4 GiB fragmentation: 1 OOM, exclusive recovery, "
                      "incumbent kept running; ";
        }
    }

    // 8d: windowed SMACT equals a 1-second numeric integration oracle.
    {
        SimConstants consts;
        GpuDevice gpu(0, consts.gpu_capacity, CollocationMode::mps,
                      consts.alloc_block);
        gpu.add_resident("a", 0.4);
        gpu.record_smact(10);
        gpu.add_resident("b", 0.3);
        gpu.record_smact(40);
        gpu.remove_resident("a");
        gpu.record_smact(70);
        const double now = 100, window = 60;
        double oracle = 0.0;
        for (int sec = 40; sec < 100; ++sec) oracle += sec < 70 ? 0.7 : 0.3;
        oracle /= window;
        const double got = gpu.windowed_smact(now, window);
        if (std::abs(got - oracle) > 1e-6) {
            pass = false;
            detail << "windowed smact " << got << " != oracle " << oracle
                   << "; ";
        } else {
            detail << "windowed smact matches 1 s integration; ";
        }
    }

    // 8e: bit-identical reports for repeated seeded runs.
    {
        SimSpec s;
        s.policy = Policy::magm;
        s.estimator = EstimatorKind::learned;
        auto r1 = simulate(s);
        auto r2 = simulate(s);
        const std::string j1 = emit_report(r1.report, ReportFormat::json);
        const std::string j2 = emit_report(r2.report, ReportFormat::json);
        if (j1 != j2) {
            pass = false;
            detail << "repeated seeded runs differ";
        } else {
            detail << "repeated seeded runs are bit-identical";
        }
    }

    report(8, "property suites", pass, detail.str());
}

}  // namespace

int main() {
    std::printf("carma acceptance suite\n");
    criterion1_oracle_zero_oom();
    criterion2_oom_ordering();
    criterion3_estimator_suppression();
    criterion4_collocation_speedup();
    criterion5_streams_marginality();
    criterion6_energy_ordering();
    criterion7_learned_quality();
    criterion8_property_suites();
    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
}
