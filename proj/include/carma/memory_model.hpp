#pragma once

#include "carma/task.hpp"
#include "carma/units.hpp"

namespace carma {

// Physical constants of the simulated platform. Everything here can be
// overridden from the run config; defaults are calibrated against a 4x40GiB
// server profile.
struct SimConstants {
    Bytes gpu_capacity = 40 * kGiB;
    int gpu_count = 4;

    // Allocator / footprint model.
    Bytes alloc_block = 512 * kMiB;    // allocation granularity
    Bytes framework_base = gib(0.75);  // per-task framework/runtime floor
    std::uint64_t bytes_per_value = 4; // fp32
    std::uint64_t param_copies = 4;    // weights, grads, two optimizer moments

    // Power model.
    double p_idle_w = 55.0;
    double p_max_w = 400.0;
    double p_boost_w = 30.0;          // extra draw in the high-power mode
    double boost_threshold = 0.9;     // strict: boost applies above this

    // Failed dispatch burns this much time before the crash is detected.
    SimSeconds oom_startup_delay = 5.0;
};

// Training-footprint ground truth: framework floor plus the parameter and
// activation tensors, rounded up to whole allocator blocks. The block
// rounding is what produces the staircase as batch size grows.
Bytes ground_truth_memory(const ModelDescriptor& model, std::uint64_t batch_size,
                          const SimConstants& consts = SimConstants{});

}  // namespace carma
