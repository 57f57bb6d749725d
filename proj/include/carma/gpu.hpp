#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "carma/memory_model.hpp"
#include "carma/units.hpp"

namespace carma {

enum class CollocationMode { streams, mps, mig };

std::string_view mode_name(CollocationMode m);
CollocationMode mode_from_name(std::string_view name);

struct MemRegion {
    Bytes offset = 0;
    Bytes size = 0;

    friend bool operator==(const MemRegion&, const MemRegion&) = default;
};

// Allocation failure is a modeled outcome, not an error path. total_free may
// exceed the request: that is the fragmentation-induced OOM the recovery
// machinery exists for.
struct OomFailure {
    Bytes requested = 0;
    Bytes total_free = 0;
    Bytes largest_free = 0;
};

using AllocResult = std::variant<MemRegion, OomFailure>;

struct MigInstance {
    double fraction = 1.0;  // share of compute capacity
    Bytes base = 0;         // memory range [base, base+capacity)
    Bytes capacity = 0;
};

struct ResidentEntry {
    std::string task_id;
    double smact_demand = 0.0;
    int instance = 0;  // mig instance index; 0 for streams/mps
};

class GpuDevice {
  public:
    GpuDevice(int id, Bytes capacity, CollocationMode mode, Bytes alloc_block,
              const std::vector<double>& mig_fractions = {});

    int id() const { return id_; }
    CollocationMode mode() const { return mode_; }
    Bytes capacity() const { return capacity_; }
    const std::vector<MigInstance>& instances() const { return instances_; }

    // First-fit over free segments; requests round up to whole blocks.
    AllocResult allocate(Bytes bytes);
    // MIG dispatch path: allocation confined to one instance's range.
    AllocResult allocate_on_instance(int instance, Bytes bytes);
    // Frees and coalesces with adjacent free segments. Throws UnknownRegion.
    void free_region(const MemRegion& region);

    Bytes total_free() const;
    Bytes largest_free() const;
    Bytes used_bytes() const { return capacity_ - total_free(); }
    Bytes instance_free(int instance) const;
    bool instance_idle(int instance) const;

    void add_resident(const std::string& task_id, double smact_demand,
                      int instance = 0);
    void remove_resident(const std::string& task_id);
    bool idle() const { return residents_.empty(); }
    const std::vector<ResidentEntry>& residents() const { return residents_; }

    // Per-task progress rates under the device's sharing mode.
    std::map<std::string, double> effective_rates() const;

    double instantaneous_smact() const;
    // Appends a step point to the SMACT history if the value changed.
    void record_smact(SimSeconds now);
    double windowed_smact(SimSeconds now, SimSeconds window) const;
    const std::vector<std::pair<SimSeconds, double>>& smact_steps() const {
        return smact_steps_;
    }

    double power_draw(const SimConstants& consts) const;

    double energy_j = 0.0;  // accumulated by the event loop
    Bytes peak_used = 0;

    // Checks segment-list consistency; throws on violation (used by tests).
    void check_invariants() const;

  private:
    struct Segment {
        Bytes offset;
        Bytes size;
        bool used;
    };

    AllocResult allocate_range(Bytes range_begin, Bytes range_end, Bytes bytes);
    Bytes round_up(Bytes bytes) const;

    int id_;
    Bytes capacity_;
    CollocationMode mode_;
    Bytes block_;
    std::vector<MigInstance> instances_;
    std::vector<Segment> segments_;  // ordered by offset, covers [0, capacity)
    std::vector<ResidentEntry> residents_;
    std::vector<std::pair<SimSeconds, double>> smact_steps_;
};

}  // namespace carma
