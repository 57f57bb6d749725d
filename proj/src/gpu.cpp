#include "carma/gpu.hpp"

#include <algorithm>
#include <cmath>

#include "carma/errors.hpp"

namespace carma {

std::string_view mode_name(CollocationMode m) {
    switch (m) {
        case CollocationMode::streams: return "streams";
        case CollocationMode::mps: return "mps";
        case CollocationMode::mig: return "mig";
    }
    return "unknown";
}

CollocationMode mode_from_name(std::string_view name) {
    if (name == "streams") return CollocationMode::streams;
    if (name == "mps") return CollocationMode::mps;
    if (name == "mig") return CollocationMode::mig;
    throw ConfigError("unknown collocation mode '" + std::string(name) + "'");
}

GpuDevice::GpuDevice(int id, Bytes capacity, CollocationMode mode,
                     Bytes alloc_block, const std::vector<double>& mig_fractions)
    : id_(id), capacity_(capacity), mode_(mode), block_(alloc_block) {
    if (mode_ == CollocationMode::mig) {
        std::vector<double> fractions = mig_fractions;
        if (fractions.empty()) fractions = {0.5, 0.5};
        double sum = 0.0;
        for (double f : fractions) {
            if (!(f > 0.0) || f > 1.0)
                throw ConfigError("mig instance fraction out of (0, 1]");
            sum += f;
        }
        if (sum > 1.0 + 1e-9)
            throw ConfigError("mig instance fractions exceed the device");
        Bytes base = 0;
        for (std::size_t i = 0; i < fractions.size(); ++i) {
            Bytes cap = round_up(static_cast<Bytes>(
                fractions[i] * static_cast<double>(capacity_)));
            cap = std::min(cap, capacity_ - base);
            // last instance absorbs the rounding remainder
            if (i + 1 == fractions.size() && sum > 1.0 - 1e-9)
                cap = capacity_ - base;
            instances_.push_back({fractions[i], base, cap});
            base += cap;
        }
        if (base > capacity_) throw ConfigError("mig instances exceed capacity");
    } else {
        instances_.push_back({1.0, 0, capacity_});
    }
    segments_.push_back({0, capacity_, false});
}

Bytes GpuDevice::round_up(Bytes bytes) const {
    if (block_ == 0) return bytes;
    return (bytes + block_ - 1) / block_ * block_;
}

AllocResult GpuDevice::allocate(Bytes bytes) {
    return allocate_range(0, capacity_, bytes);
}

AllocResult GpuDevice::allocate_on_instance(int instance, Bytes bytes) {
    const auto& inst = instances_.at(static_cast<std::size_t>(instance));
    return allocate_range(inst.base, inst.base + inst.capacity, bytes);
}

AllocResult GpuDevice::allocate_range(Bytes range_begin, Bytes range_end,
                                      Bytes bytes) {
    const Bytes want = round_up(std::max<Bytes>(bytes, 1));
    Bytes total_free_in_range = 0;
    Bytes largest_free_in_range = 0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        auto& seg = segments_[i];
        if (seg.used) continue;
        Bytes lo = std::max(seg.offset, range_begin);
        Bytes hi = std::min(seg.offset + seg.size, range_end);
        if (lo >= hi) continue;
        Bytes avail = hi - lo;
        total_free_in_range += avail;
        largest_free_in_range = std::max(largest_free_in_range, avail);
        if (avail < want) continue;

        // First fit chooses the segment; the chunk then carves from the end
        // facing away from a live neighbor, so a neighbor's later release
        // merges with the remaining gap instead of stranding it.
        const bool left_used = i > 0 && segments_[i - 1].used &&
                               seg.offset == lo;
        const bool right_used = i + 1 < segments_.size() &&
                                segments_[i + 1].used &&
                                seg.offset + seg.size == hi;
        const bool at_tail = left_used && !right_used;
        const Bytes place = at_tail ? hi - want : lo;

        MemRegion region{place, want};
        std::vector<Segment> replacement;
        if (place > seg.offset)
            replacement.push_back({seg.offset, place - seg.offset, false});
        replacement.push_back({place, want, true});
        if (place + want < seg.offset + seg.size)
            replacement.push_back(
                {place + want, seg.offset + seg.size - (place + want), false});
        segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(i));
        segments_.insert(segments_.begin() + static_cast<std::ptrdiff_t>(i),
                         replacement.begin(), replacement.end());
        peak_used = std::max(peak_used, used_bytes());
        return region;
    }
    return OomFailure{want, total_free_in_range, largest_free_in_range};
}

void GpuDevice::free_region(const MemRegion& region) {
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        auto& seg = segments_[i];
        if (!(seg.used && seg.offset == region.offset && seg.size == region.size))
            continue;
        seg.used = false;
        // Coalesce with right then left neighbor.
        if (i + 1 < segments_.size() && !segments_[i + 1].used) {
            seg.size += segments_[i + 1].size;
            segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        }
        if (i > 0 && !segments_[i - 1].used) {
            segments_[i - 1].size += seg.size;
            segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(i));
        }
        return;
    }
    throw UnknownRegion("no allocated region at offset " +
                        std::to_string(region.offset));
}

Bytes GpuDevice::total_free() const {
    Bytes sum = 0;
    for (const auto& seg : segments_)
        if (!seg.used) sum += seg.size;
    return sum;
}

Bytes GpuDevice::largest_free() const {
    Bytes best = 0;
    for (const auto& seg : segments_)
        if (!seg.used) best = std::max(best, seg.size);
    return best;
}

Bytes GpuDevice::instance_free(int instance) const {
    const auto& inst = instances_.at(static_cast<std::size_t>(instance));
    Bytes sum = 0;
    for (const auto& seg : segments_) {
        if (seg.used) continue;
        Bytes lo = std::max(seg.offset, inst.base);
        Bytes hi = std::min(seg.offset + seg.size, inst.base + inst.capacity);
        if (lo < hi) sum += hi - lo;
    }
    return sum;
}

bool GpuDevice::instance_idle(int instance) const {
    for (const auto& r : residents_)
        if (r.instance == instance) return false;
    return true;
}

void GpuDevice::add_resident(const std::string& task_id, double smact_demand,
                             int instance) {
    residents_.push_back({task_id, smact_demand, instance});
}

void GpuDevice::remove_resident(const std::string& task_id) {
    auto it = std::find_if(residents_.begin(), residents_.end(),
                           [&](const ResidentEntry& r) { return r.task_id == task_id; });
    if (it == residents_.end())
        throw UnknownRegion("task '" + task_id + "' not resident on gpu " +
                            std::to_string(id_));
    residents_.erase(it);
}

std::map<std::string, double> GpuDevice::effective_rates() const {
    std::map<std::string, double> rates;
    if (residents_.empty()) return rates;

    if (mode_ == CollocationMode::mig) {
        // One task per instance; a task demanding more compute than its
        // instance owns is throttled to the instance share.
        for (const auto& r : residents_) {
            double f = instances_.at(static_cast<std::size_t>(r.instance)).fraction;
            rates[r.task_id] = std::min(1.0, f / r.smact_demand);
        }
        return rates;
    }

    double total_demand = 0.0;
    for (const auto& r : residents_) total_demand += r.smact_demand;
    const std::size_t n = residents_.size();

    if (mode_ == CollocationMode::mps) {
        // Fine-grained sharing: no interference until aggregate demand
        // exceeds the device, then everyone slows proportionally.
        double rate = std::min(1.0, 1.0 / total_demand);
        for (const auto& r : residents_) rates[r.task_id] = rate;
        return rates;
    }

    // streams: kernels serialize, so the device round-robins whole time
    // slices across the resident streams. Each of n collocated tasks
    // progresses at 1/n and the stack drains like back-to-back execution.
    (void)total_demand;
    for (const auto& r : residents_)
        rates[r.task_id] = 1.0 / static_cast<double>(n);
    return rates;
}

double GpuDevice::instantaneous_smact() const {
    if (residents_.empty()) return 0.0;
    // Demands weighted by effective rate: a task only keeps warps active
    // while it actually progresses. Under MPS beyond capacity this saturates
    // at 1.0; under streams a time-sliced stack averages out near the mean
    // solo demand.
    const auto rates = effective_rates();
    double sum = 0.0;
    for (const auto& r : residents_)
        sum += r.smact_demand * rates.at(r.task_id);
    return std::min(1.0, sum);
}

void GpuDevice::record_smact(SimSeconds now) {
    double v = instantaneous_smact();
    if (!smact_steps_.empty()) {
        auto& [t, last] = smact_steps_.back();
        if (last == v) return;
        if (t == now) {
            last = v;
            return;
        }
    }
    smact_steps_.push_back({now, v});
}

double GpuDevice::windowed_smact(SimSeconds now, SimSeconds window) const {
    if (window <= 0.0) throw ConfigError("window must be > 0");
    const double begin = std::max(0.0, now - window);
    const double span = now - begin;
    if (span <= 0.0) return instantaneous_smact();

    double integral = 0.0;
    double level = 0.0;
    double cursor = begin;
    // Steps are time-ordered; the level before the first step is 0.
    for (std::size_t i = 0; i < smact_steps_.size(); ++i) {
        const auto& [t, v] = smact_steps_[i];
        if (t <= begin) {
            level = v;
            continue;
        }
        if (t >= now) break;
        integral += level * (t - cursor);
        cursor = t;
        level = v;
    }
    integral += level * (now - cursor);
    return integral / span;
}

double GpuDevice::power_draw(const SimConstants& consts) const {
    const double s = instantaneous_smact();
    double p = consts.p_idle_w + (consts.p_max_w - consts.p_idle_w) * s;
    if (s > consts.boost_threshold) p += consts.p_boost_w;
    return p;
}

void GpuDevice::check_invariants() const {
    Bytes cursor = 0;
    Bytes sum = 0;
    for (const auto& seg : segments_) {
        if (seg.offset != cursor)
            throw CarmaError("segment list has a gap or overlap");
        if (seg.size == 0) throw CarmaError("zero-size segment");
        cursor = seg.offset + seg.size;
        sum += seg.size;
    }
    if (sum != capacity_) throw CarmaError("segment sizes do not cover capacity");
    double s = instantaneous_smact();
    if (s < 0.0 || s > 1.0) throw CarmaError("smact out of [0,1]");
}

}  // namespace carma
