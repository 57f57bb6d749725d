#pragma once

#include <string>
#include <vector>

#include "carma/task.hpp"

namespace carma {

struct CatalogEntry {
    std::string key;         // <model>_<dataset>_bs<batch>
    std::string model_name;
    ModelFamily family = ModelFamily::CNN;
    std::string dataset;
    std::uint64_t batch_size = 1;
    std::uint64_t gpus = 1;
    double epoch_time_minutes = 0.0;
    std::vector<std::uint64_t> epoch_options;  // one entry unless the row offers a choice
    double mem_gib = 0.0;
    WeightClass weight_class = WeightClass::medium;
    double smact_demand = 0.5;
};

// The 35 training configurations the traces draw from.
const std::vector<CatalogEntry>& builtin_catalog();
const CatalogEntry& catalog_entry(const std::string& key);  // UnknownCatalogKey

// Deterministic layer stack whose simulated footprint lands within one
// allocator block of the catalog's measured memory, so estimators trained on
// synthetic data transfer to catalog tasks.
ModelDescriptor catalog_descriptor(const CatalogEntry& entry);

TaskSpec task_from_catalog(const CatalogEntry& entry, const std::string& id,
                           SimSeconds submit_time, std::uint64_t epochs);

enum class TraceMix { t90, t60 };

std::string_view mix_name(TraceMix mix);
TraceMix mix_from_name(std::string_view name);

struct TraceRow {
    SimSeconds submit_s = 0.0;
    std::string catalog_key;
    std::uint64_t epochs = 1;
};

struct TraceFile {
    std::uint64_t seed = 0;
    std::string mix;
    std::vector<TraceRow> rows;
};

// t90: 90 tasks, 59 light / 24 medium / 7 heavy. t60: 60 tasks, 50 medium /
// 10 heavy. Entries drawn uniformly within class, light epochs drawn from
// {20, 50}, arrivals from a seeded Poisson process (mean gap 120 s).
TraceFile generate_trace(TraceMix mix, std::uint64_t seed);

void save_trace(const TraceFile& trace, const std::string& path);
TraceFile load_trace_file(const std::string& path);  // MalformedTrace etc.

std::vector<TaskSpec> materialize_trace(const TraceFile& trace);
std::vector<TaskSpec> load_trace(const std::string& path);

inline constexpr double kMeanInterarrivalS = 120.0;

}  // namespace carma
