#include "carma/traces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "carma/errors.hpp"
#include "carma/memory_model.hpp"
#include "carma/rng.hpp"

namespace carma {

namespace {

CatalogEntry make_entry(std::string model, ModelFamily family, std::string dataset,
                        std::uint64_t bs, std::uint64_t gpus, double et_min,
                        std::vector<std::uint64_t> epochs, double mem_gib,
                        WeightClass wc, double demand) {
    CatalogEntry e;
    e.model_name = model;
    e.key = model + "_" + dataset + "_bs" + std::to_string(bs);
    e.family = family;
    e.dataset = std::move(dataset);
    e.batch_size = bs;
    e.gpus = gpus;
    e.epoch_time_minutes = et_min;
    e.epoch_options = std::move(epochs);
    e.mem_gib = mem_gib;
    e.weight_class = wc;
    e.smact_demand = demand;
    return e;
}

std::vector<CatalogEntry> build_catalog() {
    using WC = WeightClass;
    const auto TF = ModelFamily::Transformer;
    const auto CNN = ModelFamily::CNN;
    std::vector<CatalogEntry> cat;

    // Transformers on WikiText-2; all heavy. Demands reflect how hard each
    // configuration drives the SMs on a 40 GiB part.
    cat.push_back(make_entry("xlnet_base", TF, "wikitext2", 8, 2, 8.95, {8}, 9.72, WC::heavy, 0.43));
    cat.push_back(make_entry("bert_base", TF, "wikitext2", 32, 1, 14.87, {1}, 20.77, WC::heavy, 0.45));
    cat.push_back(make_entry("xlnet_large", TF, "wikitext2", 4, 2, 25.31, {3}, 14.55, WC::heavy, 0.44));
    cat.push_back(make_entry("bert_large", TF, "wikitext2", 8, 1, 44.93, {1}, 13.57, WC::heavy, 0.45));
    cat.push_back(make_entry("gpt2_large", TF, "wikitext2", 8, 2, 64.96, {1}, 27.90, WC::heavy, 0.46));

    // CNNs on ImageNet; heavy above 19 GiB, medium otherwise.
    struct ImgRow { const char* name; std::uint64_t bs; double et, mem, demand; };
    const ImgRow imagenet[] = {
        {"efficientnet_b0", 32, 36.21, 4.96, 0.41},
        {"efficientnet_b0", 64, 35.41, 7.84, 0.43},
        {"efficientnet_b0", 128, 35.21, 13.83, 0.45},
        {"resnet50", 32, 36.32, 5.26, 0.42},
        {"resnet50", 64, 35.50, 8.54, 0.44},
        {"resnet50", 128, 35.01, 15.12, 0.45},
        {"mobilenet_v2", 32, 36.09, 4.54, 0.41},
        {"mobilenet_v2", 64, 35.43, 7.22, 0.42},
        {"mobilenet_v2", 128, 34.91, 12.58, 0.44},
        {"vgg16", 32, 48.45, 8.22, 0.42},
        {"vgg16", 64, 44.38, 13.64, 0.44},
        {"vgg16", 128, 42.42, 24.41, 0.45},
        {"xception", 32, 46.86, 7.20, 0.42},
        {"xception", 64, 45.78, 11.52, 0.43},
        {"xception", 128, 44.44, 22.98, 0.44},
        {"inception", 32, 50.10, 6.35, 0.41},
        {"inception", 64, 46.29, 10.56, 0.43},
        {"inception", 128, 44.85, 19.02, 0.44},
    };
    for (const auto& r : imagenet) {
        WC wc = r.mem >= 19.0 ? WC::heavy : WC::medium;
        cat.push_back(make_entry(r.name, CNN, "imagenet", r.bs, 1, r.et, {1}, r.mem, wc, r.demand));
    }

    // CNNs on CIFAR-100; all light, epoch count is a per-task choice.
    struct CifarRow { const char* name; std::uint64_t bs; double et, mem, demand; };
    // Small fast kernels keep warps active most of the time, so the CIFAR
    // jobs show high SMACT despite their size.
    const CifarRow cifar[] = {
        {"efficientnet_b0", 32, 0.77, 1.86, 0.66},
        {"efficientnet_b0", 64, 0.48, 1.91, 0.70},
        {"efficientnet_b0", 128, 0.27, 2.05, 0.74},
        {"resnet18", 32, 0.33, 1.96, 0.64},
        {"resnet18", 64, 0.22, 1.97, 0.68},
        {"resnet18", 128, 0.16, 2.01, 0.72},
        {"resnet34", 32, 0.49, 2.15, 0.65},
        {"resnet34", 64, 0.30, 2.17, 0.69},
        {"resnet34", 128, 0.20, 2.19, 0.73},
        {"mobilenetv3_small", 32, 0.54, 1.78, 0.62},
        {"mobilenetv3_small", 64, 0.32, 1.79, 0.66},
        {"mobilenetv3_small", 128, 0.22, 1.82, 0.70},
    };
    for (const auto& r : cifar)
        cat.push_back(make_entry(r.name, CNN, "cifar100", r.bs, 1, r.et, {20, 50},
                                 r.mem, WC::light, r.demand));
    return cat;
}

// Nominal layer depth per model; only the distribution of parameters and
// activations across the stack depends on it.
int model_depth(const std::string& name) {
    static const std::map<std::string, int> kDepth = {
        {"resnet18", 18},       {"resnet34", 34},
        {"resnet50", 50},       {"vgg16", 16},
        {"efficientnet_b0", 25},{"mobilenet_v2", 19},
        {"mobilenetv3_small", 13}, {"xception", 36},
        {"inception", 22},      {"xlnet_base", 12},
        {"xlnet_large", 24},    {"bert_base", 12},
        {"bert_large", 24},     {"gpt2_large", 36},
    };
    auto it = kDepth.find(name);
    return it == kDepth.end() ? 16 : it->second;
}

// Splits `total` into `n` equal integer shares; the first share takes the
// remainder so the parts sum exactly.
std::vector<std::uint64_t> split_exact(std::uint64_t total, std::size_t n) {
    std::vector<std::uint64_t> parts(n, n ? total / n : 0);
    if (n) parts[0] += total - (total / n) * n;
    return parts;
}

}  // namespace

const std::vector<CatalogEntry>& builtin_catalog() {
    static const std::vector<CatalogEntry> kCatalog = build_catalog();
    return kCatalog;
}

const CatalogEntry& catalog_entry(const std::string& key) {
    for (const auto& e : builtin_catalog())
        if (e.key == key) return e;
    throw UnknownCatalogKey("no catalog entry '" + key + "'");
}

namespace {

// Scales integer layer counts so the totals hit the targets exactly; the
// remainder lands on the largest layer.
void rescale_layers(std::vector<LayerRecord>& layers, std::uint64_t p_target,
                    std::uint64_t a_target) {
    std::uint64_t p_sum = 0, a_sum = 0;
    for (const auto& l : layers) {
        p_sum += l.param_count;
        a_sum += l.activation_count;
    }
    std::size_t p_big = 0, a_big = 0;
    std::uint64_t p_new = 0, a_new = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        l.param_count = p_sum ? static_cast<std::uint64_t>(
                                    static_cast<double>(l.param_count) *
                                    static_cast<double>(p_target) /
                                    static_cast<double>(p_sum))
                              : 0;
        l.activation_count = a_sum ? static_cast<std::uint64_t>(
                                         static_cast<double>(l.activation_count) *
                                         static_cast<double>(a_target) /
                                         static_cast<double>(a_sum))
                                   : 0;
        if (l.param_count > layers[p_big].param_count) p_big = i;
        if (l.activation_count > layers[a_big].activation_count) a_big = i;
        p_new += l.param_count;
        a_new += l.activation_count;
    }
    layers[p_big].param_count += p_target - p_new;
    layers[a_big].activation_count += a_target - a_new;
}

}  // namespace

ModelDescriptor catalog_descriptor(const CatalogEntry& entry) {
    const SimConstants consts;
    const Bytes mem =
        static_cast<Bytes>(std::llround(entry.mem_gib * static_cast<double>(kGiB)));
    const Bytes raw = mem > consts.framework_base ? mem - consts.framework_base : 0;

    // Activation-heavy CNNs, parameter-heavy transformers.
    const double act_share = entry.family == ModelFamily::Transformer ? 0.45 : 0.72;
    const std::uint64_t A = static_cast<std::uint64_t>(
        act_share * static_cast<double>(raw) /
        static_cast<double>(consts.bytes_per_value * entry.batch_size));
    const std::uint64_t P = static_cast<std::uint64_t>(
        (1.0 - act_share) * static_cast<double>(raw) /
        static_cast<double>(consts.bytes_per_value * consts.param_copies));

    ModelDescriptor m;
    m.family = entry.family;
    const int depth = model_depth(entry.model_name);

    if (entry.family == ModelFamily::Transformer) {
        m.activation_angle = ActivationRegistry::angle_of("gelu");
        const std::size_t blocks = static_cast<std::size_t>(depth);
        // Embedding size consistent with the parameter budget: blocks carry
        // ~80% of parameters at 12*d^2 each.
        std::uint64_t d = static_cast<std::uint64_t>(std::sqrt(
            0.8 * static_cast<double>(P) / (12.0 * static_cast<double>(blocks))));
        d = std::max<std::uint64_t>(64, d / 64 * 64);
        std::uint64_t seq = std::max<std::uint64_t>(
            16, A / (d * (7 * blocks + 1)));
        m.input_size = seq;
        m.output_size = 30000;
        m.layers.push_back({LayerKind::embedding, 30000 * d, seq * d});
        for (std::size_t i = 0; i < blocks; ++i) {
            m.layers.push_back({LayerKind::attention, 4 * d * d, 2 * seq * d});
            m.layers.push_back({LayerKind::linear, 8 * d * d, 5 * seq * d});
        }
    } else {
        m.activation_angle = ActivationRegistry::angle_of("relu");
        const std::uint64_t side = entry.dataset == "cifar100" ? 32 : 224;
        m.input_size = side * side * 3;
        m.output_size = entry.dataset == "cifar100" ? 100 : 1000;
        const std::size_t convs = static_cast<std::size_t>(depth);
        // Stage-wise channel doubling with spatial halving, the same shape
        // the synthetic sampler produces.
        std::uint64_t c_prev = 3;
        std::uint64_t spatial = side * side;
        for (std::size_t i = 0; i < convs; ++i) {
            std::uint64_t stage = std::min<std::uint64_t>(3, i * 4 / convs);
            std::uint64_t c = 64ull << stage;
            m.layers.push_back({LayerKind::conv2d, 9 * c_prev * c + c, c * spatial});
            if (i % 2 == 0)
                m.layers.push_back({LayerKind::batchnorm, 2 * c, c * spatial});
            if (i % 2 == 1 && spatial > 64) spatial /= 4;
            c_prev = c;
        }
        m.layers.push_back(
            {LayerKind::linear, c_prev * m.output_size + m.output_size,
             m.output_size});
    }
    rescale_layers(m.layers, P, A);
    return m;
}

TaskSpec task_from_catalog(const CatalogEntry& entry, const std::string& id,
                           SimSeconds submit_time, std::uint64_t epochs) {
    TaskSpec task;
    task.id = id;
    task.submit_time = submit_time;
    task.model = catalog_descriptor(entry);
    task.batch_size = entry.batch_size;
    task.epochs = epochs;
    task.gpus_requested = entry.gpus;
    task.nominal_epoch_time = entry.epoch_time_minutes * 60.0;
    task.smact_demand = entry.smact_demand;
    task.true_mem_bytes =
        static_cast<Bytes>(std::llround(entry.mem_gib * static_cast<double>(kGiB)));
    task.weight_class = entry.weight_class;
    task.validate();
    return task;
}

std::string_view mix_name(TraceMix mix) {
    return mix == TraceMix::t90 ? "t90" : "t60";
}

TraceMix mix_from_name(std::string_view name) {
    if (name == "t90") return TraceMix::t90;
    if (name == "t60") return TraceMix::t60;
    throw ConfigError("unknown trace mix '" + std::string(name) + "'");
}

TraceFile generate_trace(TraceMix mix, std::uint64_t seed) {
    // Class counts are the nearest integers to the published percentages.
    struct ClassDraw { WeightClass wc; std::size_t count; };
    std::vector<ClassDraw> plan;
    if (mix == TraceMix::t90) {
        plan = {{WeightClass::light, 59},
                {WeightClass::medium, 24},
                {WeightClass::heavy, 7}};
    } else {
        plan = {{WeightClass::medium, 50}, {WeightClass::heavy, 10}};
    }

    std::map<WeightClass, std::vector<const CatalogEntry*>> pools;
    for (const auto& e : builtin_catalog()) pools[e.weight_class].push_back(&e);

    Rng rng(seed);
    std::vector<const CatalogEntry*> picks;
    for (const auto& cls : plan) {
        const auto& pool = pools.at(cls.wc);
        for (std::size_t i = 0; i < cls.count; ++i)
            picks.push_back(pool[rng.uniform(pool.size())]);
    }
    rng.shuffle(picks);

    TraceFile trace;
    trace.seed = seed;
    trace.mix = std::string(mix_name(mix));
    double t = 0.0;
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const CatalogEntry* e = picks[i];
        if (i > 0) t += rng.exponential(kMeanInterarrivalS);
        TraceRow row;
        row.submit_s = std::round(t * 1000.0) / 1000.0;  // ms grid, round-trips
        row.catalog_key = e->key;
        row.epochs = e->epoch_options.size() == 1
                         ? e->epoch_options[0]
                         : e->epoch_options[rng.uniform(e->epoch_options.size())];
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

void save_trace(const TraceFile& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CarmaError("cannot open '" + path + "' for writing");
    out << "#carma-trace v1 seed=" << trace.seed << " mix=" << trace.mix << "\n";
    char buf[64];
    for (const auto& row : trace.rows) {
        std::snprintf(buf, sizeof(buf), "%.3f", row.submit_s);
        out << buf << ',' << row.catalog_key << ',' << row.epochs << '\n';
    }
}

TraceFile load_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MalformedTrace("cannot open '" + path + "'");
    std::string header;
    if (!std::getline(in, header)) throw MalformedTrace("empty trace file");
    TraceFile trace;
    {
        std::istringstream hs(header);
        std::string magic, field;
        hs >> magic;
        if (magic != "#carma-trace") throw MalformedTrace("bad trace header");
        hs >> field;
        if (field != "v1") throw MalformedTrace("unsupported trace version");
        while (hs >> field) {
            auto eq = field.find('=');
            if (eq == std::string::npos) throw MalformedTrace("bad header field");
            std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            if (key == "seed")
                trace.seed = std::stoull(value);
            else if (key == "mix")
                trace.mix = value;
        }
    }
    std::string line;
    double prev = -1.0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string submit, key, epochs;
        if (!std::getline(ls, submit, ',') || !std::getline(ls, key, ',') ||
            !std::getline(ls, epochs))
            throw MalformedTrace("bad trace row: " + line);
        TraceRow row;
        try {
            row.submit_s = std::stod(submit);
            row.epochs = std::stoull(epochs);
        } catch (const std::exception&) {
            throw MalformedTrace("non-numeric trace row: " + line);
        }
        row.catalog_key = key;
        catalog_entry(key);  // throws UnknownCatalogKey
        if (row.submit_s < prev)
            throw MalformedTrace("submit times must be non-decreasing");
        prev = row.submit_s;
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

std::vector<TaskSpec> materialize_trace(const TraceFile& trace) {
    std::vector<TaskSpec> tasks;
    tasks.reserve(trace.rows.size());
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const auto& row = trace.rows[i];
        char id[96];
        std::snprintf(id, sizeof(id), "t%03zu-%s", i, row.catalog_key.c_str());
        tasks.push_back(task_from_catalog(catalog_entry(row.catalog_key), id,
                                          row.submit_s, row.epochs));
    }
    return tasks;
}

std::vector<TaskSpec> load_trace(const std::string& path) {
    return materialize_trace(load_trace_file(path));
}

}  // namespace carma
