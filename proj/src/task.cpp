#include "carma/task.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "carma/errors.hpp"

namespace carma {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kLayerNames{{
    {LayerKind::linear, "linear"},
    {LayerKind::conv1d, "conv1d"},
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::attention, "attention"},
    {LayerKind::embedding, "embedding"},
}};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
    std::uint64_t out = 0;
    bool any = false;
    for (char c : value) {
        if (c < '0' || c > '9')
            throw MalformedSpec("non-numeric value for '" + std::string(key) +
                                "': " + std::string(value));
        out = out * 10 + static_cast<std::uint64_t>(c - '0');
        any = true;
    }
    if (!any)
        throw MalformedSpec("empty value for '" + std::string(key) + "'");
    return out;
}

double parse_f64(std::string_view key, std::string_view value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(std::string(value), &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw MalformedSpec("non-numeric value for '" + std::string(key) +
                            "': " + std::string(value));
    }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(sep, start);
        if (end == std::string_view::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, end - start));
        start = end + 1;
    }
    return parts;
}

std::vector<LayerRecord> parse_layers(std::string_view value) {
    std::vector<LayerRecord> layers;
    for (auto item : split(value, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        auto fields = split(item, ':');
        if (fields.size() != 3)
            throw MalformedSpec("layer tuple must be kind:params:activations, got '" +
                                std::string(item) + "'");
        LayerRecord rec;
        rec.kind = layer_kind_from_name(trim(fields[0]));
        rec.param_count = parse_u64("layers", trim(fields[1]));
        rec.activation_count = parse_u64("layers", trim(fields[2]));
        layers.push_back(rec);
    }
    return layers;
}

}  // namespace

int layer_kind_code(LayerKind k) { return static_cast<int>(k); }

std::string_view layer_kind_name(LayerKind k) {
    for (auto& [kind, name] : kLayerNames)
        if (kind == k) return name;
    return "unknown";
}

LayerKind layer_kind_from_name(std::string_view name) {
    for (auto& [kind, n] : kLayerNames)
        if (n == name) return kind;
    throw MalformedSpec("unknown layer kind '" + std::string(name) + "'");
}

std::string_view family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::MLP: return "mlp";
        case ModelFamily::CNN: return "cnn";
        case ModelFamily::Transformer: return "transformer";
    }
    return "unknown";
}

ModelFamily family_from_name(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower == "mlp") return ModelFamily::MLP;
    if (lower == "cnn") return ModelFamily::CNN;
    if (lower == "transformer") return ModelFamily::Transformer;
    throw UnsupportedFamily("unsupported model family '" + std::string(name) + "'");
}

std::string_view weight_class_name(WeightClass c) {
    switch (c) {
        case WeightClass::light: return "light";
        case WeightClass::medium: return "medium";
        case WeightClass::heavy: return "heavy";
    }
    return "unknown";
}

WeightClass weight_class_from_name(std::string_view name) {
    if (name == "light") return WeightClass::light;
    if (name == "medium") return WeightClass::medium;
    if (name == "heavy") return WeightClass::heavy;
    throw MalformedSpec("unknown weight class '" + std::string(name) + "'");
}

std::uint64_t ModelDescriptor::total_params() const {
    std::uint64_t sum = 0;
    for (const auto& l : layers) sum += l.param_count;
    return sum;
}

std::uint64_t ModelDescriptor::total_activations() const {
    std::uint64_t sum = 0;
    for (const auto& l : layers) sum += l.activation_count;
    return sum;
}

void ModelDescriptor::validate() const {
    if (layers.empty()) throw MalformedSpec("model has no layers");
    if (activation_angle < 0.0 || activation_angle >= 2.0 * std::numbers::pi)
        throw MalformedSpec("activation_angle out of [0, 2pi)");
    bool has_conv = false;
    bool has_attention = false;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::dropout && l.param_count != 0)
            throw MalformedSpec("dropout layer with nonzero params");
        if (l.kind == LayerKind::conv1d || l.kind == LayerKind::conv2d)
            has_conv = true;
        if (l.kind == LayerKind::attention) has_attention = true;
    }
    if (family == ModelFamily::CNN && !has_conv)
        throw MalformedSpec("cnn descriptor without a conv layer");
    if (family == ModelFamily::Transformer && !has_attention)
        throw MalformedSpec("transformer descriptor without an attention layer");
}

const std::array<std::string_view, 8>& ActivationRegistry::names() {
    static const std::array<std::string_view, 8> kNames = {
        "relu", "gelu", "tanh", "sigmoid", "silu", "leaky_relu", "elu", "none"};
    return kNames;
}

double ActivationRegistry::angle_of(std::string_view name) {
    const auto& ns = names();
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (ns[i] == name)
            return 2.0 * std::numbers::pi * static_cast<double>(i) /
                   static_cast<double>(ns.size());
    }
    throw MalformedSpec("unknown activation '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
    if (id.empty()) throw MalformedSpec("task id missing");
    if (batch_size < 1) throw MalformedSpec("batch_size must be >= 1");
    if (epochs < 1) throw MalformedSpec("epochs must be >= 1");
    if (gpus_requested < 1) throw MalformedSpec("gpus must be >= 1");
    if (!(nominal_epoch_time > 0.0))
        throw MalformedSpec("epoch_time_s must be > 0");
    if (!(smact_demand > 0.0) || smact_demand > 1.0)
        throw MalformedSpec("smact_demand must be in (0, 1]");
    if (!std::isfinite(total_work()) || !(total_work() > 0.0))
        throw MalformedSpec("total work must be finite and positive");
    model.validate();
}

TaskSpec parse_task_spec(const std::string& text) {
    static const std::array<std::string_view, 9> kRequired = {
        "id",      "family",       "batch_size", "epochs",      "gpus",
        "epoch_time_s", "smact_demand", "mem_gib",    "weight_class"};
    static const std::array<std::string_view, 3> kOptional = {
        "layers", "activation", "submit_s"};

    std::map<std::string, std::string, std::less<>> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string_view lv = trim(line);
        if (lv.empty() || lv.front() == '#') continue;
        auto eq = lv.find('=');
        if (eq == std::string_view::npos)
            throw MalformedSpec("expected 'key = value', got '" + std::string(lv) + "'");
        std::string key(trim(lv.substr(0, eq)));
        std::string value(trim(lv.substr(eq + 1)));
        bool known =
            std::find(kRequired.begin(), kRequired.end(), key) != kRequired.end() ||
            std::find(kOptional.begin(), kOptional.end(), key) != kOptional.end();
        if (!known) throw MalformedSpec("unknown key '" + key + "'");
        if (kv.count(key)) throw MalformedSpec("duplicate key '" + key + "'");
        kv.emplace(std::move(key), std::move(value));
    }
    for (auto req : kRequired)
        if (!kv.count(req))
            throw MalformedSpec("missing required key '" + std::string(req) + "'");

    TaskSpec task;
    task.id = kv["id"];
    task.batch_size = parse_u64("batch_size", kv["batch_size"]);
    task.epochs = parse_u64("epochs", kv["epochs"]);
    task.gpus_requested = parse_u64("gpus", kv["gpus"]);
    task.nominal_epoch_time = parse_f64("epoch_time_s", kv["epoch_time_s"]);
    task.smact_demand = parse_f64("smact_demand", kv["smact_demand"]);
    double mem_gib = parse_f64("mem_gib", kv["mem_gib"]);
    if (mem_gib < 0.0) throw MalformedSpec("mem_gib must be >= 0");
    task.true_mem_bytes =
        static_cast<Bytes>(std::llround(mem_gib * static_cast<double>(kGiB)));
    task.weight_class = weight_class_from_name(kv["weight_class"]);
    if (kv.count("submit_s")) task.submit_time = parse_f64("submit_s", kv["submit_s"]);

    ModelFamily family = family_from_name(kv["family"]);
    if (kv.count("layers")) {
        task.model.family = family;
        task.model.layers = parse_layers(kv["layers"]);
    } else {
        task.model = default_descriptor(family);
    }
    if (kv.count("activation"))
        task.model.activation_angle = ActivationRegistry::angle_of(kv["activation"]);

    task.validate();
    return task;
}

std::string serialize_task_spec(const TaskSpec& task) {
    std::ostringstream out;
    out << "id = " << task.id << "\n";
    out << "family = " << family_name(task.model.family) << "\n";
    out << "batch_size = " << task.batch_size << "\n";
    out << "epochs = " << task.epochs << "\n";
    out << "gpus = " << task.gpus_requested << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", task.nominal_epoch_time);
    out << "epoch_time_s = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.4f", task.smact_demand);
    out << "smact_demand = " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", as_gib(task.true_mem_bytes));
    out << "mem_gib = " << buf << "\n";
    out << "weight_class = " << weight_class_name(task.weight_class) << "\n";
    std::snprintf(buf, sizeof(buf), "%.3f", task.submit_time);
    out << "submit_s = " << buf << "\n";
    // The activation angle maps back to a registry name; emit it only when it
    // matches one exactly (it always does for specs we produce).
    const auto& names = ActivationRegistry::names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        double angle = 2.0 * std::numbers::pi * static_cast<double>(i) /
                       static_cast<double>(names.size());
        if (std::abs(angle - task.model.activation_angle) < 1e-12) {
            out << "activation = " << names[i] << "\n";
            break;
        }
    }
    out << "layers = ";
    for (std::size_t i = 0; i < task.model.layers.size(); ++i) {
        const auto& l = task.model.layers[i];
        if (i) out << ";";
        out << layer_kind_name(l.kind) << ":" << l.param_count << ":"
            << l.activation_count;
    }
    out << "\n";
    return out.str();
}

FeatureVector extract_features(const ModelDescriptor& model,
                               std::uint64_t batch_size) {
    FeatureVector fv;
    fv.batch_size = batch_size;
    fv.act_cos = std::cos(model.activation_angle);
    fv.act_sin = std::sin(model.activation_angle);
    fv.layer_tuples.reserve(model.layers.size());
    for (const auto& l : model.layers) {
        switch (l.kind) {
            case LayerKind::linear: fv.n_linear++; break;
            case LayerKind::batchnorm: fv.n_batchnorm++; break;
            case LayerKind::dropout: fv.n_dropout++; break;
            case LayerKind::conv1d:
            case LayerKind::conv2d: fv.n_conv++; break;
            default: break;
        }
        fv.total_params += l.param_count;
        fv.total_activations += l.activation_count;
        fv.layer_tuples.push_back(
            {layer_kind_code(l.kind), l.activation_count, l.param_count});
    }
    return fv;
}

ModelDescriptor default_descriptor(ModelFamily family) {
    ModelDescriptor m;
    m.family = family;
    m.input_size = 1024;
    m.output_size = 16;
    switch (family) {
        case ModelFamily::MLP:
            m.activation_angle = ActivationRegistry::angle_of("relu");
            m.layers = {
                {LayerKind::linear, 1u << 20, 1u << 10},
                {LayerKind::batchnorm, 2048, 1u << 10},
                {LayerKind::linear, 1u << 18, 256},
                {LayerKind::dropout, 0, 256},
            };
            break;
        case ModelFamily::CNN:
            m.activation_angle = ActivationRegistry::angle_of("relu");
            m.layers = {
                {LayerKind::conv2d, 9408, 1u << 20},
                {LayerKind::batchnorm, 128, 1u << 20},
                {LayerKind::conv2d, 36864, 1u << 18},
                {LayerKind::linear, 512000, 1000},
            };
            break;
        case ModelFamily::Transformer:
            m.activation_angle = ActivationRegistry::angle_of("gelu");
            m.layers = {
                {LayerKind::embedding, 30000 * 768ull, 768},
                {LayerKind::attention, 2360064, 393216},
                {LayerKind::attention, 2360064, 393216},
                {LayerKind::linear, 590592, 768},
                {LayerKind::dropout, 0, 768},
            };
            break;
    }
    return m;
}

}  // namespace carma
