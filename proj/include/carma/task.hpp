#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "carma/units.hpp"

namespace carma {

enum class LayerKind {
    linear,
    conv1d,
    conv2d,
    batchnorm,
    dropout,
    attention,
    embedding,
};

int layer_kind_code(LayerKind k);
std::string_view layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(std::string_view name);

enum class ModelFamily { MLP, CNN, Transformer };

std::string_view family_name(ModelFamily f);
ModelFamily family_from_name(std::string_view name);

enum class WeightClass { light, medium, heavy };

std::string_view weight_class_name(WeightClass c);
WeightClass weight_class_from_name(std::string_view name);

struct LayerRecord {
    LayerKind kind = LayerKind::linear;
    std::uint64_t param_count = 0;
    std::uint64_t activation_count = 0;  // per-sample activations produced
};

struct ModelDescriptor {
    ModelFamily family = ModelFamily::MLP;
    std::vector<LayerRecord> layers;
    double activation_angle = 0.0;  // radians, [0, 2pi)
    std::uint64_t input_size = 0;
    std::uint64_t output_size = 0;

    std::uint64_t total_params() const;
    std::uint64_t total_activations() const;
    void validate() const;  // throws MalformedSpec on invariant violation
};

// Fixed registry of activation names; each gets an equally spaced angle on
// the unit circle so (cos, sin) encodes the activation as two features.
struct ActivationRegistry {
    static const std::array<std::string_view, 8>& names();
    static double angle_of(std::string_view name);  // throws MalformedSpec
};

struct TaskSpec {
    std::string id;
    SimSeconds submit_time = 0.0;
    ModelDescriptor model;
    std::uint64_t batch_size = 1;
    std::uint64_t epochs = 1;
    std::uint64_t gpus_requested = 1;
    SimSeconds nominal_epoch_time = 0.0;  // one epoch at full, uncontended rate
    double smact_demand = 0.0;            // (0, 1]
    Bytes true_mem_bytes = 0;  // ground truth; simulator/oracle eyes only
    WeightClass weight_class = WeightClass::medium;

    SimSeconds total_work() const {
        return static_cast<double>(epochs) * nominal_epoch_time;
    }
    void validate() const;
};

struct LayerTuple {
    int kind_code = 0;
    std::uint64_t activation_count = 0;
    std::uint64_t param_count = 0;

    friend bool operator==(const LayerTuple&, const LayerTuple&) = default;
};

struct FeatureVector {
    std::uint64_t n_linear = 0;
    std::uint64_t n_batchnorm = 0;
    std::uint64_t n_dropout = 0;
    std::uint64_t n_conv = 0;  // conv1d + conv2d
    std::uint64_t batch_size = 0;
    std::uint64_t total_params = 0;
    std::uint64_t total_activations = 0;
    double act_cos = 1.0;
    double act_sin = 0.0;
    std::vector<LayerTuple> layer_tuples;
};

// Parses a flat `key = value` spec document into a TaskSpec. Pure; unknown
// keys are rejected. Throws MalformedSpec / UnsupportedFamily.
TaskSpec parse_task_spec(const std::string& text);

// Renders a TaskSpec back into the document form accepted by parse_task_spec.
std::string serialize_task_spec(const TaskSpec& task);

FeatureVector extract_features(const ModelDescriptor& model,
                               std::uint64_t batch_size);

// A small family-appropriate layer stack for spec documents that omit the
// optional `layers` key.
ModelDescriptor default_descriptor(ModelFamily family);

}  // namespace carma
