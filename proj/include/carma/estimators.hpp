#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "carma/memory_model.hpp"
#include "carma/task.hpp"
#include "carma/units.hpp"

namespace carma {

enum class EstimateSource { oracle, analytical, static_graph, learned };

std::string_view estimate_source_name(EstimateSource s);

struct MemoryEstimate {
    Bytes bytes = 0;
    std::optional<int> bucket;
    Bytes bucket_range = 0;  // set when bucket is present
    EstimateSource source = EstimateSource::oracle;
};

// Memory interval index: [k*range, (k+1)*range) -> k. Boundary values map to
// the upper class.
int bucketize(Bytes mem, Bytes range);

// The estimator personas. Oracle sees the ground truth; the other two are
// deliberately imperfect in the directions their real counterparts err.
MemoryEstimate estimate_oracle(const TaskSpec& task, Bytes margin);

struct AnalyticalConstants {
    std::uint64_t bytes_per_value = 4;
    std::uint64_t param_copies = 4;
    Bytes base_overhead = kGiB;  // framework overhead assumed by the formula
};

// Formula-based over-estimator: full activation accounting for every sample
// in the batch plus a generous framework base.
MemoryEstimate estimate_analytical(const TaskSpec& task,
                                   const AnalyticalConstants& consts = {});

// Static-graph walker: parameters only plus a small buffer. Ignores
// activations entirely, so it systematically under-estimates, and it cannot
// process transformer graphs at all (throws IncompatibleFamily).
MemoryEstimate estimate_static_graph(const TaskSpec& task);

inline constexpr Bytes kStaticGraphBuffer = 64 * kMiB;

struct DatasetRow {
    FeatureVector features;
    Bytes mem_bytes = 0;
    int bucket = 0;
};

struct EstimatorDataset {
    std::vector<DatasetRow> rows;
    Bytes bucket_range = kGiB;
    ModelFamily family = ModelFamily::MLP;
    std::uint64_t seed = 0;  // generation seed; also seeds the holdout split
};

Bytes default_bucket_range(ModelFamily family);  // 1 GiB MLP, 8 GiB otherwise

struct GenerationBounds {
    std::uint64_t min_layers = 1, max_layers = 10;
    std::uint64_t min_width = 64, max_width = 6144;
    std::uint64_t min_batch = 8, max_batch = 512;
    std::uint64_t min_input = 64, max_input = 4096;
    std::uint64_t min_output = 10, max_output = 1024;

    static GenerationBounds for_family(ModelFamily family);
    void validate() const;  // throws InvalidBounds
};

// Seeded synthetic architecture sampler following uniform draws over the
// bounds and a shape pattern in {uniform, pyramid, hourglass}. Rows are
// labeled with the simulator's ground-truth footprint.
EstimatorDataset generate_synthetic_dataset(
    ModelFamily family, std::size_t n_samples, std::uint64_t seed,
    std::optional<Bytes> bucket_range = std::nullopt,
    std::optional<GenerationBounds> bounds = std::nullopt);

void save_dataset_csv(const EstimatorDataset& dataset, const std::string& path);
// Reloads the scalar columns; layer tuples are not persisted in the CSV.
EstimatorDataset load_dataset_csv(const std::string& path);

inline constexpr std::size_t kScalarFeatureCount = 19;
using ScalarFeatures = std::array<double, kScalarFeatureCount>;

// Flattens a FeatureVector for the k-NN: the scalar tallies, the first,
// middle, and last layer tuples, and a derived tensor-byte heuristic
// (parameter copies plus batch-scaled activations) that gives the distance
// metric a handle on the quantity the buckets actually follow.
ScalarFeatures scalar_features(const FeatureVector& fv);

struct HoldoutReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::size_t train_size = 0;
    std::size_t holdout_size = 0;
    // Fraction of holdout rows whose upper-edge estimate still falls below
    // the true footprint (downward misclassifications only).
    double underestimate_rate = 0.0;
};

class LearnedEstimator {
  public:
    ModelFamily family() const { return family_; }
    Bytes bucket_range() const { return bucket_range_; }
    std::size_t k() const { return k_; }
    const HoldoutReport& holdout() const { return holdout_; }

    int predict(const FeatureVector& features) const;

    void save(const std::string& path) const;
    static LearnedEstimator load(const std::string& path);

  private:
    friend LearnedEstimator train_learned_estimator(const EstimatorDataset&,
                                                    std::size_t);
    int predict_scalar(const ScalarFeatures& raw) const;

    ModelFamily family_ = ModelFamily::MLP;
    Bytes bucket_range_ = kGiB;
    std::size_t k_ = 5;
    std::uint64_t seed_ = 0;
    ScalarFeatures lo_{}, hi_{};  // min-max normalization bounds
    std::vector<ScalarFeatures> points_;  // normalized training rows
    std::vector<int> labels_;
    HoldoutReport holdout_;
};

// Fits a k-NN bucket classifier over min-max-normalized scalar features on a
// seeded 70/30 split; holdout metrics are recorded on the returned model.
LearnedEstimator train_learned_estimator(const EstimatorDataset& dataset,
                                         std::size_t k);

MemoryEstimate estimate_learned(const LearnedEstimator& est,
                                const FeatureVector& features,
                                ModelFamily family);

}  // namespace carma
