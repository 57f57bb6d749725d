#include "carma/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carma/errors.hpp"
#include "carma/rng.hpp"

namespace carma {

using ordered_json = nlohmann::ordered_json;

std::string_view estimate_source_name(EstimateSource s) {
    switch (s) {
        case EstimateSource::oracle: return "oracle";
        case EstimateSource::analytical: return "analytical";
        case EstimateSource::static_graph: return "static_graph";
        case EstimateSource::learned: return "learned";
    }
    return "unknown";
}

int bucketize(Bytes mem, Bytes range) {
    if (range == 0) throw NonPositiveRange("bucket range must be > 0");
    return static_cast<int>(mem / range);
}

MemoryEstimate estimate_oracle(const TaskSpec& task, Bytes margin) {
    MemoryEstimate est;
    est.bytes = task.true_mem_bytes + margin;
    est.source = EstimateSource::oracle;
    return est;
}

MemoryEstimate estimate_analytical(const TaskSpec& task,
                                   const AnalyticalConstants& consts) {
    const FeatureVector fv = extract_features(task.model, task.batch_size);
    MemoryEstimate est;
    est.bytes = consts.bytes_per_value *
                    (consts.param_copies * fv.total_params +
                     fv.batch_size * fv.total_activations) +
                consts.base_overhead;
    est.source = EstimateSource::analytical;
    return est;
}

MemoryEstimate estimate_static_graph(const TaskSpec& task) {
    if (task.model.family == ModelFamily::Transformer)
        throw IncompatibleFamily("static-graph walker cannot process transformer graphs");
    const FeatureVector fv = extract_features(task.model, task.batch_size);
    MemoryEstimate est;
    est.bytes = 4ull * 4ull * fv.total_params + kStaticGraphBuffer;
    est.source = EstimateSource::static_graph;
    return est;
}

Bytes default_bucket_range(ModelFamily family) {
    return family == ModelFamily::MLP ? kGiB : 8 * kGiB;
}

GenerationBounds GenerationBounds::for_family(ModelFamily family) {
    GenerationBounds b;
    switch (family) {
        case ModelFamily::MLP:
            break;  // defaults
        case ModelFamily::CNN:
            b.min_layers = 4;
            b.max_layers = 40;
            b.min_width = 16;    // channels
            b.max_width = 1152;
            b.min_batch = 16;
            b.max_batch = 256;
            b.min_input = 32;    // spatial side
            b.max_input = 224;
            b.min_output = 10;
            b.max_output = 1000;
            break;
        case ModelFamily::Transformer:
            b.min_layers = 2;
            b.max_layers = 24;
            b.min_width = 256;   // embedding size
            b.max_width = 2048;
            b.min_batch = 1;
            b.max_batch = 64;
            b.min_input = 64;    // sequence length
            b.max_input = 1280;
            b.min_output = 8000;  // vocabulary
            b.max_output = 50000;
            break;
    }
    return b;
}

void GenerationBounds::validate() const {
    if (min_layers < 1 || min_layers > max_layers || min_width > max_width ||
        min_width == 0 || min_batch == 0 || min_batch > max_batch ||
        min_input > max_input || min_output > max_output)
        throw InvalidBounds("inconsistent generation bounds");
}

namespace {

enum class Shape { uniform, pyramid, hourglass };

std::uint64_t shaped_width(Shape shape, std::uint64_t base, std::size_t i,
                           std::size_t n, std::uint64_t floor_width) {
    if (n <= 1) return base;
    const double pos = static_cast<double>(i) / static_cast<double>(n - 1);
    double scale = 1.0;
    switch (shape) {
        case Shape::uniform: scale = 1.0; break;
        case Shape::pyramid: scale = 1.0 - 0.75 * pos; break;
        case Shape::hourglass: scale = 1.0 - 0.75 * (1.0 - std::abs(2.0 * pos - 1.0)); break;
    }
    return std::max<std::uint64_t>(floor_width,
                                   static_cast<std::uint64_t>(scale * static_cast<double>(base)));
}

ModelDescriptor sample_mlp(Rng& rng, const GenerationBounds& b) {
    ModelDescriptor m;
    m.family = ModelFamily::MLP;
    m.input_size = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_input), static_cast<std::int64_t>(b.max_input)));
    m.output_size = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_output), static_cast<std::int64_t>(b.max_output)));
    const auto n_linear = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_layers), static_cast<std::int64_t>(b.max_layers)));
    const auto base = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_width), static_cast<std::int64_t>(b.max_width)));
    const auto shape = static_cast<Shape>(rng.uniform(3));
    m.activation_angle = ActivationRegistry::angle_of(
        ActivationRegistry::names()[rng.uniform(ActivationRegistry::names().size())]);

    std::uint64_t prev = m.input_size;
    for (std::size_t i = 0; i < n_linear; ++i) {
        const bool head = i + 1 == n_linear;
        std::uint64_t w = head ? m.output_size
                               : shaped_width(shape, base, i, n_linear, b.min_width);
        m.layers.push_back({LayerKind::linear, prev * w + w, w});
        if (!head && rng.next_double() < 0.5)
            m.layers.push_back({LayerKind::batchnorm, 2 * w, w});
        if (!head && rng.next_double() < 0.3)
            m.layers.push_back({LayerKind::dropout, 0, w});
        prev = w;
    }
    return m;
}

ModelDescriptor sample_cnn(Rng& rng, const GenerationBounds& b) {
    ModelDescriptor m;
    m.family = ModelFamily::CNN;
    const auto side = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_input), static_cast<std::int64_t>(b.max_input)));
    m.input_size = side * side * 3;
    m.output_size = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_output), static_cast<std::int64_t>(b.max_output)));
    const auto n_conv = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_layers), static_cast<std::int64_t>(b.max_layers)));
    const auto base_ch = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_width), static_cast<std::int64_t>(b.max_width)));
    const auto shape = static_cast<Shape>(rng.uniform(3));
    m.activation_angle = ActivationRegistry::angle_of(
        ActivationRegistry::names()[rng.uniform(ActivationRegistry::names().size())]);

    std::uint64_t c_prev = 3;
    std::uint64_t spatial = side * side;
    for (std::size_t i = 0; i < n_conv; ++i) {
        // Channel counts grow toward the deep end; shape modulates the peak.
        std::uint64_t c = shaped_width(shape, base_ch, n_conv - 1 - i, n_conv, b.min_width);
        m.layers.push_back({LayerKind::conv2d, 9 * c_prev * c + c, c * spatial});
        if (rng.next_double() < 0.7)
            m.layers.push_back({LayerKind::batchnorm, 2 * c, c * spatial});
        if (i % 2 == 1 && spatial > 64) spatial /= 4;  // stride-2 stage
        c_prev = c;
    }
    if (rng.next_double() < 0.3)
        m.layers.push_back({LayerKind::dropout, 0, c_prev});
    m.layers.push_back(
        {LayerKind::linear, c_prev * m.output_size + m.output_size, m.output_size});
    return m;
}

ModelDescriptor sample_transformer(Rng& rng, const GenerationBounds& b) {
    ModelDescriptor m;
    m.family = ModelFamily::Transformer;
    const auto seq = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_input), static_cast<std::int64_t>(b.max_input)));
    m.input_size = seq;
    const auto vocab = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_output), static_cast<std::int64_t>(b.max_output)));
    m.output_size = vocab;
    const auto n_blocks = static_cast<std::size_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_layers), static_cast<std::int64_t>(b.max_layers)));
    const auto base_d = static_cast<std::uint64_t>(rng.uniform_int(
        static_cast<std::int64_t>(b.min_width), static_cast<std::int64_t>(b.max_width)));
    const auto shape = static_cast<Shape>(rng.uniform(3));
    m.activation_angle = ActivationRegistry::angle_of(
        ActivationRegistry::names()[rng.uniform(ActivationRegistry::names().size())]);

    const std::uint64_t d0 = (base_d / 64) * 64;
    m.layers.push_back({LayerKind::embedding, vocab * d0, seq * d0});
    for (std::size_t i = 0; i < n_blocks; ++i) {
        std::uint64_t d = shaped_width(shape, base_d, i, n_blocks, b.min_width);
        d = std::max<std::uint64_t>(64, (d / 64) * 64);
        m.layers.push_back({LayerKind::attention, 4 * d * d, 2 * seq * d});
        m.layers.push_back({LayerKind::linear, 8 * d * d, 5 * seq * d});
        if (rng.next_double() < 0.4)
            m.layers.push_back({LayerKind::dropout, 0, seq * d});
    }
    return m;
}

}  // namespace

EstimatorDataset generate_synthetic_dataset(ModelFamily family,
                                            std::size_t n_samples,
                                            std::uint64_t seed,
                                            std::optional<Bytes> bucket_range,
                                            std::optional<GenerationBounds> bounds) {
    if (n_samples == 0) throw InvalidBounds("n_samples must be > 0");
    GenerationBounds b = bounds.value_or(GenerationBounds::for_family(family));
    b.validate();

    EstimatorDataset ds;
    ds.family = family;
    ds.bucket_range = bucket_range.value_or(default_bucket_range(family));
    if (ds.bucket_range == 0) throw NonPositiveRange("bucket range must be > 0");
    ds.seed = seed;
    ds.rows.reserve(n_samples);

    // Configurations whose footprint exceeds the device would have crashed
    // during collection and can never appear in a real dataset; resample.
    const Bytes feasible = SimConstants{}.gpu_capacity;
    Rng rng(seed);
    int consecutive_rejects = 0;
    while (ds.rows.size() < n_samples) {
        ModelDescriptor model;
        switch (family) {
            case ModelFamily::MLP: model = sample_mlp(rng, b); break;
            case ModelFamily::CNN: model = sample_cnn(rng, b); break;
            case ModelFamily::Transformer: model = sample_transformer(rng, b); break;
        }
        const auto batch = static_cast<std::uint64_t>(rng.uniform_int(
            static_cast<std::int64_t>(b.min_batch), static_cast<std::int64_t>(b.max_batch)));
        DatasetRow row;
        row.mem_bytes = ground_truth_memory(model, batch);
        if (row.mem_bytes > feasible) {
            if (++consecutive_rejects > 10000)
                throw InvalidBounds("bounds generate almost no feasible configs");
            continue;
        }
        consecutive_rejects = 0;
        row.features = extract_features(model, batch);
        row.bucket = bucketize(row.mem_bytes, ds.bucket_range);
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

void save_dataset_csv(const EstimatorDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CarmaError("cannot open '" + path + "' for writing");
    out << "family,n_linear,n_batchnorm,n_dropout,n_conv,batch,params,"
           "activations,act_cos,act_sin,mem_bytes,bucket\n";
    char buf[128];
    for (const auto& row : dataset.rows) {
        const auto& f = row.features;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", f.act_cos, f.act_sin);
        out << family_name(dataset.family) << ',' << f.n_linear << ','
            << f.n_batchnorm << ',' << f.n_dropout << ',' << f.n_conv << ','
            << f.batch_size << ',' << f.total_params << ',' << f.total_activations
            << ',' << buf << ',' << row.mem_bytes << ',' << row.bucket << '\n';
    }
}

EstimatorDataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CarmaError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw CarmaError("empty dataset file");
    EstimatorDataset ds;
    bool family_set = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 12) throw CarmaError("bad dataset row: " + line);
        if (!family_set) {
            ds.family = family_from_name(fields[0]);
            family_set = true;
        }
        DatasetRow r;
        r.features.n_linear = std::stoull(fields[1]);
        r.features.n_batchnorm = std::stoull(fields[2]);
        r.features.n_dropout = std::stoull(fields[3]);
        r.features.n_conv = std::stoull(fields[4]);
        r.features.batch_size = std::stoull(fields[5]);
        r.features.total_params = std::stoull(fields[6]);
        r.features.total_activations = std::stoull(fields[7]);
        r.features.act_cos = std::stod(fields[8]);
        r.features.act_sin = std::stod(fields[9]);
        r.mem_bytes = std::stoull(fields[10]);
        r.bucket = std::stoi(fields[11]);
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

ScalarFeatures scalar_features(const FeatureVector& fv) {
    ScalarFeatures s{};
    s[0] = static_cast<double>(fv.n_linear);
    s[1] = static_cast<double>(fv.n_batchnorm);
    s[2] = static_cast<double>(fv.n_dropout);
    s[3] = static_cast<double>(fv.n_conv);
    s[4] = static_cast<double>(fv.batch_size);
    s[5] = static_cast<double>(fv.total_params);
    s[6] = static_cast<double>(fv.total_activations);
    s[7] = fv.act_cos;
    s[8] = fv.act_sin;
    auto put_tuple = [&](std::size_t base, const LayerTuple& t) {
        s[base] = static_cast<double>(t.kind_code);
        s[base + 1] = static_cast<double>(t.activation_count);
        s[base + 2] = static_cast<double>(t.param_count);
    };
    if (!fv.layer_tuples.empty()) {
        put_tuple(9, fv.layer_tuples.front());
        put_tuple(12, fv.layer_tuples[fv.layer_tuples.size() / 2]);
        put_tuple(15, fv.layer_tuples.back());
    }
    s[18] = 16.0 * static_cast<double>(fv.total_params) +
            4.0 * static_cast<double>(fv.batch_size) *
                static_cast<double>(fv.total_activations);
    return s;
}

LearnedEstimator train_learned_estimator(const EstimatorDataset& dataset,
                                         std::size_t k) {
    if (dataset.rows.empty()) throw EmptyDataset("dataset has no rows");
    if (k < 1) throw ConfigError("k must be >= 1");

    LearnedEstimator est;
    est.family_ = dataset.family;
    est.bucket_range_ = dataset.bucket_range;
    est.k_ = k;
    est.seed_ = dataset.seed;

    std::vector<std::size_t> order(dataset.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(dataset.seed ^ 0x9e3779b97f4a7c15ull);
    rng.shuffle(order);

    const std::size_t train_n =
        std::max<std::size_t>(1, order.size() * 7 / 10);

    ScalarFeatures lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < train_n; ++i) {
        ScalarFeatures f = scalar_features(dataset.rows[order[i]].features);
        for (std::size_t d = 0; d < kScalarFeatureCount; ++d) {
            lo[d] = std::min(lo[d], f[d]);
            hi[d] = std::max(hi[d], f[d]);
        }
    }
    bool any_varying = false;
    for (std::size_t d = 0; d < kScalarFeatureCount; ++d)
        if (hi[d] > lo[d]) any_varying = true;
    if (!any_varying)
        throw DegenerateFeature("all features have zero variance");
    est.lo_ = lo;
    est.hi_ = hi;

    auto normalize = [&](const ScalarFeatures& f) {
        ScalarFeatures out{};
        for (std::size_t d = 0; d < kScalarFeatureCount; ++d)
            out[d] = hi[d] > lo[d] ? (f[d] - lo[d]) / (hi[d] - lo[d]) : 0.0;
        return out;
    };

    est.points_.reserve(train_n);
    est.labels_.reserve(train_n);
    for (std::size_t i = 0; i < train_n; ++i) {
        const auto& row = dataset.rows[order[i]];
        est.points_.push_back(normalize(scalar_features(row.features)));
        est.labels_.push_back(row.bucket);
    }

    HoldoutReport rep;
    rep.train_size = train_n;
    rep.holdout_size = order.size() - train_n;
    if (rep.holdout_size > 0) {
        std::map<int, std::array<std::size_t, 3>> confusion;  // tp, fp, fn
        std::size_t correct = 0;
        std::size_t under = 0;
        for (std::size_t i = train_n; i < order.size(); ++i) {
            const auto& row = dataset.rows[order[i]];
            int pred = est.predict_scalar(scalar_features(row.features));
            if (pred == row.bucket) {
                ++correct;
                confusion[pred][0]++;
            } else {
                confusion[pred][1]++;
                confusion[row.bucket][2]++;
            }
            Bytes bytes = (static_cast<Bytes>(pred) + 1) * dataset.bucket_range;
            if (bytes < row.mem_bytes) ++under;
        }
        rep.accuracy = static_cast<double>(correct) /
                       static_cast<double>(rep.holdout_size);
        rep.underestimate_rate =
            static_cast<double>(under) / static_cast<double>(rep.holdout_size);
        double f1_sum = 0.0;
        std::size_t classes = 0;
        for (const auto& [label, c] : confusion) {
            const double tp = static_cast<double>(c[0]);
            const double fp = static_cast<double>(c[1]);
            const double fn = static_cast<double>(c[2]);
            if (tp + fn == 0) continue;  // class never appears in gold labels
            const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
            const double rec = tp / (tp + fn);
            f1_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
            ++classes;
        }
        rep.macro_f1 = classes ? f1_sum / static_cast<double>(classes) : 0.0;
    }
    est.holdout_ = rep;
    return est;
}

int LearnedEstimator::predict_scalar(const ScalarFeatures& raw) const {
    ScalarFeatures q{};
    for (std::size_t d = 0; d < kScalarFeatureCount; ++d)
        q[d] = hi_[d] > lo_[d] ? (raw[d] - lo_[d]) / (hi_[d] - lo_[d]) : 0.0;

    // The tensor-byte heuristic dominates the metric; the architectural
    // dims act as tie breakers. Weights are part of the model definition.
    static constexpr double kByteDimWeight = 64.0;

    // (distance, index) pairs; k smallest with index as the deterministic tie
    // break.
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < kScalarFeatureCount; ++d) {
            double diff = points_[i][d] - q[d];
            if (d == kScalarFeatureCount - 1) diff *= kByteDimWeight;
            d2 += diff * diff;
        }
        dist.push_back({d2, i});
    }
    const std::size_t kk = std::min(k_, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                      dist.end());
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < kk; ++i) votes[labels_[dist[i].second]]++;
    int best_label = 0;
    std::size_t best_votes = 0;
    for (const auto& [label, count] : votes) {
        // ties go to the larger bucket: the conservative direction
        if (count > best_votes || (count == best_votes && label > best_label)) {
            best_label = label;
            best_votes = count;
        }
    }
    return best_label;
}

int LearnedEstimator::predict(const FeatureVector& features) const {
    return predict_scalar(scalar_features(features));
}

void LearnedEstimator::save(const std::string& path) const {
    ordered_json j;
    j["schema"] = "carma-knn-estimator/v1";
    j["family"] = std::string(family_name(family_));
    j["bucket_range"] = bucket_range_;
    j["k"] = k_;
    j["seed"] = seed_;
    j["lo"] = lo_;
    j["hi"] = hi_;
    j["labels"] = labels_;
    auto& pts = j["points"] = ordered_json::array();
    for (const auto& p : points_) pts.push_back(p);
    j["holdout"] = {{"accuracy", holdout_.accuracy},
                    {"macro_f1", holdout_.macro_f1},
                    {"train_size", holdout_.train_size},
                    {"holdout_size", holdout_.holdout_size},
                    {"underestimate_rate", holdout_.underestimate_rate}};
    std::ofstream out(path);
    if (!out) throw CarmaError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

LearnedEstimator LearnedEstimator::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CarmaError("cannot open '" + path + "'");
    ordered_json j = ordered_json::parse(in);
    if (j.value("schema", "") != "carma-knn-estimator/v1")
        throw CarmaError("unrecognized estimator snapshot schema");
    LearnedEstimator est;
    est.family_ = family_from_name(j.at("family").get<std::string>());
    est.bucket_range_ = j.at("bucket_range").get<Bytes>();
    est.k_ = j.at("k").get<std::size_t>();
    est.seed_ = j.at("seed").get<std::uint64_t>();
    auto lo = j.at("lo").get<std::vector<double>>();
    auto hi = j.at("hi").get<std::vector<double>>();
    if (lo.size() != kScalarFeatureCount || hi.size() != kScalarFeatureCount)
        throw CarmaError("estimator snapshot has wrong feature width");
    std::copy(lo.begin(), lo.end(), est.lo_.begin());
    std::copy(hi.begin(), hi.end(), est.hi_.begin());
    est.labels_ = j.at("labels").get<std::vector<int>>();
    for (const auto& p : j.at("points")) {
        auto v = p.get<std::vector<double>>();
        if (v.size() != kScalarFeatureCount)
            throw CarmaError("estimator snapshot has wrong feature width");
        ScalarFeatures f{};
        std::copy(v.begin(), v.end(), f.begin());
        est.points_.push_back(f);
    }
    if (est.labels_.size() != est.points_.size())
        throw CarmaError("estimator snapshot labels/points mismatch");
    const auto& h = j.at("holdout");
    est.holdout_.accuracy = h.at("accuracy").get<double>();
    est.holdout_.macro_f1 = h.at("macro_f1").get<double>();
    est.holdout_.train_size = h.at("train_size").get<std::size_t>();
    est.holdout_.holdout_size = h.at("holdout_size").get<std::size_t>();
    est.holdout_.underestimate_rate = h.at("underestimate_rate").get<double>();
    return est;
}

MemoryEstimate estimate_learned(const LearnedEstimator& est,
                                const FeatureVector& features,
                                ModelFamily family) {
    if (family != est.family())
        throw FamilyMismatch("estimator trained for a different family");
    MemoryEstimate out;
    out.bucket = est.predict(features);
    out.bucket_range = est.bucket_range();
    out.bytes = (static_cast<Bytes>(*out.bucket) + 1) * est.bucket_range();
    out.source = EstimateSource::learned;
    return out;
}

}  // namespace carma
