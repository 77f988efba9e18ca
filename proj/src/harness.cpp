#include "twa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <type_traits>

namespace twa {

namespace fs = std::filesystem;
using nlohmann::json;

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::relu, "relu"}, {Activation::tanh, "tanh"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DataKind, {{DataKind::two_gaussians, "two_gaussians"},
                                        {DataKind::two_moons, "two_moons"},
                                        {DataKind::csv, "csv"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SamplingMode, {{SamplingMode::every_n_epochs, "every_n_epochs"},
                                            {SamplingMode::every_n_steps, "every_n_steps"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SamplingPhase, {{SamplingPhase::head, "head"}, {SamplingPhase::tail, "tail"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Schedule, {{Schedule::constant, "constant"},
                                        {Schedule::scaled_linear, "scaled_linear"},
                                        {Schedule::cosine, "cosine"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DataSource, {{DataSource::train, "train"}, {DataSource::validation, "validation"}})

namespace {

enum Stream : std::uint64_t { kData = 1, kInit = 2, kSgdBatches = 3, kTwaBatches = 4, kSplit = 5 };

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    const T value = j.at(key).get<T>();
    // the enum tables map unknown names to the first entry; reject those instead
    if constexpr (std::is_enum_v<T>)
        if (json(value) != j.at(key)) throw InputError("unknown value " + j.at(key).dump() + " for '" + key + "'");
    out = value;
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null())
        out.reset();
    else
        out = j.at(key).get<T>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ParamVector quantize(const ParamVector& w) { return w.cast<float>().cast<double>(); }

void clear_checkpoint_dir(const fs::path& dir) {
    if (!fs::exists(dir)) return;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (name == "manifest.json" || (name.rfind("ckpt_step", 0) == 0 && e.path().extension() == ".twa1"))
            fs::remove(e.path());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw StorageError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

MlpSpec seeded_model(const ExperimentConfig& config) {
    MlpSpec spec = config.model;
    spec.seed = derive_seed(config.seed, kInit);
    return spec;
}

void ExperimentConfig::validate() const {
    model.validate();
    const double sum = data.train_fraction + data.val_fraction + data.test_fraction;
    if (!(data.train_fraction > 0 && data.val_fraction > 0 && data.test_fraction > 0) || std::abs(sum - 1.0) > 1e-9)
        throw InputError("split fractions must be positive and sum to 1");
    if (sgd.epochs < 1) throw InputError("sgd.epochs must be >= 1");
    if (sgd.batch_size < 1) throw InputError("sgd.batch_size must be >= 1");
    if (!(sgd.lr > 0)) throw InputError("sgd.lr must be positive");
    if (data.kind == DataKind::csv && data.csv_path.empty()) throw InputError("csv data needs data.csv_path");
    if (groups < 1) throw InputError("groups must be >= 1");
    sampling.validate();
    twa.validate();
    if (distributed) distributed->validate();
}

ExperimentConfig ExperimentConfig::desk_benchmark(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.twa.eta0 = 0.1;
    c.twa.scale_factor = 1.0;
    c.twa.schedule = Schedule::scaled_linear;
    c.twa.batch_size = 128;
    // 10 passes over the 70% training split.
    const std::size_t train_m = static_cast<std::size_t>(std::llround(c.data.train_fraction * c.data.m));
    c.twa.steps = 10 * ((train_m + c.twa.batch_size - 1) / c.twa.batch_size);
    return c;
}

void to_json(json& j, const ExperimentConfig& c) {
    j = json{
        {"model", {{"layer_sizes", c.model.layer_sizes}, {"activation", c.model.activation}}},
        {"data",
         {{"kind", c.data.kind},
          {"m", c.data.m},
          {"noise", c.data.noise},
          {"csv_path", c.data.csv_path},
          {"split", {c.data.train_fraction, c.data.val_fraction, c.data.test_fraction}}}},
        {"sgd",
         {{"lr", c.sgd.lr},
          {"momentum", c.sgd.momentum},
          {"weight_decay", c.sgd.weight_decay},
          {"epochs", c.sgd.epochs},
          {"batch_size", c.sgd.batch_size},
          {"lr_decay_epochs", c.sgd.lr_decay_epochs},
          {"lr_decay_factor", c.sgd.lr_decay_factor}}},
        {"sampling",
         {{"mode", c.sampling.mode},
          {"n", c.sampling.n},
          {"phase", c.sampling.phase},
          {"limit", optional_json(c.sampling.limit)},
          {"window_epochs", optional_json(c.sampling.window_epochs)}}},
        {"twa",
         {{"eta0", c.twa.eta0},
          {"lambda", c.twa.lambda},
          {"steps", c.twa.steps},
          {"schedule", c.twa.schedule},
          {"scale_factor", c.twa.scale_factor},
          {"batch_size", c.twa.batch_size},
          {"data_source", c.twa.data_source}}},
        {"groups", c.groups},
        {"lawa_t", c.lawa_t},
        {"distributed", c.distributed ? json{{"k", c.distributed->k}} : json(nullptr)},
        {"output_dir", c.output_dir.string()},
        {"seed", c.seed},
    };
}

void merge_json(const json& j, ExperimentConfig& c) {
    try {
        if (j.contains("model")) {
            const auto& m = j.at("model");
            read_if(m, "layer_sizes", c.model.layer_sizes);
            read_if(m, "activation", c.model.activation);
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            read_if(d, "kind", c.data.kind);
            read_if(d, "m", c.data.m);
            read_if(d, "noise", c.data.noise);
            read_if(d, "csv_path", c.data.csv_path);
            if (d.contains("split")) {
                const auto s = d.at("split").get<std::vector<double>>();
                if (s.size() != 3) throw InputError("data.split needs three fractions");
                c.data.train_fraction = s[0];
                c.data.val_fraction = s[1];
                c.data.test_fraction = s[2];
            }
        }
        if (j.contains("sgd")) {
            const auto& s = j.at("sgd");
            read_if(s, "lr", c.sgd.lr);
            read_if(s, "momentum", c.sgd.momentum);
            read_if(s, "weight_decay", c.sgd.weight_decay);
            read_if(s, "epochs", c.sgd.epochs);
            read_if(s, "batch_size", c.sgd.batch_size);
            read_if(s, "lr_decay_epochs", c.sgd.lr_decay_epochs);
            read_if(s, "lr_decay_factor", c.sgd.lr_decay_factor);
        }
        if (j.contains("sampling")) {
            const auto& s = j.at("sampling");
            read_if(s, "mode", c.sampling.mode);
            read_if(s, "n", c.sampling.n);
            read_if(s, "phase", c.sampling.phase);
            read_optional(s, "limit", c.sampling.limit);
            read_optional(s, "window_epochs", c.sampling.window_epochs);
        }
        if (j.contains("twa")) {
            const auto& t = j.at("twa");
            read_if(t, "eta0", c.twa.eta0);
            read_if(t, "lambda", c.twa.lambda);
            read_if(t, "steps", c.twa.steps);
            read_if(t, "schedule", c.twa.schedule);
            read_if(t, "scale_factor", c.twa.scale_factor);
            read_if(t, "batch_size", c.twa.batch_size);
            read_if(t, "data_source", c.twa.data_source);
        }
        read_if(j, "groups", c.groups);
        read_if(j, "lawa_t", c.lawa_t);
        if (j.contains("distributed")) {
            if (j.at("distributed").is_null()) {
                c.distributed.reset();
            } else {
                DistributedConfig d;
                read_if(j.at("distributed"), "k", d.k);
                c.distributed = d;
            }
        }
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        read_if(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid experiment config: ") + e.what());
    }
}

DataSplits make_splits(const ExperimentConfig& config) {
    config.validate();
    Dataset all;
    switch (config.data.kind) {
    case DataKind::two_gaussians:
        all = make_synthetic(SyntheticKind::two_gaussians, config.data.m, config.data.noise, derive_seed(config.seed, kData));
        break;
    case DataKind::two_moons:
        all = make_synthetic(SyntheticKind::two_moons, config.data.m, config.data.noise, derive_seed(config.seed, kData));
        break;
    case DataKind::csv: all = load_csv(config.data.csv_path); break;
    }
    const std::size_t m = all.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(config.seed, kSplit));
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = static_cast<std::size_t>(std::llround(config.data.train_fraction * static_cast<double>(m)));
    const auto n_val = static_cast<std::size_t>(std::llround(config.data.val_fraction * static_cast<double>(m)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= m)
        throw InputError("dataset of " + std::to_string(m) + " rows is too small for the requested splits");
    const std::span<const std::size_t> idx(order);
    DataSplits s{all.subset(idx.subspan(0, n_train)), all.subset(idx.subspan(n_train, n_val)),
                 all.subset(idx.subspan(n_train + n_val))};
    return s;
}

TrainResult train_sgd(const ExperimentConfig& config, const DataSplits& splits) {
    config.validate();
    const MlpSpec spec = seeded_model(config);
    if (splits.train.size() == 0) throw EmptyInputError("empty training split");

    fs::path manifest;
    if (!config.output_dir.empty()) {
        const fs::path dir = config.output_dir / "checkpoints";
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());
        clear_checkpoint_dir(dir);
        manifest = dir / "manifest.json";
    }

    ParamVector w = init_params(spec);
    ParamVector velocity = ParamVector::Zero(w.size());
    BatchSampler sampler(splits.train.size(), config.sgd.batch_size, derive_seed(config.seed, kSgdBatches));
    const std::size_t steps_per_epoch = sampler.batches_per_pass();

    std::vector<ParamVector> sampled;
    std::vector<CheckpointEntry> entries;
    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.sgd.epochs; ++epoch) {
        double lr = config.sgd.lr;
        for (auto milestone : config.sgd.lr_decay_epochs)
            if (epoch >= milestone) lr *= config.sgd.lr_decay_factor;

        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const auto rows = sampler.next();
            const BatchLoss loss = loss_and_grad(spec, w, splits.train, rows);
            velocity = config.sgd.momentum * velocity + loss.gradient + config.sgd.weight_decay * w;
            w -= lr * velocity;
            ++step;
            if (!w.allFinite()) throw NumericError("SGD diverged at step " + std::to_string(step));
            if (should_sample(config.sampling, epoch, step, steps_per_epoch, sampled.size(), config.sgd.epochs)) {
                CheckpointEntry e{step, epoch, evaluate(spec, w, splits.val), {}};
                const ParamVector q = quantize(w);
                if (!manifest.empty()) save_checkpoint(manifest, q, e);
                sampled.push_back(q);
                entries.push_back(e);
            }
        }
        result.history.push_back({epoch, lr, evaluate(spec, w, splits.train), evaluate(spec, w, splits.test)});
    }
    if (sampled.empty()) throw InputError("sampling policy produced no checkpoints");
    result.checkpoints = manifest.empty() ? CheckpointSet::from_vectors(sampled, entries) : load_set(manifest);
    result.final_weights = std::move(w);
    return result;
}

TrainResult train_sgd(const ExperimentConfig& config) { return train_sgd(config, make_splits(config)); }

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::twa: return "twa";
    case Mode::twa_by_layer: return "twa_by_layer";
    case Mode::swa: return "swa";
    case Mode::lawa: return "lawa";
    case Mode::greedy_soup: return "greedy_soup";
    }
    return "unknown";
}

Mode mode_from_string(const std::string& s) {
    if (s == "twa") return Mode::twa;
    if (s == "twa_by_layer") return Mode::twa_by_layer;
    if (s == "swa") return Mode::swa;
    if (s == "lawa") return Mode::lawa;
    if (s == "greedy_soup" || s == "soup") return Mode::greedy_soup;
    throw InputError("unknown mode '" + s + "'");
}

json MetricsReport::to_json() const {
    return json{{"mode", mode},   {"train_acc", train_acc}, {"val_acc", val_acc},
                {"test_acc", test_acc}, {"gap", gap},       {"n_checkpoints", n_checkpoints},
                {"steps", steps}, {"seed", seed},           {"timing_s", timing_s}};
}

MetricsReport evaluate_report(const std::string& mode, const MlpSpec& spec, const ParamVector& w,
                              const DataSplits& splits) {
    MetricsReport r;
    r.mode = mode;
    r.train_acc = evaluate(spec, w, splits.train);
    r.val_acc = evaluate(spec, w, splits.val);
    r.test_acc = evaluate(spec, w, splits.test);
    r.gap = r.train_acc - r.test_acc;
    r.solution = w;
    return r;
}

MetricsReport run_pipeline(const ExperimentConfig& config, Mode mode, const DataSplits& splits,
                           const CheckpointSet& checkpoints) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const MlpSpec spec = seeded_model(config);
    if (checkpoints.dim() != spec.param_count())
        throw DimensionError("checkpoints have D=" + std::to_string(checkpoints.dim()) + ", model has D=" +
                             std::to_string(spec.param_count()));

    ParamVector w;
    std::size_t steps = 0;
    std::optional<double> residual;
    std::vector<HistoryEntry> history;
    switch (mode) {
    case Mode::swa: w = swa(checkpoints).w; break;
    case Mode::lawa: w = lawa(checkpoints, std::min(config.lawa_t, checkpoints.size())).w; break;
    case Mode::greedy_soup: {
        const Evaluator on_val = [&](const ParamVector& v) { return evaluate(spec, v, splits.val); };
        w = greedy_soup(checkpoints, on_val).w;
        break;
    }
    case Mode::twa:
    case Mode::twa_by_layer: {
        const LayerPartition part = mode == Mode::twa ? LayerPartition::whole(checkpoints.dim())
                                                      : LayerPartition::uniform(checkpoints.dim(), config.groups);
        auto basis = std::make_shared<const SubspaceBasis>(extract(checkpoints, part));
        TwaConfig tc = config.twa;
        tc.seed = derive_seed(config.seed, kTwaBatches);
        TwaResult res = run_twa(basis, spec, splits.train, &splits.val, tc, config.distributed);
        w = std::move(res.w_final);
        steps = tc.steps;
        residual = affine_span_residual(*basis, w);
        history = std::move(res.state.history);
        break;
    }
    }
    MetricsReport r = evaluate_report(to_string(mode), spec, w, splits);
    r.n_checkpoints = checkpoints.size();
    r.steps = steps;
    r.seed = config.seed;
    r.span_residual = residual;
    r.history = std::move(history);
    r.timing_s = seconds_since(start);
    return r;
}

MetricsReport run_pipeline(const ExperimentConfig& config, Mode mode) {
    const DataSplits splits = make_splits(config);
    std::optional<CheckpointSet> set;
    if (!config.output_dir.empty()) {
        const fs::path manifest = config.output_dir / "checkpoints" / "manifest.json";
        if (fs::exists(manifest)) set = load_set(manifest);
    }
    if (!set) set = train_sgd(config, splits).checkpoints;
    MetricsReport r = run_pipeline(config, mode, splits, *set);
    if (!config.output_dir.empty()) {
        write_json(config.output_dir / ("report_" + r.mode + ".json"), r.to_json());
        write_twa1(config.output_dir / ("solution_" + r.mode + ".twa1"), r.solution);
        if (!r.history.empty()) write_history_jsonl(config.output_dir / ("history_" + r.mode + ".jsonl"), r.history);
    }
    return r;
}

void GaussianStudyConfig::validate() const {
    if (dim < 1) throw InputError("study dimension must be >= 1");
    if (n < 2) throw InputError("study needs n >= 2 samples per trial");
    if (trials < 1) throw InputError("study needs at least one trial");
    if (!(covariance_scale > 0.0)) throw InputError("covariance_scale must be positive");
    if (steps < 1) throw InputError("study needs at least one TWA step");
}

json GaussianStudyReport::to_json() const {
    json t = json::array();
    for (const auto& tr : trials) t.push_back({{"twa_error", tr.twa_error}, {"swa_error", tr.swa_error}});
    return json{{"trials", t}, {"fraction_twa_better", fraction_twa_better}};
}

GaussianStudyReport gaussian_study(const GaussianStudyConfig& config) {
    config.validate();
    const auto d = static_cast<Eigen::Index>(config.dim);
    const auto n = static_cast<Eigen::Index>(config.n);
    GaussianStudyReport report;
    std::size_t better = 0;
    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        std::mt19937_64 rng(derive_seed(config.seed, trial));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> spread(0.5, 2.0);

        ParamVector mu(d), variance(d);
        for (Eigen::Index i = 0; i < d; ++i) mu[i] = gauss(rng);
        for (Eigen::Index i = 0; i < d; ++i) variance[i] = config.covariance_scale * spread(rng);
        Matrix<double> samples(d, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < d; ++i) samples(i, j) = mu[i] + std::sqrt(variance[i]) * gauss(rng);

        const ParamVector w_swa = samples.rowwise().mean();
        GaussianTrial result;
        result.swa_error = (w_swa - mu).squaredNorm();
        result.twa_error = result.swa_error;

        std::shared_ptr<const SubspaceBasis> basis;
        try {
            basis = std::make_shared<const SubspaceBasis>(extract<double>(samples, LayerPartition::whole(config.dim)));
        } catch (const InputError&) {
            basis.reset(); // zero spread: the affine span is the single point w_swa
        }
        if (basis) {
            const ParamVector precision = variance.cwiseInverse();
            // Step size 1/L for the curvature P^T Sigma^-1 P + lambda I.
            const Matrix<double>& p = basis->blocks.front();
            const Eigen::MatrixXd hessian = p.transpose() * precision.asDiagonal() * p;
            const double curvature = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hessian, Eigen::EigenvaluesOnly)
                                         .eigenvalues()
                                         .maxCoeff() +
                                     config.lambda;
            TwaConfig tc;
            tc.eta0 = 1.0 / curvature;
            tc.lambda = config.lambda;
            tc.steps = config.steps;
            tc.schedule = Schedule::constant;
            const GradientOracle quadratic = [&](const ParamVector& w, std::size_t) {
                const ParamVector diff = w - mu;
                return BatchLoss{0.5 * diff.dot(precision.cwiseProduct(diff)), precision.cwiseProduct(diff)};
            };
            const TwaResult res = run_twa(basis, quadratic, tc);
            result.twa_error = (res.w_final - mu).squaredNorm();
        }
        if (result.twa_error <= result.swa_error) ++better;
        report.trials.push_back(result);
    }
    report.fraction_twa_better = static_cast<double>(better) / static_cast<double>(config.trials);
    return report;
}

double median(std::vector<double> values) {
    if (values.empty()) throw EmptyInputError("median of nothing");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

json ExtractionBenchmark::to_json() const {
    return json{{"n", n},
                {"D", dim},
                {"extract_s", extract_s},
                {"gram_schmidt_s", gram_schmidt_s},
                {"extract_median_s", extract_median_s},
                {"gram_schmidt_median_s", gram_schmidt_median_s},
                {"ratio", ratio}};
}

ExtractionBenchmark bench_extraction(std::size_t n, std::size_t dim, std::size_t repeats, std::uint64_t seed) {
    if (n < 2 || dim < 1 || repeats < 1) throw InputError("benchmark needs n >= 2, D >= 1, repeats >= 1");
    Matrix<double> weights(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        double* p = weights.data();
        for (Eigen::Index i = 0; i < weights.size(); ++i) p[i] = gauss(rng);
    }
    const LayerPartition whole = LayerPartition::whole(dim);
    ExtractionBenchmark b;
    b.n = n;
    b.dim = dim;
    for (std::size_t r = 0; r < repeats; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        SubspaceBasis basis = extract<double>(weights, whole);
        b.extract_s.push_back(seconds_since(t0));

        t0 = std::chrono::steady_clock::now();
        SubspaceBasis ortho = gram_schmidt(basis);
        b.gram_schmidt_s.push_back(seconds_since(t0));
        if (ortho.total_columns() == 0) throw NumericError("Gram-Schmidt removed every column");
    }
    b.extract_median_s = median(b.extract_s);
    b.gram_schmidt_median_s = median(b.gram_schmidt_s);
    b.ratio = b.gram_schmidt_median_s / std::max(b.extract_median_s, 1e-12);
    return b;
}

} // namespace twa
