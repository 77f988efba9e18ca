#include "twa/model_zoo.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace twa {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct LayerView {
    RowMajorMap weight; // out x in
    Eigen::Map<const Eigen::VectorXd> bias;
};

std::vector<LayerView> layer_views(const MlpSpec& spec, const ParamVector& w) {
    std::vector<LayerView> views;
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const auto in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
        views.push_back({RowMajorMap(w.data() + off, out, in),
                         Eigen::Map<const Eigen::VectorXd>(w.data() + off + out * in, out)});
        off += static_cast<std::size_t>((in + 1) * out);
    }
    return views;
}

void check_inputs(const MlpSpec& spec, const ParamVector& w, const Dataset& data) {
    spec.validate();
    if (static_cast<std::size_t>(w.size()) != spec.param_count())
        throw DimensionError("parameter vector has length " + std::to_string(w.size()) +
                             ", model expects " + std::to_string(spec.param_count()));
    if (data.dim() != spec.input_dim())
        throw DimensionError("dataset has " + std::to_string(data.dim()) +
                             " features, model expects " + std::to_string(spec.input_dim()));
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::relu) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
}

Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a,
                                      Activation act) {
    if (act == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
    return (1.0 - a.array().square()).matrix();
}

// Pre-activations and activations for every layer; acts[0] is the input batch.
struct Forward {
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::MatrixXd> acts;
};

Forward forward(const MlpSpec& spec, const std::vector<LayerView>& layers, Eigen::MatrixXd input) {
    Forward f;
    f.acts.push_back(std::move(input));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = f.acts.back() * layers[l].weight.transpose();
        z.rowwise() += layers[l].bias.transpose();
        if (!z.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(l));
        const bool last = l + 1 == layers.size();
        Eigen::MatrixXd a = last ? z : activate(z, spec.activation);
        f.pre.push_back(std::move(z));
        f.acts.push_back(std::move(a));
    }
    return f;
}

Eigen::MatrixXd gather_rows(const Dataset& data, std::span<const std::size_t> rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), data.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= data.size()) throw IndexError("batch row " + std::to_string(rows[i]) + " out of range");
        x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(rows[i]));
    }
    return x;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(cell.c_str(), &end);
    return errno == 0 && end == cell.c_str() + cell.size() && std::isfinite(out);
}

bool parse_label(const std::string& cell, int& out) {
    if (cell.empty()) return false;
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(cell.c_str(), &end, 10);
    if (errno != 0 || end != cell.c_str() + cell.size() || v < 0 || v > 1'000'000) return false;
    out = static_cast<int>(v);
    return true;
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2) throw InputError("MLP needs at least an input and an output size");
    for (auto s : layer_sizes)
        if (s == 0) throw InputError("MLP layer sizes must be positive");
}

std::size_t MlpSpec::param_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        d += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return d;
}

LayerPartition MlpSpec::natural_partition() const {
    validate();
    std::vector<std::size_t> b{0};
    for (std::size_t l = 0; l < num_layers(); ++l) {
        b.push_back(b.back() + layer_sizes[l] * layer_sizes[l + 1]);
        b.push_back(b.back() + layer_sizes[l + 1]);
    }
    return LayerPartition(std::move(b));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.name = name;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= size()) throw IndexError("row " + std::to_string(rows[i]) + " out of range");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

Dataset Dataset::concat(const Dataset& other) const {
    if (other.features.cols() != features.cols()) throw DimensionError("cannot concatenate datasets of different width");
    Dataset out;
    out.name = name;
    out.features.resize(features.rows() + other.features.rows(), features.cols());
    out.features << features, other.features;
    out.labels = labels;
    out.labels.insert(out.labels.end(), other.labels.begin(), other.labels.end());
    return out;
}

ParamVector init_params(const MlpSpec& spec) {
    spec.validate();
    ParamVector w = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
    std::mt19937_64 rng(spec.seed);
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < in * out; ++i) w[static_cast<Eigen::Index>(off + i)] = dist(rng);
        off += (in + 1) * out; // biases stay zero
    }
    return w;
}

BatchLoss loss_and_grad(const MlpSpec& spec, const ParamVector& w, const Dataset& data,
                        std::span<const std::size_t> rows) {
    check_inputs(spec, w, data);
    if (rows.empty()) throw InputError("empty batch");
    const auto layers = layer_views(spec, w);
    const Forward f = forward(spec, layers, gather_rows(data, rows));

    const Eigen::MatrixXd& z = f.acts.back();
    const auto batch = static_cast<double>(rows.size());
    Eigen::MatrixXd delta(z.rows(), z.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const int y = data.labels[rows[static_cast<std::size_t>(i)]];
        if (y < 0 || y >= z.cols()) throw InputError("label " + std::to_string(y) + " out of range");
        const double zmax = z.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (z.row(i).array() - zmax).exp().matrix();
        const double sum = e.sum();
        total += zmax + std::log(sum) - z(i, y);
        delta.row(i) = e / sum;
        delta(i, y) -= 1.0;
    }
    delta /= batch;

    BatchLoss out;
    out.value = total / batch;
    out.gradient.resize(w.size());
    std::vector<std::size_t> offsets{0};
    for (std::size_t l = 0; l < spec.num_layers(); ++l)
        offsets.push_back(offsets.back() + (spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1]);

    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto in = static_cast<Eigen::Index>(spec.layer_sizes[l]);
        const auto outw = static_cast<Eigen::Index>(spec.layer_sizes[l + 1]);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
            out.gradient.data() + offsets[l], outw, in);
        gw.noalias() = delta.transpose() * f.acts[l];
        out.gradient.segment(static_cast<Eigen::Index>(offsets[l]) + outw * in, outw) =
            delta.colwise().sum().transpose();
        if (l > 0) {
            const Eigen::MatrixXd back = delta * layers[l].weight;
            delta = back.cwiseProduct(activation_derivative(f.pre[l - 1], f.acts[l], spec.activation));
        }
    }
    if (!std::isfinite(out.value) || !out.gradient.allFinite()) throw NumericError("non-finite loss or gradient");
    return out;
}

BatchLoss loss_and_grad(const MlpSpec& spec, const ParamVector& w, const Dataset& data) {
    std::vector<std::size_t> rows(data.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return loss_and_grad(spec, w, data, rows);
}

Eigen::MatrixXd logits(const MlpSpec& spec, const ParamVector& w, const Dataset& data) {
    check_inputs(spec, w, data);
    const auto layers = layer_views(spec, w);
    return forward(spec, layers, data.features).acts.back();
}

double evaluate(const MlpSpec& spec, const ParamVector& w, const Dataset& data) {
    if (data.size() == 0) throw EmptyInputError("cannot evaluate on an empty dataset");
    const Eigen::MatrixXd z = logits(spec, w, data);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c)
            if (z(i, c) > z(i, best)) best = c;
        if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

Dataset make_synthetic(SyntheticKind kind, std::size_t m, double noise, std::uint64_t seed) {
    if (m < 2) throw InputError("synthetic dataset needs m >= 2");
    if (!(noise >= 0.0)) throw InputError("noise must be nonnegative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<int>(i % 2);
    std::shuffle(labels.begin(), labels.end(), rng);

    Dataset d;
    d.name = kind == SyntheticKind::two_gaussians ? "two_gaussians" : "two_moons";
    d.features.resize(static_cast<Eigen::Index>(m), 2);
    d.labels = labels;
    for (std::size_t i = 0; i < m; ++i) {
        double x = 0.0, y = 0.0;
        if (kind == SyntheticKind::two_gaussians) {
            x = y = labels[i] == 0 ? -0.5 : 0.5;
        } else {
            const double t = angle(rng);
            x = labels[i] == 0 ? std::cos(t) : 1.0 - std::cos(t);
            y = labels[i] == 0 ? std::sin(t) : 0.5 - std::sin(t);
        }
        const double nx = gauss(rng), ny = gauss(rng);
        d.features(static_cast<Eigen::Index>(i), 0) = x + noise * nx;
        d.features(static_cast<Eigen::Index>(i), 1) = y + noise * ny;
    }
    return d;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StorageError("cannot open " + path.string());

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t width = 0;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_cells(line);
        double probe = 0.0;
        if (first) {
            first = false;
            if (!parse_double(cells.front(), probe)) continue; // header
        }
        if (cells.size() < 2) throw ParseError(lineno, "expected at least one feature and a label");
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw ParseError(lineno, "expected " + std::to_string(width) + " columns, got " +
                                         std::to_string(cells.size()));
        std::vector<double> feats(cells.size() - 1);
        for (std::size_t c = 0; c + 1 < cells.size(); ++c)
            if (!parse_double(cells[c], feats[c]))
                throw ParseError(lineno, "malformed number '" + cells[c] + "'");
        int label = 0;
        if (!parse_label(cells.back(), label))
            throw ParseError(lineno, "malformed label '" + cells.back() + "'");
        rows.push_back(std::move(feats));
        labels.push_back(label);
    }
    if (rows.empty()) throw EmptyInputError(path.string() + " contains no data rows");

    Dataset d;
    d.name = path.stem().string();
    d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c + 1 < width; ++c)
            d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    d.labels = std::move(labels);
    return d;
}

} // namespace twa
