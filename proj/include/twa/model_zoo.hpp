#pragma once

// Desk-scale differentiable models: a fully connected classifier with manual
// backprop, mean cross-entropy, accuracy, and the small datasets the
// experiments run on.

#include "twa/param_space.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace twa {

enum class Activation { relu, tanh };

/// Fully connected network. Parameters are laid out layer by layer as the
/// weight matrix (out x in, row-major) followed by the bias vector.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t param_count() const;

    /// One group per weight matrix and one per bias vector.
    LayerPartition natural_partition() const;
};

struct Dataset {
    Matrix<double> features; // m x d_in
    std::vector<int> labels;
    std::string name;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

    Dataset subset(std::span<const std::size_t> rows) const;
    /// Concatenates `other` below this one.
    Dataset concat(const Dataset& other) const;
};

struct BatchLoss {
    double value = 0.0;
    ParamVector gradient;
};

ParamVector init_params(const MlpSpec& spec);

/// Mean cross-entropy over `rows` of `data` and its exact gradient.
BatchLoss loss_and_grad(const MlpSpec& spec, const ParamVector& w, const Dataset& data,
                        std::span<const std::size_t> rows);
BatchLoss loss_and_grad(const MlpSpec& spec, const ParamVector& w, const Dataset& data);

/// Raw network outputs, one row per sample.
Eigen::MatrixXd logits(const MlpSpec& spec, const ParamVector& w, const Dataset& data);

/// Fraction of samples whose argmax logit (ties to the lowest class) equals the label.
double evaluate(const MlpSpec& spec, const ParamVector& w, const Dataset& data);

enum class SyntheticKind { two_gaussians, two_moons };

/// Balanced binary dataset. two_gaussians puts the class means at
/// (-0.5, -0.5) and (0.5, 0.5) with isotropic noise of standard deviation `noise`.
Dataset make_synthetic(SyntheticKind kind, std::size_t m, double noise, std::uint64_t seed);

/// Rows `f1,...,fd,label`; an optional header is detected by a non-numeric first cell.
Dataset load_csv(const std::filesystem::path& path);

} // namespace twa
