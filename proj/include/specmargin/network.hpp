#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "specmargin/linalg.hpp"

namespace specmargin {

/// f(x) = W_d relu(W_{d-1} relu(... relu(W_1 x))). No biases.
class ReluNetwork {
public:
    explicit ReluNetwork(std::vector<Matrix> layers);

    std::span<const Matrix> layers() const noexcept { return layers_; }
    const Matrix& layer(std::size_t i) const { return layers_.at(i); }

    std::size_t depth() const noexcept { return layers_.size(); }
    std::size_t input_dim() const noexcept { return layers_.front().cols(); }
    std::size_t output_dim() const noexcept { return layers_.back().rows(); }
    /// Largest matrix dimension over all layers, input dimension included.
    std::size_t width() const noexcept;

    friend bool operator==(const ReluNetwork&, const ReluNetwork&) = default;

private:
    std::vector<Matrix> layers_;
};

/// Per-layer weight perturbation U_1..U_d.
class Perturbation {
public:
    explicit Perturbation(std::vector<Matrix> layers);

    static Perturbation zeros_like(const ReluNetwork& net);

    std::span<const Matrix> layers() const noexcept { return layers_; }
    std::size_t depth() const noexcept { return layers_.size(); }
    Perturbation negated() const;
    bool compatible_with(const ReluNetwork& net) const noexcept;

private:
    std::vector<Matrix> layers_;
};

class LabeledDataset {
public:
    LabeledDataset(std::vector<Vector> inputs, std::vector<int> labels, int num_classes);

    std::span<const Vector> inputs() const noexcept { return inputs_; }
    std::span<const int> labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return inputs_.size(); }
    std::size_t input_dim() const noexcept { return inputs_.front().size(); }
    int num_classes() const noexcept { return num_classes_; }
    /// max_i |x_i|_2
    double radius() const noexcept { return radius_; }

    /// Every input multiplied by `factor` (> 0); labels kept.
    LabeledDataset scaled(double factor) const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

private:
    std::vector<Vector> inputs_;
    std::vector<int> labels_;
    int num_classes_;
    double radius_;
};

Vector relu(std::span<const double> v);

Vector forward(const ReluNetwork& net, std::span<const double> x);

/// Pre-activation outputs f^1(x)..f^d(x); the last element equals forward(net, x).
std::vector<Vector> layer_outputs(const ReluNetwork& net, std::span<const double> x);

/// scores[y] - max_{j != y} scores[j].
double margin(std::span<const double> scores, int label);

/// argmax with the lowest index winning ties.
int predicted_label(std::span<const double> scores);

/// Throws unless the dataset's input dimension and label range fit the network.
void check_compatible(const ReluNetwork& net, const LabeledDataset& data);

/// Fraction of samples with margin <= gamma. gamma = 0 is the classification error,
/// with a tied top score counted as an error.
double margin_loss(const ReluNetwork& net, const LabeledDataset& data, double gamma);

struct Rebalanced {
    ReluNetwork net;
    double beta;
};

/// Rescales every layer to spectral norm beta = (prod ||W_i||_2)^{1/d}.
/// The computed function is unchanged. Throws on a zero layer.
Rebalanced rebalance(const ReluNetwork& net);

ReluNetwork apply_perturbation(const ReluNetwork& net, const Perturbation& pert);

/// sum_i ||W_i||_F^2
double weight_norm_sq(const ReluNetwork& net) noexcept;

}  // namespace specmargin
