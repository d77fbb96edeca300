#include "specmargin/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specmargin/errors.hpp"
#include "specmargin/kernels.hpp"

namespace specmargin {

ReluNetwork::ReluNetwork(std::vector<Matrix> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidInput("network needs at least one layer");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        if (layers_[i].cols() != layers_[i - 1].rows()) {
            throw InvalidInput("layer " + std::to_string(i) + " has " + std::to_string(layers_[i].cols()) +
                               " columns but layer " + std::to_string(i - 1) + " has " +
                               std::to_string(layers_[i - 1].rows()) + " rows");
        }
    }
}

std::size_t ReluNetwork::width() const noexcept {
    std::size_t h = 0;
    for (const auto& w : layers_) h = std::max({h, w.rows(), w.cols()});
    return h;
}

Perturbation::Perturbation(std::vector<Matrix> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidInput("perturbation needs at least one layer");
}

Perturbation Perturbation::zeros_like(const ReluNetwork& net) {
    std::vector<Matrix> out;
    out.reserve(net.depth());
    for (const auto& w : net.layers()) out.emplace_back(w.rows(), w.cols());
    return Perturbation(std::move(out));
}

Perturbation Perturbation::negated() const {
    std::vector<Matrix> out;
    out.reserve(layers_.size());
    for (const auto& u : layers_) out.push_back(u.scaled(-1.0));
    return Perturbation(std::move(out));
}

bool Perturbation::compatible_with(const ReluNetwork& net) const noexcept {
    if (layers_.size() != net.depth()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (!layers_[i].same_shape(net.layers()[i])) return false;
    }
    return true;
}

LabeledDataset::LabeledDataset(std::vector<Vector> inputs, std::vector<int> labels, int num_classes)
    : inputs_(std::move(inputs)), labels_(std::move(labels)), num_classes_(num_classes), radius_(0.0) {
    if (inputs_.empty()) throw InvalidInput("dataset is empty");
    if (inputs_.size() != labels_.size()) {
        throw InvalidInput("dataset has " + std::to_string(inputs_.size()) + " inputs but " +
                           std::to_string(labels_.size()) + " labels");
    }
    if (num_classes_ < 1) throw InvalidInput("num_classes must be >= 1");
    const std::size_t n = inputs_.front().size();
    if (n == 0) throw InvalidInput("inputs must be non-empty vectors");
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        if (inputs_[i].size() != n) {
            throw InvalidInput("input " + std::to_string(i) + " has length " + std::to_string(inputs_[i].size()) +
                               ", expected " + std::to_string(n));
        }
        for (double x : inputs_[i]) {
            if (!std::isfinite(x)) throw InvalidInput("input " + std::to_string(i) + " has a non-finite entry");
        }
        if (labels_[i] < 0 || labels_[i] >= num_classes_) {
            throw InvalidInput("label " + std::to_string(i) + " = " + std::to_string(labels_[i]) +
                               " outside [0, " + std::to_string(num_classes_) + ")");
        }
        radius_ = std::max(radius_, l2_norm(inputs_[i]));
    }
}

LabeledDataset LabeledDataset::scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidInput("dataset scale factor must be positive");
    std::vector<Vector> out = inputs_;
    for (auto& x : out) {
        for (double& e : x) e *= factor;
    }
    return LabeledDataset(std::move(out), labels_, num_classes_);
}

Vector relu(std::span<const double> v) {
    Vector out(v.begin(), v.end());
    for (double& x : out) x = x > 0.0 ? x : 0.0;
    return out;
}

Vector forward(const ReluNetwork& net, std::span<const double> x) {
    if (x.size() != net.input_dim()) {
        throw InvalidInput("forward: input length " + std::to_string(x.size()) + " does not match network input " +
                           std::to_string(net.input_dim()));
    }
    Vector h = mat_vec(net.layers()[0], x);
    for (std::size_t i = 1; i < net.depth(); ++i) h = mat_vec(net.layers()[i], relu(h));
    return h;
}

std::vector<Vector> layer_outputs(const ReluNetwork& net, std::span<const double> x) {
    if (x.size() != net.input_dim()) {
        throw InvalidInput("layer_outputs: input length " + std::to_string(x.size()) +
                           " does not match network input " + std::to_string(net.input_dim()));
    }
    std::vector<Vector> out;
    out.reserve(net.depth());
    out.push_back(mat_vec(net.layers()[0], x));
    for (std::size_t i = 1; i < net.depth(); ++i) out.push_back(mat_vec(net.layers()[i], relu(out.back())));
    return out;
}

double margin(std::span<const double> scores, int label) {
    if (scores.size() < 2) throw InvalidInput("margin is undefined with fewer than 2 classes");
    if (label < 0 || static_cast<std::size_t>(label) >= scores.size()) {
        throw InvalidInput("margin: label " + std::to_string(label) + " out of range");
    }
    double rival = -INFINITY;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != static_cast<std::size_t>(label)) rival = std::max(rival, scores[j]);
    }
    return scores[static_cast<std::size_t>(label)] - rival;
}

int predicted_label(std::span<const double> scores) {
    if (scores.empty()) throw InvalidInput("predicted_label: empty score vector");
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

void check_compatible(const ReluNetwork& net, const LabeledDataset& data) {
    if (data.input_dim() != net.input_dim()) {
        throw InvalidInput("dataset input dimension " + std::to_string(data.input_dim()) +
                           " does not match network input " + std::to_string(net.input_dim()));
    }
    if (static_cast<std::size_t>(data.num_classes()) > net.output_dim()) {
        throw InvalidInput("dataset has " + std::to_string(data.num_classes()) + " classes but network outputs " +
                           std::to_string(net.output_dim()) + " scores");
    }
}

double margin_loss(const ReluNetwork& net, const LabeledDataset& data, double gamma) {
    if (!(gamma >= 0.0)) throw InvalidInput("margin_loss: gamma must be >= 0");
    check_compatible(net, data);
    const std::size_t hits = kernels::count_margin_at_most(net, data, gamma);
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

Rebalanced rebalance(const ReluNetwork& net) {
    std::vector<double> norms;
    norms.reserve(net.depth());
    double log_sum = 0.0;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const double s = spectral_norm(net.layers()[i]);
        if (s == 0.0) throw InvalidInput("rebalance: layer " + std::to_string(i) + " is zero");
        norms.push_back(s);
        log_sum += std::log(s);
    }
    const double beta = std::exp(log_sum / static_cast<double>(net.depth()));
    std::vector<Matrix> out;
    out.reserve(net.depth());
    for (std::size_t i = 0; i < net.depth(); ++i) out.push_back(net.layers()[i].scaled(beta / norms[i]));
    return {ReluNetwork(std::move(out)), beta};
}

ReluNetwork apply_perturbation(const ReluNetwork& net, const Perturbation& pert) {
    if (!pert.compatible_with(net)) throw InvalidInput("perturbation shape does not match network");
    std::vector<Matrix> out;
    out.reserve(net.depth());
    for (std::size_t i = 0; i < net.depth(); ++i) out.push_back(net.layers()[i].plus(pert.layers()[i]));
    return ReluNetwork(std::move(out));
}

double weight_norm_sq(const ReluNetwork& net) noexcept {
    double acc = 0.0;
    for (const auto& w : net.layers()) {
        for (double x : w.entries()) acc += x * x;
    }
    return acc;
}

}  // namespace specmargin
