#include "specmargin/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "specmargin/errors.hpp"

namespace specmargin {

std::string to_string(TaskKind kind) {
    return kind == TaskKind::gaussian_blobs ? "gaussian_blobs" : "random_labels";
}

std::string to_string(LossKind kind) {
    return kind == LossKind::cross_entropy ? "cross_entropy" : "multiclass_hinge";
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "blobs" || s == "gaussian_blobs") return TaskKind::gaussian_blobs;
    if (s == "random_labels" || s == "random") return TaskKind::random_labels;
    throw InvalidInput("unknown task kind '" + s + "' (expected blobs or random_labels)");
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
    if (s == "multiclass_hinge" || s == "hinge") return LossKind::multiclass_hinge;
    throw InvalidInput("unknown loss '" + s + "' (expected cross_entropy or hinge)");
}

LabeledDataset generate_dataset(const TaskSpec& spec) {
    if (spec.n < 1) throw InvalidInput("task: n must be >= 1");
    if (spec.k < 2) throw InvalidInput("task: k must be >= 2");
    if (spec.m < spec.k) throw InvalidInput("task: need m >= k so every class is populated");
    if (!(spec.separation > 0.0) || !std::isfinite(spec.separation)) {
        throw InvalidInput("task: separation must be positive");
    }
    if (!(spec.cluster_std >= 0.0)) throw InvalidInput("task: cluster_std must be >= 0");

    std::vector<Vector> centers(spec.k, Vector(spec.n, 0.0));
    for (std::size_t c = 0; c < spec.k; ++c) {
        if (spec.n == 1) {
            centers[c][0] = (static_cast<double>(c) - 0.5 * static_cast<double>(spec.k - 1)) * spec.separation;
        } else {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(spec.k);
            const double radius = spec.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(spec.k)));
            centers[c][0] = radius * std::cos(angle);
            centers[c][1] = radius * std::sin(angle);
        }
    }

    std::mt19937_64 rng(derive_seed(spec.seed, 0).value);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<Vector> inputs(spec.m, Vector(spec.n));
    std::vector<int> labels(spec.m);
    for (std::size_t i = 0; i < spec.m; ++i) {
        const std::size_t c = i % spec.k;
        labels[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < spec.n; ++j) inputs[i][j] = centers[c][j] + spec.cluster_std * noise(rng);
    }

    double radius = 0.0;
    for (const auto& x : inputs) radius = std::max(radius, l2_norm(x));
    if (radius > 0.0) {
        for (auto& x : inputs) {
            for (double& e : x) e /= radius;
        }
    }

    if (spec.kind == TaskKind::random_labels) {
        std::mt19937_64 label_rng(derive_seed(spec.seed, 1).value);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.k) - 1);
        for (int& y : labels) y = pick(label_rng);
    }
    return LabeledDataset(std::move(inputs), std::move(labels), static_cast<int>(spec.k));
}

ReluNetwork initialize_network(const TrainConfig& cfg) {
    if (cfg.architecture.size() < 2) throw InvalidInput("architecture needs at least input and output sizes");
    for (std::size_t s : cfg.architecture) {
        if (s == 0) throw InvalidInput("architecture sizes must be positive");
    }
    if (!(cfg.init_scale >= 0.0)) throw InvalidInput("init_scale must be >= 0");
    std::vector<Matrix> layers;
    for (std::size_t i = 0; i + 1 < cfg.architecture.size(); ++i) {
        const std::size_t fan_in = cfg.architecture[i];
        const double sigma = cfg.init_scale * std::sqrt(2.0 / static_cast<double>(fan_in));
        layers.push_back(gaussian_matrix(cfg.architecture[i + 1], fan_in, sigma, derive_seed(cfg.seed, i)));
    }
    return ReluNetwork(std::move(layers));
}

namespace {

// dLoss/dScores for one sample; returns the loss value.
double output_gradient(std::span<const double> scores, int label, LossKind loss, Vector& grad) {
    const auto y = static_cast<std::size_t>(label);
    grad.assign(scores.size(), 0.0);
    if (loss == LossKind::cross_entropy) {
        const double top = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double s : scores) z += std::exp(s - top);
        for (std::size_t j = 0; j < scores.size(); ++j) grad[j] = std::exp(scores[j] - top) / z;
        grad[y] -= 1.0;
        return -(scores[y] - top - std::log(z));
    }
    std::size_t rival = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != y && scores[j] > scores[rival]) rival = j;
    }
    const double hinge = 1.0 - (scores[y] - scores[rival]);
    if (hinge <= 0.0) return 0.0;
    grad[y] = -1.0;
    grad[rival] = 1.0;
    return hinge;
}

void check_sample(const ReluNetwork& net, std::span<const double> x, int label) {
    if (x.size() != net.input_dim()) throw InvalidInput("sample length does not match network input");
    if (net.output_dim() < 2) throw InvalidInput("training needs at least 2 output classes");
    if (label < 0 || static_cast<std::size_t>(label) >= net.output_dim()) {
        throw InvalidInput("label out of range for network outputs");
    }
}

// Accumulates the gradient of one sample into `grads` (flat per-layer buffers).
double accumulate_gradient(const ReluNetwork& net, std::span<const double> x, int label, LossKind loss,
                           std::vector<std::vector<double>>& grads) {
    const std::size_t d = net.depth();
    std::vector<Vector> pre(d);     // z_i
    std::vector<Vector> post(d);    // a_{i-1} fed into layer i
    post[0].assign(x.begin(), x.end());
    pre[0] = mat_vec(net.layers()[0], x);
    for (std::size_t i = 1; i < d; ++i) {
        post[i] = relu(pre[i - 1]);
        pre[i] = mat_vec(net.layers()[i], post[i]);
    }

    Vector g;
    const double value = output_gradient(pre[d - 1], label, loss, g);
    for (std::size_t i = d; i-- > 0;) {
        const Matrix& w = net.layers()[i];
        auto& gw = grads[i];
        for (std::size_t r = 0; r < w.rows(); ++r) {
            if (g[r] == 0.0) continue;
            for (std::size_t c = 0; c < w.cols(); ++c) gw[r * w.cols() + c] += g[r] * post[i][c];
        }
        if (i == 0) break;
        Vector back = transpose_mat_vec(w, g);
        for (std::size_t c = 0; c < back.size(); ++c) {
            if (!(pre[i - 1][c] > 0.0)) back[c] = 0.0;
        }
        g = std::move(back);
    }
    return value;
}

std::vector<std::vector<double>> zero_buffers(const ReluNetwork& net) {
    std::vector<std::vector<double>> out;
    out.reserve(net.depth());
    for (const auto& w : net.layers()) out.emplace_back(w.entries().size(), 0.0);
    return out;
}

}  // namespace

LossGradient loss_and_gradient(const ReluNetwork& net, std::span<const double> x, int label, LossKind loss) {
    check_sample(net, x, label);
    auto buffers = zero_buffers(net);
    LossGradient out;
    out.loss = accumulate_gradient(net, x, label, loss, buffers);
    for (std::size_t i = 0; i < net.depth(); ++i) {
        out.grads.emplace_back(net.layers()[i].rows(), net.layers()[i].cols(), std::move(buffers[i]));
    }
    return out;
}

double sample_loss(const ReluNetwork& net, std::span<const double> x, int label, LossKind loss) {
    check_sample(net, x, label);
    Vector scratch;
    return output_gradient(forward(net, x), label, loss, scratch);
}

double mean_loss(const ReluNetwork& net, const LabeledDataset& data, LossKind loss) {
    check_compatible(net, data);
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) acc += sample_loss(net, data.inputs()[i], data.labels()[i], loss);
    return acc / static_cast<double>(data.size());
}

TrainResult train_sgd(const LabeledDataset& data, const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
    if (cfg.batch_size == 0) throw InvalidInput("batch size must be positive");
    ReluNetwork net = initialize_network(cfg);
    check_compatible(net, data);
    if (net.output_dim() != static_cast<std::size_t>(data.num_classes())) {
        throw InvalidInput("architecture output size " + std::to_string(net.output_dim()) +
                           " does not match dataset classes " + std::to_string(data.num_classes()));
    }

    std::vector<std::vector<double>> weights;
    for (const auto& w : net.layers()) weights.emplace_back(w.entries().begin(), w.entries().end());
    auto rebuild = [&] {
        std::vector<Matrix> layers;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            layers.emplace_back(net.layers()[i].rows(), net.layers()[i].cols(), weights[i]);
        }
        return ReluNetwork(std::move(layers));
    };

    std::mt19937_64 rng(derive_seed(cfg.seed, 1'000'003).value);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result{net, {}};
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            auto grads = zero_buffers(net);
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t s = order[b];
                accumulate_gradient(net, data.inputs()[s], data.labels()[s], cfg.loss, grads);
            }
            const double step = cfg.learning_rate / static_cast<double>(stop - start);
            for (std::size_t i = 0; i < weights.size(); ++i) {
                for (std::size_t j = 0; j < weights[i].size(); ++j) weights[i][j] -= step * grads[i][j];
            }
            for (const auto& layer : weights) {
                for (double x : layer) {
                    if (!std::isfinite(x)) {
                        throw TrainingDiverged("non-finite weight at epoch " + std::to_string(epoch) +
                                               "; lower the learning rate (currently " +
                                               std::to_string(cfg.learning_rate) + ")");
                    }
                }
            }
            net = rebuild();
        }
        result.epoch_loss.push_back(mean_loss(net, data, cfg.loss));
    }
    result.net = net;
    return result;
}

}  // namespace specmargin
