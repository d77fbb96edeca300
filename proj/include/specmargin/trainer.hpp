#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "specmargin/network.hpp"

namespace specmargin {

enum class TaskKind { gaussian_blobs, random_labels };
enum class LossKind { cross_entropy, multiclass_hinge };

std::string to_string(TaskKind kind);
std::string to_string(LossKind kind);
TaskKind parse_task_kind(const std::string& s);  // "blobs" | "gaussian_blobs" | "random_labels"
LossKind parse_loss_kind(const std::string& s);  // "cross_entropy" | "hinge" | "multiclass_hinge"

struct TaskSpec {
    TaskKind kind = TaskKind::gaussian_blobs;
    std::size_t n = 2;
    std::size_t k = 2;
    std::size_t m = 500;
    double separation = 6.0;
    double cluster_std = 1.0;
    RngSeed seed{7};
};

struct TrainConfig {
    std::vector<std::size_t> architecture;  // n, h_1, ..., h_{d-1}, k
    double learning_rate = 0.1;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    LossKind loss = LossKind::cross_entropy;
    double init_scale = 1.0;  // multiplies the sqrt(2 / fan_in) He scale
    RngSeed seed{7};
};

/// Cluster centers sit on a circle in the first two coordinates (a line when n = 1)
/// with adjacent centers exactly `separation` apart; inputs are then divided by the
/// largest input norm so that B = 1.
LabeledDataset generate_dataset(const TaskSpec& spec);

/// He-style Gaussian initialization; layer i draws from derive_seed(cfg.seed, i).
ReluNetwork initialize_network(const TrainConfig& cfg);

struct LossGradient {
    double loss = 0.0;
    std::vector<Matrix> grads;  // one per layer, same shapes as the weights
};

/// Loss of one sample and its gradient by backpropagation. ReLU'(0) is taken as 0.
LossGradient loss_and_gradient(const ReluNetwork& net, std::span<const double> x, int label, LossKind loss);

double sample_loss(const ReluNetwork& net, std::span<const double> x, int label, LossKind loss);
double mean_loss(const ReluNetwork& net, const LabeledDataset& data, LossKind loss);

struct TrainResult {
    ReluNetwork net;
    std::vector<double> epoch_loss;  // mean training loss after each epoch
};

/// Mini-batch SGD, single-threaded and deterministic per seed. Returns the final
/// iterate whatever loss it reached; throws TrainingDiverged on a non-finite weight.
TrainResult train_sgd(const LabeledDataset& data, const TrainConfig& cfg);

}  // namespace specmargin
