#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "specmargin/errors.hpp"
#include "specmargin/trainer.hpp"

using namespace specmargin;

namespace {

TrainConfig small_config(std::vector<std::size_t> arch) {
    TrainConfig cfg;
    cfg.architecture = std::move(arch);
    cfg.epochs = 20;
    return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("parsing task and loss names") {
    CHECK(parse_task_kind("blobs") == TaskKind::gaussian_blobs);
    CHECK(parse_task_kind("random_labels") == TaskKind::random_labels);
    CHECK(parse_loss_kind("hinge") == LossKind::multiclass_hinge);
    CHECK(parse_loss_kind("cross_entropy") == LossKind::cross_entropy);
    CHECK_THROWS_AS(parse_task_kind("mnist"), InvalidInput);
    CHECK_THROWS_AS(parse_loss_kind("mse"), InvalidInput);
}

TEST_CASE("dataset generation is seeded and normalized to unit radius") {
    TaskSpec spec;
    spec.n = 3;
    spec.k = 4;
    spec.m = 120;
    const LabeledDataset a = generate_dataset(spec);
    CHECK(a == generate_dataset(spec));
    CHECK(a.size() == 120);
    CHECK(a.input_dim() == 3);
    CHECK(a.num_classes() == 4);
    CHECK(a.radius() <= 1.0 + 1e-12);
    CHECK(a.radius() >= 1.0 - 1e-12);

    spec.seed = RngSeed{8};
    CHECK_FALSE(a == generate_dataset(spec));

    spec.kind = TaskKind::random_labels;
    const LabeledDataset r = generate_dataset(spec);
    CHECK(r.radius() <= 1.0 + 1e-12);
    CHECK(r == generate_dataset(spec));

    TaskSpec bad;
    bad.k = 1;
    CHECK_THROWS_AS(generate_dataset(bad), InvalidInput);
    bad = TaskSpec{};
    bad.m = 1;
    CHECK_THROWS_AS(generate_dataset(bad), InvalidInput);
    bad = TaskSpec{};
    bad.separation = 0.0;
    CHECK_THROWS_AS(generate_dataset(bad), InvalidInput);
}

TEST_CASE("well separated blobs are perfectly separable by nearest centroid") {
    TaskSpec spec;
    spec.n = 2;
    spec.k = 2;
    spec.m = 200;
    spec.separation = 10.0;
    const LabeledDataset data = generate_dataset(spec);
    // class means from the data itself
    std::vector<Vector> mean(2, Vector(2, 0.0));
    std::vector<double> count(2, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int y = data.labels()[i];
        count[y] += 1;
        for (std::size_t j = 0; j < 2; ++j) mean[y][j] += data.inputs()[i][j];
    }
    for (int c = 0; c < 2; ++c)
        for (double& v : mean[c]) v /= count[c];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double best = INFINITY;
        int pick = -1;
        for (int c = 0; c < 2; ++c) {
            double d2 = 0;
            for (std::size_t j = 0; j < 2; ++j) d2 += std::pow(data.inputs()[i][j] - mean[c][j], 2);
            if (d2 < best) {
                best = d2;
                pick = c;
            }
        }
        correct += pick == data.labels()[i];
    }
    CHECK(correct == data.size());
}

TEST_CASE("initialization is seeded and has the He scale") {
    TrainConfig cfg = small_config({50, 200, 3});
    const ReluNetwork a = initialize_network(cfg);
    CHECK(a == initialize_network(cfg));
    CHECK(a.depth() == 2);
    double sq = 0;
    for (double v : a.layer(0).entries()) sq += v * v;
    const double var = sq / static_cast<double>(a.layer(0).entries().size());
    CHECK(var == doctest::Approx(2.0 / 50.0).epsilon(0.05));

    cfg.architecture = {3};
    CHECK_THROWS_AS(initialize_network(cfg), InvalidInput);
}

TEST_CASE("loss values on hand-checked scores") {
    // identity net: scores equal the input
    const ReluNetwork net({Matrix::identity(2)});
    CHECK(sample_loss(net, Vector{0.0, 0.0}, 0, LossKind::cross_entropy) == doctest::Approx(std::log(2.0)));
    CHECK(sample_loss(net, Vector{2.0, 0.0}, 0, LossKind::multiclass_hinge) == 0.0);
    CHECK(sample_loss(net, Vector{0.5, 0.0}, 0, LossKind::multiclass_hinge) == doctest::Approx(0.5));
    CHECK(sample_loss(net, Vector{0.0, 1.0}, 0, LossKind::multiclass_hinge) == doctest::Approx(2.0));
}

TEST_CASE("backprop gradients match central finite differences") {
    std::mt19937_64 rng(101);
    for (LossKind loss : {LossKind::cross_entropy, LossKind::multiclass_hinge}) {
        for (int trial = 0; trial < 10; ++trial) {
            const ReluNetwork net = oracle::random_net(rng, {3, 5, 4, 3});
            const Vector x = oracle::random_vector(rng, 3);
            const int y = trial % 3;
            const LossGradient lg = loss_and_gradient(net, x, y, loss);
            CHECK(lg.loss == doctest::Approx(sample_loss(net, x, y, loss)).epsilon(1e-12));
            const double step = 1e-5;
            for (std::size_t l = 0; l < net.depth(); ++l) {
                const Matrix& w = net.layer(l);
                for (std::size_t e = 0; e < w.entries().size(); ++e) {
                    auto bumped = [&](double delta) {
                        std::vector<Matrix> layers(net.layers().begin(), net.layers().end());
                        std::vector<double> entries(w.entries().begin(), w.entries().end());
                        entries[e] += delta;
                        layers[l] = Matrix(w.rows(), w.cols(), entries);
                        return ReluNetwork(std::move(layers));
                    };
                    const ReluNetwork plus = bumped(step);
                    const ReluNetwork minus = bumped(-step);
                    // skip coordinates where the step crosses a ReLU or hinge kink
                    bool kink = false;
                    const auto a = layer_outputs(plus, x);
                    const auto b = layer_outputs(minus, x);
                    const auto c = layer_outputs(net, x);
                    for (std::size_t i = 0; i + 1 < c.size() && !kink; ++i)
                        for (std::size_t j = 0; j < c[i].size(); ++j)
                            if ((a[i][j] > 0) != (c[i][j] > 0) || (b[i][j] > 0) != (c[i][j] > 0)) kink = true;
                    const double lp = sample_loss(plus, x, y, loss);
                    const double lm = sample_loss(minus, x, y, loss);
                    if (loss == LossKind::multiclass_hinge && ((lp == 0.0) != (lm == 0.0))) kink = true;
                    if (loss == LossKind::multiclass_hinge &&
                        predicted_label(a.back()) != predicted_label(b.back())) kink = true;
                    if (kink) continue;
                    const double fd = (lp - lm) / (2 * step);
                    const double g = lg.grads[l].entries()[e];
                    CHECK(std::abs(fd - g) <= 1e-4 * std::max(1.0, std::abs(g)));
                }
            }
        }
    }
}

TEST_CASE("training is deterministic and zero epochs returns the initialization") {
    TaskSpec spec;
    spec.m = 100;
    const LabeledDataset data = generate_dataset(spec);
    TrainConfig cfg = small_config({2, 8, 2});
    const TrainResult a = train_sgd(data, cfg);
    const TrainResult b = train_sgd(data, cfg);
    CHECK(a.net == b.net);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.epoch_loss.size() == 20);

    cfg.epochs = 0;
    const TrainResult z = train_sgd(data, cfg);
    CHECK(z.net == initialize_network(cfg));
    CHECK(z.epoch_loss.empty());
}

TEST_CASE("full-batch gradient descent with a small step does not increase the loss") {
    TaskSpec spec;
    spec.m = 64;
    const LabeledDataset data = generate_dataset(spec);
    TrainConfig cfg = small_config({2, 6, 2});
    cfg.batch_size = 64;
    cfg.learning_rate = 0.01;
    cfg.epochs = 30;
    const TrainResult r = train_sgd(data, cfg);
    double previous = mean_loss(initialize_network(cfg), data, cfg.loss);
    for (double l : r.epoch_loss) {
        CHECK(l <= previous + 1e-12);
        previous = l;
    }
}

TEST_CASE("training rejects mismatched shapes and reports divergence") {
    TaskSpec spec;
    spec.m = 50;
    const LabeledDataset data = generate_dataset(spec);
    CHECK_THROWS_AS(train_sgd(data, small_config({3, 4, 2})), InvalidInput);
    TrainConfig cfg = small_config({2, 4, 2});
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_sgd(data, cfg), InvalidInput);
    cfg = small_config({2, 64, 64, 2});
    cfg.learning_rate = 1e308;
    cfg.init_scale = 50.0;
    CHECK_THROWS_AS(train_sgd(data, cfg), TrainingDiverged);
}

TEST_CASE("golden run reaches low training error") {
    TaskSpec spec;  // blobs, n=2, k=2, m=500, seed 7
    const LabeledDataset data = generate_dataset(spec);
    TrainConfig cfg;
    cfg.architecture = {2, 16, 16, 2};
    const TrainResult r = train_sgd(data, cfg);
    CHECK(margin_loss(r.net, data, 0.0) <= 0.05);
}

}  // TEST_SUITE
