#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "specmargin/errors.hpp"
#include "specmargin/pacbayes.hpp"

using namespace specmargin;

namespace {

// Perturbation with ||U_i||_2 = alpha ||W_i||_2 / d, direction from a Gaussian draw.
Perturbation scaled_perturbation(std::mt19937_64& rng, const ReluNetwork& net, double alpha) {
    std::vector<Matrix> us;
    const double d = static_cast<double>(net.depth());
    for (const auto& w : net.layers()) {
        const Matrix g = oracle::random_matrix(rng, w.rows(), w.cols());
        us.push_back(g.scaled(alpha * oracle::spectral_norm(w) / d / oracle::spectral_norm(g)));
    }
    return Perturbation(std::move(us));
}

}  // namespace

TEST_SUITE("pacbayes") {

TEST_CASE("lemma2 bound closed form") {
    const ReluNetwork net({Matrix::identity(2), Matrix::identity(2)});
    const Perturbation half({Matrix::identity(2).scaled(0.25), Matrix::identity(2).scaled(0.25)});
    const Lemma2Bound b = lemma2_bound(net, half, 1.0);
    CHECK(b.value == doctest::Approx(1.3591409142295225).epsilon(1e-12));
    CHECK(b.all_admissible());
    CHECK(lemma2_bound(net, half, 3.0).value == doctest::Approx(3.0 * b.value).epsilon(1e-12));
    CHECK(lemma2_bound(net, Perturbation::zeros_like(net), 1.0).value == 0.0);

    const Perturbation big({Matrix::identity(2).scaled(0.75), Matrix::identity(2)});
    const Lemma2Bound flagged = lemma2_bound(net, big, 1.0);
    CHECK_FALSE(flagged.all_admissible());
    CHECK(flagged.admissible == std::vector<bool>{false, false});
    CHECK(flagged.value > 0.0);

    CHECK_THROWS_AS(lemma2_bound(ReluNetwork({Matrix(2, 2), Matrix::identity(2)}), half, 1.0), InvalidInput);
}

TEST_CASE("lemma2 check on zero and single-layer perturbations") {
    std::mt19937_64 rng(61);
    const LabeledDataset data = oracle::random_dataset(rng, 30, 4, 3);
    const ReluNetwork net = oracle::random_net(rng, {4, 6, 3});
    const PerturbationTrial zero = lemma2_check(net, Perturbation::zeros_like(net), data);
    CHECK(zero.observed == 0.0);
    CHECK(zero.holds);

    const ReluNetwork one = oracle::random_net(rng, {4, 3});
    const Perturbation p = scaled_perturbation(rng, one, 0.9);
    const PerturbationTrial t = lemma2_check(one, p, data);
    // d = 1: the change is exactly U_1 x
    double want = 0.0;
    for (const auto& x : data.inputs()) want = std::max(want, l2_norm(mat_vec(p.layers()[0], x)));
    CHECK(t.observed == doctest::Approx(want).epsilon(1e-12));
    CHECK(t.observed <= oracle::spectral_norm(p.layers()[0]) * data.radius() * (1 + 1e-9));
    CHECK(t.holds);
}

TEST_CASE("lemma2 and the recursion hold on random admissible trials") {
    std::mt19937_64 rng(62);
    std::uniform_int_distribution<std::size_t> depth(1, 4);
    std::uniform_int_distribution<std::size_t> width(2, 12);
    std::uniform_real_distribution<double> alpha(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = depth(rng);
        std::vector<std::size_t> sizes;
        for (std::size_t i = 0; i <= d; ++i) sizes.push_back(width(rng));
        const ReluNetwork net = oracle::random_net(rng, sizes, 1.7);
        const Perturbation p = scaled_perturbation(rng, net, alpha(rng));
        std::vector<Vector> xs;
        for (int i = 0; i < 10; ++i) xs.push_back(oracle::random_vector(rng, sizes[0]));
        const PerturbationAnalysis a(net, p);
        REQUIRE(a.admissible());
        const PerturbationTrial t = a.check(xs, Exec::serial);
        CHECK(t.holds);
        CHECK(t.observed_linf <= t.observed);
        for (const auto& x : xs) {
            const auto steps = a.recursion(x);
            REQUIRE(steps.size() == d);
            for (const auto& s : steps) {
                CHECK(s.step_holds);
                CHECK(s.closed_form_holds);
                CHECK(s.delta <= s.closed_form_rhs + kInequalitySlack);
            }
            CHECK(steps.back().delta <= a.lemma2_bound(l2_norm(x)).value + kInequalitySlack);
        }
    }
}

TEST_CASE("recursion with a zero perturbation") {
    std::mt19937_64 rng(63);
    const ReluNetwork net = oracle::random_net(rng, {3, 5, 5, 2});
    for (const auto& s : recursion_check(net, Perturbation::zeros_like(net), oracle::random_vector(rng, 3))) {
        CHECK(s.delta == 0.0);
        CHECK(s.step_holds);
        CHECK(s.closed_form_holds);
    }
}

TEST_CASE("(1 + 1/d)^d stays below e") {
    for (std::size_t d = 1; d <= 1000000; ++d) {
        const double v = std::pow(1.0 + 1.0 / static_cast<double>(d), static_cast<double>(d));
        if (!(v <= std::numbers::e)) {
            FAIL_CHECK("exceeded e at d = " << d);
            break;
        }
    }
}

TEST_CASE("sample_perturbation") {
    std::mt19937_64 rng(64);
    const ReluNetwork net = oracle::random_net(rng, {4, 8, 8, 3});
    const auto zero = sample_perturbation(net, 0.0, RngSeed{1}, PerturbationMode::raw);
    for (const auto& u : zero.pert.layers()) CHECK(u.is_zero());

    const auto a = sample_perturbation(net, 0.3, RngSeed{5}, PerturbationMode::raw);
    const auto b = sample_perturbation(net, 0.3, RngSeed{5}, PerturbationMode::raw);
    for (std::size_t i = 0; i < net.depth(); ++i) {
        CHECK(a.pert.layers()[i] == b.pert.layers()[i]);
        CHECK(a.pert.layers()[i] == gaussian_matrix(net.layer(i).rows(), net.layer(i).cols(), 0.3,
                                                    derive_seed(RngSeed{5}, i)));
    }

    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto c = sample_perturbation(net, 5.0, RngSeed{s}, PerturbationMode::clipped);
        const PerturbationAnalysis analysis(net, c.pert);
        CHECK(analysis.admissible());
        for (bool r : c.rescaled) CHECK(r);  // sigma 5 always exceeds the limit
    }
    CHECK_THROWS_AS(sample_perturbation(net, -1.0, RngSeed{1}, PerturbationMode::raw), InvalidInput);
}

TEST_CASE("raw perturbations at the proof's sigma are admissible at least half the time") {
    std::mt19937_64 rng(65);
    const ReluNetwork net = rebalance(oracle::random_net(rng, {6, 16, 16, 3})).net;
    const double beta = spectral_norm(net.layer(0));
    const double sigma = theorem_sigma(1.0, 1.0, net.depth(), net.width(), beta);
    std::size_t ok = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto p = sample_perturbation(net, sigma, RngSeed{s}, PerturbationMode::raw);
        ok += PerturbationAnalysis(net, p.pert).admissible();
    }
    CHECK(ok >= 500);
}

TEST_CASE("tail bound values and the check") {
    const double t = 2.0;
    const std::vector<double> grid{t};
    const auto pts = spectral_tail_check(2, 1.0, grid, 1000, RngSeed{3});
    CHECK(pts[0].bound == doctest::Approx(1.4715177646857693).epsilon(1e-12));  // 4 e^{-1}
    CHECK(pts[0].within);

    // far tail: bound below 1/trials, no exceedances
    const auto far = spectral_tail_check(4, 0.5, std::vector<double>{20.0}, 2000, RngSeed{4});
    CHECK(far[0].bound < 1.0 / 2000.0);
    CHECK(far[0].frequency == 0.0);

    const Vector g = default_tail_grid(16, 0.1);
    CHECK(g.size() == 10);
    CHECK(g.front() == doctest::Approx(0.4));
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);

    const auto serial = spectral_tail_check(4, 1.0, default_tail_grid(4, 1.0), 500, RngSeed{9}, Exec::serial);
    const auto parallel = spectral_tail_check(4, 1.0, default_tail_grid(4, 1.0), 500, RngSeed{9}, Exec::parallel);
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].frequency == parallel[i].frequency);
        CHECK(serial[i].within);
    }
    CHECK_THROWS_AS(spectral_tail_check(4, 1.0, grid, 99, RngSeed{1}), InvalidInput);
}

TEST_CASE("theorem sigma and KL") {
    // hand evaluation: 1 / (84 sqrt(4 ln 32))
    CHECK(theorem_sigma(1, 1, 2, 4, 1) == doctest::Approx(0.0031973706611247528).epsilon(1e-12));
    CHECK(theorem_sigma(2, 1, 2, 4, 1) == doctest::Approx(2 * theorem_sigma(1, 1, 2, 4, 1)).epsilon(1e-15));
    CHECK(theorem_sigma(1, 1, 1, 4, 7.0) == theorem_sigma(1, 1, 1, 4, 1.0));  // d = 1 drops beta_tilde
    CHECK_THROWS_AS(theorem_sigma(0, 1, 2, 4, 1), InvalidInput);
    CHECK_THROWS_AS(theorem_sigma(1, 1, 2, 4, 0), InvalidInput);

    const ReluNetwork w2({Matrix::from_rows({{1.0, 1.0}})});
    CHECK(kl_gaussian(w2, 1.0) == 1.0);
    CHECK(kl_gaussian(ReluNetwork({Matrix(2, 2)}), 0.5) == 0.0);
    CHECK(kl_gaussian(w2, 0.5) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK_THROWS_AS(kl_gaussian(w2, 0.0), InvalidInput);
}

TEST_CASE("mc_pacbayes at sigma zero") {
    std::mt19937_64 rng(66);
    const ReluNetwork net = oracle::random_net(rng, {3, 6, 2});
    const LabeledDataset data = oracle::random_dataset(rng, 50, 3, 2);
    const PacBayesEstimate e = mc_pacbayes(net, data, 0.4, 0.0, 20, RngSeed{1}, 0.05);
    CHECK(e.survival == 1.0);
    CHECK(e.mean_perturbed_loss == doctest::Approx(margin_loss(net, data, 0.2)).epsilon(1e-14));
    for (const auto& t : e.per_trial) CHECK(t.perturbed_loss_half_gamma == margin_loss(net, data, 0.2));
    CHECK_FALSE(e.kl.has_value());
    CHECK_FALSE(e.bound.has_value());
    CHECK(e.precondition_met);
}

TEST_CASE("mc_pacbayes invariants and determinism") {
    std::mt19937_64 rng(67);
    const ReluNetwork net = oracle::random_net(rng, {3, 8, 3}, 2.0);
    const LabeledDataset data = oracle::random_dataset(rng, 80, 3, 3);
    const Vector margins = kernels::margins(net, data, Exec::serial);
    const double gamma = 0.5;
    const PacBayesEstimate e = mc_pacbayes(net, data, gamma, 0.02, 200, RngSeed{2}, 0.05, Exec::parallel);
    const PacBayesEstimate s = mc_pacbayes(net, data, gamma, 0.02, 200, RngSeed{2}, 0.05, Exec::serial);
    CHECK(e.survived == s.survived);
    CHECK(e.mean_perturbed_loss == s.mean_perturbed_loss);
    for (std::size_t i = 0; i < e.per_trial.size(); ++i) CHECK(e.per_trial[i].max_change_l2 == s.per_trial[i].max_change_l2);

    CHECK(e.survival >= 0.0);
    CHECK(e.survival <= 1.0);
    REQUIRE(e.kl.has_value());
    CHECK(*e.kl >= 0.0);
    CHECK(*e.kl == doctest::Approx(weight_norm_sq(net) / (2 * 0.02 * 0.02)));
    const double md = 80.0;
    CHECK(*e.bound == doctest::Approx(e.empirical_loss_gamma + 4 * std::sqrt((*e.kl + std::log(6 * md / 0.05)) / (md - 1))));

    // margin shift: a surviving trial moves each margin by less than gamma/2
    for (const auto& t : e.per_trial) {
        CHECK(t.max_change_linf <= t.max_change_l2);
        CHECK(t.perturbed_loss_half_gamma <= 1.0);
        if (t.survived) CHECK(e.empirical_error <= t.perturbed_loss_half_gamma);
    }
    CHECK(e.empirical_error <= e.mean_perturbed_loss + (1.0 - e.survival) + 1e-12);
    (void)margins;

    CHECK_THROWS_AS(mc_pacbayes(net, data, 0.0, 0.1, 10, RngSeed{1}, 0.05), InvalidInput);
    CHECK_THROWS_AS(mc_pacbayes(net, data, 0.5, 0.1, 0, RngSeed{1}, 0.05), InvalidInput);
}

TEST_CASE("lemma2_trials summary") {
    std::mt19937_64 rng(68);
    const ReluNetwork net = oracle::random_net(rng, {3, 8, 8, 2});
    const LabeledDataset data = oracle::random_dataset(rng, 25, 3, 2);
    const Lemma2Summary a = lemma2_trials(net, data, 0.5, 40, RngSeed{3}, Exec::parallel);
    const Lemma2Summary b = lemma2_trials(net, data, 0.5, 40, RngSeed{3}, Exec::serial);
    CHECK(a.clean());
    CHECK(a.clipped == b.clipped);
    CHECK(a.clipped > 0);
    CHECK(a.max_observed_to_bound == b.max_observed_to_bound);
    CHECK(a.max_observed_to_bound <= 1.0);
}

}  // TEST_SUITE
