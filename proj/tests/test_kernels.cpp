#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "specmargin/kernels.hpp"

using namespace specmargin;

TEST_SUITE("kernels") {

TEST_CASE("serial and OpenMP margins agree bit for bit") {
    std::mt19937_64 rng(41);
    const ReluNetwork net = oracle::random_net(rng, {6, 12, 12, 4});
    const LabeledDataset data = oracle::random_dataset(rng, 997, 6, 4);
    const Vector s = kernels::serial::margins(net, data);
    const Vector p = kernels::omp::margins(net, data);
    CHECK(s == p);
    CHECK(kernels::margins(net, data, Exec::serial) == s);
    for (std::size_t i = 0; i < data.size(); i += 97) {
        CHECK(s[i] == margin(oracle::forward(net, data.inputs()[i]), data.labels()[i]));
    }
    for (double gamma : {-1.0, 0.0, 0.2, 1.0}) {
        CHECK(kernels::serial::count_margin_at_most(net, data, gamma) ==
              kernels::omp::count_margin_at_most(net, data, gamma));
    }
}

TEST_CASE("serial and OpenMP output change agree") {
    std::mt19937_64 rng(42);
    const ReluNetwork a = oracle::random_net(rng, {5, 9, 3});
    const ReluNetwork b = oracle::random_net(rng, {5, 9, 3});
    std::vector<Vector> xs;
    for (int i = 0; i < 300; ++i) xs.push_back(oracle::random_vector(rng, 5));
    const OutputChange s = kernels::serial::max_output_change(a, b, xs);
    const OutputChange p = kernels::omp::max_output_change(a, b, xs);
    CHECK(s.max_l2 == p.max_l2);
    CHECK(s.max_linf == p.max_linf);
    CHECK(s.max_linf <= s.max_l2);
    const OutputChange same = kernels::serial::max_output_change(a, a, xs);
    CHECK(same.max_l2 == 0.0);
}

TEST_CASE("serial and OpenMP gaussian spectral norms agree") {
    const Vector s = kernels::serial::gaussian_spectral_norms(8, 0.5, 64, RngSeed{3});
    const Vector p = kernels::omp::gaussian_spectral_norms(8, 0.5, 64, RngSeed{3});
    CHECK(s == p);
    for (std::size_t i = 0; i < s.size(); i += 16) {
        const Matrix g = gaussian_matrix(8, 8, 0.5, derive_seed(RngSeed{3}, i));
        CHECK(s[i] == spectral_norm(g));
    }
}

TEST_CASE("for_each_index rethrows from the parallel region") {
    std::vector<int> hits(100, 0);
    for_each_index(100, Exec::parallel, [&](std::size_t i) { hits[i] = 1; });
    CHECK(std::count(hits.begin(), hits.end(), 1) == 100);
    CHECK_THROWS_AS(for_each_index(100, Exec::parallel,
                                   [](std::size_t i) {
                                       if (i == 37) throw std::runtime_error("boom");
                                   }),
                    std::runtime_error);
}

}  // TEST_SUITE
