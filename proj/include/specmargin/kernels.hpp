#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation and a
// plain serial reference; both must return bit-identical results.

#include <cstddef>
#include <exception>
#include <span>

#include "specmargin/network.hpp"

namespace specmargin {

enum class Exec { serial, parallel };

/// Sets the OpenMP team size (0 leaves the runtime default). Falls back to the
/// SPECMARGIN_THREADS environment variable when `requested` is 0.
void configure_threads(int requested);
int max_threads();

struct OutputChange {
    double max_l2 = 0.0;
    double max_linf = 0.0;
};

namespace kernels {

/// Per-sample margins of `net` on `data`, in dataset order.
Vector margins(const ReluNetwork& net, const LabeledDataset& data, Exec exec = Exec::parallel);

/// Number of samples with margin <= gamma.
std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma,
                                 Exec exec = Exec::parallel);

/// max over inputs of |f_b(x) - f_a(x)| in l2 and l-infinity.
OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs,
                               Exec exec = Exec::parallel);

/// Spectral norms of `count` seeded h x h N(0, sigma^2) matrices; sample i uses derive_seed(seed, i).
Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed,
                               Exec exec = Exec::parallel);

namespace serial {
Vector margins(const ReluNetwork& net, const LabeledDataset& data);
std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma);
OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs);
Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed);
}  // namespace serial

namespace omp {
Vector margins(const ReluNetwork& net, const LabeledDataset& data);
std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma);
OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs);
Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed);
}  // namespace omp

}  // namespace kernels

/// Runs body(i) for i in [0, n). Parallel mode uses a dynamic OpenMP schedule, so
/// bodies must write only to slot i of caller-owned storage. The first exception
/// thrown by any body is rethrown after the loop.
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
    const auto count = static_cast<long long>(n);
    if (exec == Exec::parallel) {
        std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
        for (long long i = 0; i < count; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(specmargin_for_each_failure)
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
    } else {
        for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    }
}

}  // namespace specmargin
