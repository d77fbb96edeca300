#include <algorithm>
#include <exception>

#include <omp.h>

#include "specmargin/errors.hpp"
#include "specmargin/kernels.hpp"

namespace specmargin::kernels::omp {

namespace {

// Exceptions must not escape an OpenMP region; validate shapes up front.
void require_scorable(const ReluNetwork& net, const LabeledDataset& data) {
    check_compatible(net, data);
    if (net.output_dim() < 2) throw InvalidInput("margin is undefined with fewer than 2 classes");
}

void require_inputs(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs) {
    if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim()) {
        throw InvalidInput("max_output_change: networks have different input/output shapes");
    }
    for (const auto& x : inputs) {
        if (x.size() != a.input_dim()) throw InvalidInput("max_output_change: input length mismatch");
    }
}

}  // namespace

Vector margins(const ReluNetwork& net, const LabeledDataset& data) {
    require_scorable(net, data);
    Vector out(data.size());
    const auto m = static_cast<long long>(data.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < m; ++i) {
        const auto s = static_cast<std::size_t>(i);
        out[s] = margin(forward(net, data.inputs()[s]), data.labels()[s]);
    }
    return out;
}

std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma) {
    require_scorable(net, data);
    long long hits = 0;
    const auto m = static_cast<long long>(data.size());
#pragma omp parallel for schedule(static) reduction(+ : hits)
    for (long long i = 0; i < m; ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (margin(forward(net, data.inputs()[s]), data.labels()[s]) <= gamma) ++hits;
    }
    return static_cast<std::size_t>(hits);
}

OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs) {
    require_inputs(a, b, inputs);
    double max_l2 = 0.0;
    double max_linf = 0.0;
    const auto m = static_cast<long long>(inputs.size());
#pragma omp parallel for schedule(static) reduction(max : max_l2, max_linf)
    for (long long i = 0; i < m; ++i) {
        const auto& x = inputs[static_cast<std::size_t>(i)];
        const Vector fa = forward(a, x);
        const Vector fb = forward(b, x);
        Vector diff(fa.size());
        for (std::size_t j = 0; j < fa.size(); ++j) diff[j] = fb[j] - fa[j];
        max_l2 = std::max(max_l2, l2_norm(diff));
        max_linf = std::max(max_linf, linf_norm(diff));
    }
    return {max_l2, max_linf};
}

Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed) {
    if (h == 0) throw InvalidInput("gaussian_spectral_norms: h must be >= 1");
    Vector out(count);
    std::exception_ptr failure;
    const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 16)
    for (long long i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        try {
            out[s] = spectral_norm(gaussian_matrix(h, h, sigma, derive_seed(seed, s)));
        } catch (...) {
#pragma omp critical(specmargin_kernel_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace specmargin::kernels::omp
