// Serial reference implementations. Kept straight-line so the OpenMP
// versions can be checked against them bit for bit.

#include <algorithm>

#include "specmargin/kernels.hpp"

namespace specmargin::kernels::serial {

Vector margins(const ReluNetwork& net, const LabeledDataset& data) {
    Vector out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = margin(forward(net, data.inputs()[i]), data.labels()[i]);
    }
    return out;
}

std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (margin(forward(net, data.inputs()[i]), data.labels()[i]) <= gamma) ++hits;
    }
    return hits;
}

OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs) {
    OutputChange out;
    for (const auto& x : inputs) {
        const Vector fa = forward(a, x);
        const Vector fb = forward(b, x);
        Vector diff(fa.size());
        for (std::size_t j = 0; j < fa.size(); ++j) diff[j] = fb[j] - fa[j];
        out.max_l2 = std::max(out.max_l2, l2_norm(diff));
        out.max_linf = std::max(out.max_linf, linf_norm(diff));
    }
    return out;
}

Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed) {
    Vector out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = spectral_norm(gaussian_matrix(h, h, sigma, derive_seed(seed, i)));
    }
    return out;
}

}  // namespace specmargin::kernels::serial
