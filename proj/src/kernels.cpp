#include "specmargin/kernels.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

#include "specmargin/errors.hpp"

namespace specmargin {

void configure_threads(int requested) {
    int threads = requested;
    if (threads == 0) {
        if (const char* env = std::getenv("SPECMARGIN_THREADS"); env != nullptr && *env != '\0') {
            try {
                threads = std::stoi(env);
            } catch (const std::exception&) {
                throw InvalidInput(std::string("SPECMARGIN_THREADS is not an integer: ") + env);
            }
        }
    }
    if (threads < 0) throw InvalidInput("thread count must be >= 0");
    if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

namespace kernels {

Vector margins(const ReluNetwork& net, const LabeledDataset& data, Exec exec) {
    return exec == Exec::parallel ? omp::margins(net, data) : serial::margins(net, data);
}

std::size_t count_margin_at_most(const ReluNetwork& net, const LabeledDataset& data, double gamma, Exec exec) {
    return exec == Exec::parallel ? omp::count_margin_at_most(net, data, gamma)
                                  : serial::count_margin_at_most(net, data, gamma);
}

OutputChange max_output_change(const ReluNetwork& a, const ReluNetwork& b, std::span<const Vector> inputs,
                               Exec exec) {
    return exec == Exec::parallel ? omp::max_output_change(a, b, inputs) : serial::max_output_change(a, b, inputs);
}

Vector gaussian_spectral_norms(std::size_t h, double sigma, std::size_t count, RngSeed seed, Exec exec) {
    return exec == Exec::parallel ? omp::gaussian_spectral_norms(h, sigma, count, seed)
                                  : serial::gaussian_spectral_norms(h, sigma, count, seed);
}

}  // namespace kernels
}  // namespace specmargin
