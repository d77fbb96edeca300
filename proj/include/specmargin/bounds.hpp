#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "specmargin/network.hpp"

namespace specmargin {

struct LayerNorms {
    double spectral = 0.0;
    double frobenius = 0.0;
    double l1 = 0.0;
    double l21 = 0.0;
};

struct NormProfile {
    std::vector<LayerNorms> layers;
    double spectral_product = 0.0;  // prod ||W_i||_2
    double beta = 0.0;              // spectral_product^{1/d}
    double frob_ratio_sum = 0.0;    // sum ||W_i||_F^2 / ||W_i||_2^2
    double l1_ratio_term = 0.0;     // (sum (||W_i||_1 / ||W_i||_2)^{2/3})^3
    double l21_ratio_term = 0.0;    // (sum (||W_i||_{2,1} / ||W_i||_2)^{2/3})^3
};

/// Throws InvalidInput on a zero layer.
NormProfile norm_profile(const ReluNetwork& net);

enum class BoundMode { capacity, traceable };
std::string to_string(BoundMode mode);
BoundMode parse_bound_mode(const std::string& s);

struct BoundConfig {
    double gamma = 1.0;
    double delta = 0.05;
    BoundMode mode = BoundMode::capacity;
};

/// Cover of candidate beta values used by the union bound.
struct BetaGrid {
    double lower = 0.0;    // (gamma / 2B)^{1/d}
    double upper = 0.0;    // (gamma sqrt(m) / 2B)^{1/d}
    double spacing = 0.0;  // (1/d) (gamma / 2B)^{1/d}
    std::vector<double> points;
    double nominal_size = 0.0;  // d m^{1/(2d)}

    std::size_t size() const noexcept { return points.size(); }
    bool contains(double beta) const noexcept { return beta >= lower && beta <= upper; }
    /// Grid point closest to `beta`.
    double nearest(double beta) const;
};

BetaGrid beta_grid(double gamma, double radius, std::size_t m, std::size_t d);

/// Proof-faithful internals behind the traceable bound.
struct TraceableInternals {
    double beta = 0.0;
    double beta_tilde = 0.0;
    bool beta_in_range = true;  // false: the bound holds trivially and is reported as max(value, 1)
    double sigma = 0.0;
    double kl = 0.0;
    std::size_t cover_size = 0;
    double nominal_cover_size = 0.0;
    double beta_lower = 0.0;
    double beta_upper = 0.0;
};

struct Theorem1Result {
    double value = 0.0;
    double excess = 0.0;
    bool log_clamped = false;  // ln(dh) was raised to 1
    std::optional<TraceableInternals> traceable;
};

Theorem1Result theorem1_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg);
double bartlett_l1_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg);
double bartlett_l21_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg);

/// sqrt(d^2 h^2 / m); callers add L_0.
double vc_bound(std::size_t d, std::size_t h, std::size_t m);

struct RegimeFactors {
    double comp_our = 0.0;  // d^3 h mean(||W_i||_F^2 / ||W_i||_2^2)
    double comp_bar = 0.0;  // d^3 mean(||W_i||_1^2 / ||W_i||_2^2)
};

struct VcConditionRatios {
    double r_our = 0.0;  // mean(||W_i||_F / (sqrt(h/d) ||W_i||_2))
    double r_bar = 0.0;  // mean(||W_i||_1 / ((h/sqrt(d)) ||W_i||_2))
};

/// Both use the arithmetic mean of per-layer ratios after rebalancing.
RegimeFactors regime_factors(const ReluNetwork& net);
VcConditionRatios vc_condition_ratios(const ReluNetwork& net);

/// "theorem1-favored" (comp_our < comp_bar), "l1-favored" (comp_our > comp_bar),
/// or "similar" when they agree to 1e-9 relative.
std::string regime_label(const RegimeFactors& f);

struct BoundReport {
    BoundConfig config;
    std::size_t m = 0;
    std::size_t d = 0;
    std::size_t h = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    double radius = 0.0;
    NormProfile norms;
    double empirical_loss_gamma = 0.0;
    double empirical_error = 0.0;
    double theorem1 = 0.0;
    double bartlett_l1 = 0.0;
    double bartlett_l21 = 0.0;
    double vc = 0.0;  // L_0 + sqrt(d^2 h^2 / m)
    double theorem1_excess = 0.0;
    double bartlett_l1_excess = 0.0;
    double bartlett_l21_excess = 0.0;
    double vc_excess = 0.0;
    double log_term_statement = 0.0;  // ln(dm / delta)
    double log_term_proof = 0.0;      // ln(6 m cover / delta)
    bool log_clamped = false;
    RegimeFactors regime;
    VcConditionRatios vc_ratios;
    std::optional<TraceableInternals> traceable;
    std::vector<std::string> caveats;
};

BoundReport compute_bound_report(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg);

}  // namespace specmargin
