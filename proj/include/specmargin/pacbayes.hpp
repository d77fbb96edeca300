#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "specmargin/kernels.hpp"
#include "specmargin/network.hpp"

namespace specmargin {

/// Absolute slack on every empirical inequality check.
inline constexpr double kInequalitySlack = 1e-9;
/// Relative slack when testing ||U_i||_2 <= ||W_i||_2 / d, so that a perturbation
/// rescaled to exactly the limit is not rejected over the last few ulps.
inline constexpr double kAdmissibilityRelSlack = 1e-9;

struct Lemma2Bound {
    double value = 0.0;                 // e * B * prod||W_i|| * sum ||U_i|| / ||W_i||
    std::vector<bool> admissible;       // ||U_i|| <= ||W_i|| / d per layer
    bool all_admissible() const noexcept;
};

struct PerturbationTrial {
    std::optional<double> sigma;
    Vector weight_spectral;
    Vector perturbation_spectral;
    std::vector<bool> admissible;
    double observed = 0.0;       // max_x |f_{w+u}(x) - f_w(x)|_2
    double observed_linf = 0.0;  // same in l-infinity
    double bound = 0.0;
    bool holds = true;
};

struct RecursionStep {
    std::size_t layer = 0;        // 1-based
    double delta = 0.0;           // |f^i_{w+u}(x) - f^i_w(x)|_2
    double step_rhs = 0.0;        // Delta_{i-1}(||W_i|| + ||U_i||) + ||U_i|| |f^{i-1}_w(x)|_2
    bool step_holds = true;
    double closed_form_rhs = 0.0; // (1+1/d)^i prod_{j<=i}||W_j|| |x| sum_{j<=i} ||U_j||/||W_j||
    bool closed_form_holds = true;  // only asserted when the perturbation is admissible
};

/// Spectral norms of a network and a perturbation, computed once and reused for
/// many inputs.
class PerturbationAnalysis {
public:
    PerturbationAnalysis(const ReluNetwork& net, const Perturbation& pert);

    const ReluNetwork& network() const noexcept { return net_; }
    const ReluNetwork& perturbed() const noexcept { return perturbed_; }
    std::span<const double> weight_spectral() const noexcept { return w_spec_; }
    std::span<const double> perturbation_spectral() const noexcept { return u_spec_; }
    bool admissible() const noexcept;

    Lemma2Bound lemma2_bound(double radius) const;
    /// Inputs define B as their largest l2 norm.
    PerturbationTrial check(std::span<const Vector> inputs, Exec exec = Exec::parallel) const;
    std::vector<RecursionStep> recursion(std::span<const double> x) const;

private:
    ReluNetwork net_;
    ReluNetwork perturbed_;
    Vector w_spec_;
    Vector u_spec_;
    std::vector<bool> admissible_;
};

Lemma2Bound lemma2_bound(const ReluNetwork& net, const Perturbation& pert, double radius);
PerturbationTrial lemma2_check(const ReluNetwork& net, const Perturbation& pert, const LabeledDataset& data);
std::vector<RecursionStep> recursion_check(const ReluNetwork& net, const Perturbation& pert,
                                           std::span<const double> x);

enum class PerturbationMode { raw, clipped };

struct SampledPerturbation {
    Perturbation pert;
    std::vector<bool> rescaled;  // clipped mode: layer was shrunk to ||W_i|| / d
};

/// Layer i draws N(0, sigma^2) entries from derive_seed(seed, i).
SampledPerturbation sample_perturbation(const ReluNetwork& net, double sigma, RngSeed seed, PerturbationMode mode);

struct TailPoint {
    double t = 0.0;
    double frequency = 0.0;   // empirical P[||U||_2 > t]
    double bound = 0.0;       // 2h exp(-t^2 / (2 h sigma^2))
    double std_error = 0.0;   // binomial standard error at min(bound, 1)
    bool within = true;       // frequency <= bound + 3 std_error
};

/// Ten t values from sigma*sqrt(h) up to where the bound drops to about 1e-4.
Vector default_tail_grid(std::size_t h, double sigma);

std::vector<TailPoint> spectral_tail_check(std::size_t h, double sigma, std::span<const double> t_grid,
                                           std::size_t trials, RngSeed seed, Exec exec = Exec::parallel);

/// gamma / (42 d B beta_tilde^{d-1} sqrt(h ln(4hd)))
double theorem_sigma(double gamma, double radius, std::size_t d, std::size_t h, double beta_tilde);

/// KL(N(w, sigma^2 I) || N(0, sigma^2 I)) = |w|^2 / (2 sigma^2)
double kl_gaussian(const ReluNetwork& net, double sigma);

struct PacBayesTrial {
    RngSeed seed;
    double max_change_l2 = 0.0;
    double max_change_linf = 0.0;
    double perturbed_loss_half_gamma = 0.0;
    bool survived = false;  // max_change_linf < gamma / 4
};

struct PacBayesEstimate {
    double sigma = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    std::size_t trials = 0;
    std::size_t m = 0;
    double empirical_loss_gamma = 0.0;  // L_gamma(f_w)
    double empirical_error = 0.0;       // L_0(f_w)
    double mean_perturbed_loss = 0.0;   // mean over trials of L_{gamma/2}(f_{w+u})
    std::size_t survived = 0;
    double survival = 0.0;              // dataset-max proxy of P[max |f_{w+u} - f_w|_inf < gamma/4]
    double survival_std_error = 0.0;
    bool precondition_met = false;      // survival >= 1/2
    std::optional<double> kl;           // undefined at sigma = 0
    std::optional<double> bound;        // L_gamma + 4 sqrt((KL + ln(6m/delta)) / (m-1))
    std::vector<PacBayesTrial> per_trial;
};

PacBayesEstimate mc_pacbayes(const ReluNetwork& net, const LabeledDataset& data, double gamma, double sigma,
                             std::size_t trials, RngSeed seed, double delta, Exec exec = Exec::parallel);

struct Lemma2TrialRecord {
    std::size_t index = 0;
    RngSeed seed;
    bool clipped = false;
    double observed = 0.0;
    double bound = 0.0;
    bool holds = true;
    std::size_t recursion_failures = 0;
};

struct Lemma2Summary {
    double sigma = 0.0;
    std::size_t trials = 0;
    std::size_t clipped = 0;             // raw samples that violated admissibility
    std::size_t lemma_violations = 0;
    std::size_t recursion_violations = 0;
    std::size_t closed_form_violations = 0;
    double max_observed_to_bound = 0.0;  // largest observed / bound over trials with bound > 0
    std::vector<Lemma2TrialRecord> per_trial;

    bool clean() const noexcept {
        return lemma_violations == 0 && recursion_violations == 0 && closed_form_violations == 0;
    }
};

/// Samples clipped perturbations at `sigma` and runs lemma2_check and recursion_check
/// over every dataset input, per trial.
Lemma2Summary lemma2_trials(const ReluNetwork& net, const LabeledDataset& data, double sigma, std::size_t trials,
                            RngSeed seed, Exec exec = Exec::parallel);

}  // namespace specmargin
