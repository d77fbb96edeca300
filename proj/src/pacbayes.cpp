#include "specmargin/pacbayes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "specmargin/errors.hpp"

namespace specmargin {

namespace {

Vector spectra(std::span<const Matrix> layers) {
    Vector out;
    out.reserve(layers.size());
    for (const auto& m : layers) out.push_back(spectral_norm(m));
    return out;
}

bool within_admissible(double u_norm, double w_norm, std::size_t d) {
    const double limit = w_norm / static_cast<double>(d);
    return u_norm <= limit * (1.0 + kAdmissibilityRelSlack);
}

double binomial_stderr(double p, std::size_t n) {
    const double q = std::clamp(p, 0.0, 1.0);
    return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

}  // namespace

bool Lemma2Bound::all_admissible() const noexcept {
    return std::all_of(admissible.begin(), admissible.end(), [](bool b) { return b; });
}

PerturbationAnalysis::PerturbationAnalysis(const ReluNetwork& net, const Perturbation& pert)
    : net_(net), perturbed_(apply_perturbation(net, pert)), w_spec_(spectra(net.layers())),
      u_spec_(spectra(pert.layers())) {
    for (std::size_t i = 0; i < w_spec_.size(); ++i) {
        if (w_spec_[i] == 0.0) {
            throw InvalidInput("perturbation bound undefined: layer " + std::to_string(i) + " is zero");
        }
        admissible_.push_back(within_admissible(u_spec_[i], w_spec_[i], net.depth()));
    }
}

bool PerturbationAnalysis::admissible() const noexcept {
    return std::all_of(admissible_.begin(), admissible_.end(), [](bool b) { return b; });
}

Lemma2Bound PerturbationAnalysis::lemma2_bound(double radius) const {
    if (!(radius >= 0.0)) throw InvalidInput("lemma2_bound: B must be >= 0");
    double product = 1.0;
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < w_spec_.size(); ++i) {
        product *= w_spec_[i];
        ratio_sum += u_spec_[i] / w_spec_[i];
    }
    return {std::numbers::e * radius * product * ratio_sum, admissible_};
}

PerturbationTrial PerturbationAnalysis::check(std::span<const Vector> inputs, Exec exec) const {
    if (inputs.empty()) throw InvalidInput("lemma2_check: no inputs");
    double radius = 0.0;
    for (const auto& x : inputs) radius = std::max(radius, l2_norm(x));
    const OutputChange change = kernels::max_output_change(net_, perturbed_, inputs, exec);

    PerturbationTrial trial;
    trial.weight_spectral = w_spec_;
    trial.perturbation_spectral = u_spec_;
    trial.admissible = admissible_;
    trial.observed = change.max_l2;
    trial.observed_linf = change.max_linf;
    trial.bound = lemma2_bound(radius).value;
    trial.holds = trial.observed <= trial.bound + kInequalitySlack;
    return trial;
}

std::vector<RecursionStep> PerturbationAnalysis::recursion(std::span<const double> x) const {
    const std::vector<Vector> clean = layer_outputs(net_, x);
    const std::vector<Vector> shifted = layer_outputs(perturbed_, x);
    const std::size_t d = net_.depth();
    const double x_norm = l2_norm(x);
    const bool admissible_all = admissible();

    std::vector<RecursionStep> steps;
    steps.reserve(d);
    double prev_delta = 0.0;  // Delta_0 = |x - x| = 0
    double prev_norm = x_norm;
    double product = 1.0;
    double ratio_sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        Vector diff(clean[i].size());
        for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = shifted[i][j] - clean[i][j];

        RecursionStep step;
        step.layer = i + 1;
        step.delta = l2_norm(diff);
        step.step_rhs = prev_delta * (w_spec_[i] + u_spec_[i]) + u_spec_[i] * prev_norm;
        step.step_holds = step.delta <= step.step_rhs + kInequalitySlack;

        product *= w_spec_[i];
        ratio_sum += u_spec_[i] / w_spec_[i];
        step.closed_form_rhs =
            std::pow(1.0 + 1.0 / static_cast<double>(d), static_cast<double>(i + 1)) * product * x_norm * ratio_sum;
        step.closed_form_holds = !admissible_all || step.delta <= step.closed_form_rhs + kInequalitySlack;
        steps.push_back(step);

        prev_delta = step.delta;
        prev_norm = l2_norm(clean[i]);
    }
    return steps;
}

Lemma2Bound lemma2_bound(const ReluNetwork& net, const Perturbation& pert, double radius) {
    return PerturbationAnalysis(net, pert).lemma2_bound(radius);
}

PerturbationTrial lemma2_check(const ReluNetwork& net, const Perturbation& pert, const LabeledDataset& data) {
    if (data.input_dim() != net.input_dim()) throw InvalidInput("lemma2_check: dataset does not fit network");
    return PerturbationAnalysis(net, pert).check(data.inputs());
}

std::vector<RecursionStep> recursion_check(const ReluNetwork& net, const Perturbation& pert,
                                           std::span<const double> x) {
    return PerturbationAnalysis(net, pert).recursion(x);
}

SampledPerturbation sample_perturbation(const ReluNetwork& net, double sigma, RngSeed seed, PerturbationMode mode) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("sample_perturbation: sigma must be >= 0");
    const std::size_t d = net.depth();
    std::vector<Matrix> layers;
    std::vector<bool> rescaled(d, false);
    layers.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        const Matrix& w = net.layers()[i];
        Matrix u = gaussian_matrix(w.rows(), w.cols(), sigma, derive_seed(seed, i));
        if (mode == PerturbationMode::clipped && sigma > 0.0) {
            const double limit = spectral_norm(w) / static_cast<double>(d);
            const double norm = spectral_norm(u);
            if (norm > limit) {
                u = u.scaled(limit / norm);
                rescaled[i] = true;
            }
        }
        layers.push_back(std::move(u));
    }
    return {Perturbation(std::move(layers)), std::move(rescaled)};
}

Vector default_tail_grid(std::size_t h, double sigma) {
    if (h == 0 || !(sigma > 0.0)) throw InvalidInput("default_tail_grid: need h >= 1 and sigma > 0");
    const double hd = static_cast<double>(h);
    const double lo = sigma * std::sqrt(hd);
    const double hi = sigma * std::sqrt(2.0 * hd * std::log(2.0 * hd * 1e4));
    Vector grid(10);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / 9.0;
    return grid;
}

std::vector<TailPoint> spectral_tail_check(std::size_t h, double sigma, std::span<const double> t_grid,
                                           std::size_t trials, RngSeed seed, Exec exec) {
    if (h < 1) throw InvalidInput("spectral_tail_check: h must be >= 1");
    if (trials < 100) throw InvalidInput("spectral_tail_check: need at least 100 trials");
    if (!(sigma > 0.0)) throw InvalidInput("spectral_tail_check: sigma must be positive");
    const Vector norms = kernels::gaussian_spectral_norms(h, sigma, trials, seed, exec);
    const double hd = static_cast<double>(h);

    std::vector<TailPoint> out;
    out.reserve(t_grid.size());
    for (double t : t_grid) {
        TailPoint p;
        p.t = t;
        const auto exceed = std::count_if(norms.begin(), norms.end(), [t](double s) { return s > t; });
        p.frequency = static_cast<double>(exceed) / static_cast<double>(trials);
        p.bound = 2.0 * hd * std::exp(-t * t / (2.0 * hd * sigma * sigma));
        p.std_error = binomial_stderr(std::min(p.bound, 1.0), trials);
        p.within = p.frequency <= p.bound + 3.0 * p.std_error;
        out.push_back(p);
    }
    return out;
}

double theorem_sigma(double gamma, double radius, std::size_t d, std::size_t h, double beta_tilde) {
    if (!(gamma > 0.0) || !(radius > 0.0) || d == 0 || h == 0 || !(beta_tilde > 0.0)) {
        throw InvalidInput("theorem_sigma: all arguments must be positive");
    }
    const double dd = static_cast<double>(d);
    const double hd = static_cast<double>(h);
    const double log_term = std::log(4.0 * hd * dd);
    return gamma / (42.0 * dd * radius * std::pow(beta_tilde, dd - 1.0) * std::sqrt(hd * log_term));
}

double kl_gaussian(const ReluNetwork& net, double sigma) {
    if (!(sigma > 0.0)) throw InvalidInput("kl_gaussian: sigma must be positive");
    return weight_norm_sq(net) / (2.0 * sigma * sigma);
}

PacBayesEstimate mc_pacbayes(const ReluNetwork& net, const LabeledDataset& data, double gamma, double sigma,
                             std::size_t trials, RngSeed seed, double delta, Exec exec) {
    if (trials < 1) throw InvalidInput("mc_pacbayes: trials must be >= 1");
    if (!(gamma > 0.0)) throw InvalidInput("mc_pacbayes: gamma must be positive");
    if (!(sigma >= 0.0)) throw InvalidInput("mc_pacbayes: sigma must be >= 0");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("mc_pacbayes: delta must be in (0, 1)");
    check_compatible(net, data);
    const std::size_t m = data.size();

    PacBayesEstimate est;
    est.sigma = sigma;
    est.gamma = gamma;
    est.delta = delta;
    est.trials = trials;
    est.m = m;
    est.empirical_loss_gamma = margin_loss(net, data, gamma);
    est.empirical_error = margin_loss(net, data, 0.0);
    est.per_trial.resize(trials);

    const Exec inner = exec == Exec::parallel ? Exec::serial : Exec::parallel;
    for_each_index(trials, exec, [&](std::size_t t) {
        PacBayesTrial& rec = est.per_trial[t];
        rec.seed = derive_seed(seed, t);
        const auto sample = sample_perturbation(net, sigma, rec.seed, PerturbationMode::raw);
        const ReluNetwork shifted = apply_perturbation(net, sample.pert);
        const OutputChange change = kernels::max_output_change(net, shifted, data.inputs(), inner);
        rec.max_change_l2 = change.max_l2;
        rec.max_change_linf = change.max_linf;
        const std::size_t hits = kernels::count_margin_at_most(shifted, data, gamma / 2.0, inner);
        rec.perturbed_loss_half_gamma = static_cast<double>(hits) / static_cast<double>(m);
        rec.survived = change.max_linf < gamma / 4.0;
    });

    double loss_sum = 0.0;
    for (const auto& rec : est.per_trial) {
        loss_sum += rec.perturbed_loss_half_gamma;
        if (rec.survived) ++est.survived;
    }
    est.mean_perturbed_loss = loss_sum / static_cast<double>(trials);
    est.survival = static_cast<double>(est.survived) / static_cast<double>(trials);
    est.survival_std_error = binomial_stderr(est.survival, trials);
    est.precondition_met = est.survival >= 0.5;
    if (sigma > 0.0) {
        est.kl = kl_gaussian(net, sigma);
        if (m >= 2) {
            const double md = static_cast<double>(m);
            est.bound = est.empirical_loss_gamma + 4.0 * std::sqrt((*est.kl + std::log(6.0 * md / delta)) / (md - 1.0));
        }
    }
    return est;
}

Lemma2Summary lemma2_trials(const ReluNetwork& net, const LabeledDataset& data, double sigma, std::size_t trials,
                            RngSeed seed, Exec exec) {
    if (trials < 1) throw InvalidInput("lemma2_trials: trials must be >= 1");
    if (data.input_dim() != net.input_dim()) throw InvalidInput("lemma2_trials: dataset does not fit network");

    Lemma2Summary summary;
    summary.sigma = sigma;
    summary.trials = trials;
    summary.per_trial.resize(trials);
    std::vector<std::size_t> closed_form_failures(trials, 0);

    const Exec inner = exec == Exec::parallel ? Exec::serial : Exec::parallel;
    for_each_index(trials, exec, [&](std::size_t t) {
        Lemma2TrialRecord& rec = summary.per_trial[t];
        rec.index = t;
        rec.seed = derive_seed(seed, t);
        const auto sample = sample_perturbation(net, sigma, rec.seed, PerturbationMode::clipped);
        rec.clipped = std::any_of(sample.rescaled.begin(), sample.rescaled.end(), [](bool b) { return b; });
        const PerturbationAnalysis analysis(net, sample.pert);
        const PerturbationTrial trial = analysis.check(data.inputs(), inner);
        rec.observed = trial.observed;
        rec.bound = trial.bound;
        rec.holds = trial.holds;
        for (const auto& x : data.inputs()) {
            for (const auto& step : analysis.recursion(x)) {
                if (!step.step_holds) ++rec.recursion_failures;
                if (!step.closed_form_holds) ++closed_form_failures[t];
            }
        }
    });

    for (std::size_t t = 0; t < trials; ++t) {
        const auto& rec = summary.per_trial[t];
        if (rec.clipped) ++summary.clipped;
        if (!rec.holds) ++summary.lemma_violations;
        summary.recursion_violations += rec.recursion_failures;
        summary.closed_form_violations += closed_form_failures[t];
        if (rec.bound > 0.0) summary.max_observed_to_bound = std::max(summary.max_observed_to_bound, rec.observed / rec.bound);
    }
    return summary;
}

}  // namespace specmargin
