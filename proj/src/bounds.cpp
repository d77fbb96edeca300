#include "specmargin/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "specmargin/errors.hpp"
#include "specmargin/pacbayes.hpp"

namespace specmargin {

namespace {

void validate(const LabeledDataset& data, const BoundConfig& cfg) {
    if (!(cfg.gamma > 0.0) || !std::isfinite(cfg.gamma)) throw InvalidInput("bounds need gamma > 0");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw InvalidInput("bounds need delta in (0, 1)");
    if (data.size() < 2) throw InvalidInput("bounds need m >= 2 samples");
    if (!(data.radius() > 0.0)) throw InvalidInput("bounds need a dataset with nonzero radius B");
}

// ln(dh), raised to 1 when dh <= e.
double clamped_log_dh(std::size_t d, std::size_t h, bool& clamped) {
    const double v = std::log(static_cast<double>(d) * static_cast<double>(h));
    clamped = v < 1.0;
    return std::max(v, 1.0);
}

double mean(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double bartlett_excess(double ratio_term, const NormProfile& p, double radius, double gamma, std::size_t m) {
    const double prod_sq = p.spectral_product * p.spectral_product;
    return std::sqrt(radius * radius * prod_sq * ratio_term / (gamma * gamma * static_cast<double>(m)));
}

struct Theorem1Parts {
    Theorem1Result result;
    double log_statement = 0.0;
    double log_proof = 0.0;
};

Theorem1Parts theorem1_parts(const ReluNetwork& net, const NormProfile& profile, const LabeledDataset& data,
                             const BoundConfig& cfg, double loss_gamma) {
    const std::size_t d = net.depth();
    const std::size_t h = net.width();
    const std::size_t m = data.size();
    const double dd = static_cast<double>(d);
    const double md = static_cast<double>(m);
    const double radius = data.radius();

    Theorem1Parts parts;
    const BetaGrid grid = beta_grid(cfg.gamma, radius, m, d);
    parts.log_statement = std::log(dd * md / cfg.delta);
    parts.log_proof = std::log(6.0 * md * static_cast<double>(grid.size()) / cfg.delta);

    Theorem1Result& r = parts.result;
    const double log_dh = clamped_log_dh(d, h, r.log_clamped);

    if (cfg.mode == BoundMode::capacity) {
        const double capacity = radius * radius * dd * dd * static_cast<double>(h) * log_dh *
                                profile.spectral_product * profile.spectral_product * profile.frob_ratio_sum;
        r.excess = std::sqrt((capacity + parts.log_statement) / (cfg.gamma * cfg.gamma * md));
        r.value = loss_gamma + r.excess;
        return parts;
    }

    const Rebalanced balanced = rebalance(net);
    TraceableInternals t;
    t.beta = balanced.beta;
    t.beta_lower = grid.lower;
    t.beta_upper = grid.upper;
    t.beta_in_range = grid.contains(balanced.beta);
    t.beta_tilde = t.beta_in_range ? grid.nearest(balanced.beta) : balanced.beta;
    t.sigma = theorem_sigma(cfg.gamma, radius, d, h, t.beta_tilde);
    t.kl = kl_gaussian(balanced.net, t.sigma);
    t.cover_size = grid.size();
    t.nominal_cover_size = grid.nominal_size;

    r.excess = 4.0 * std::sqrt((t.kl + parts.log_proof) / (md - 1.0));
    r.value = loss_gamma + r.excess;
    if (!t.beta_in_range) r.value = std::max(r.value, 1.0);
    r.traceable = t;
    return parts;
}

}  // namespace

NormProfile norm_profile(const ReluNetwork& net) {
    NormProfile p;
    p.layers.reserve(net.depth());
    double log_product = 0.0;
    double l1_sum = 0.0;
    double l21_sum = 0.0;
    p.spectral_product = 1.0;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const Matrix& w = net.layers()[i];
        LayerNorms n{spectral_norm(w), frobenius_norm(w), l1_elementwise_norm(w), l21_norm(w)};
        if (n.spectral == 0.0) throw InvalidInput("norm_profile: layer " + std::to_string(i) + " is zero");
        p.spectral_product *= n.spectral;
        log_product += std::log(n.spectral);
        p.frob_ratio_sum += (n.frobenius * n.frobenius) / (n.spectral * n.spectral);
        l1_sum += std::cbrt((n.l1 / n.spectral) * (n.l1 / n.spectral));
        l21_sum += std::cbrt((n.l21 / n.spectral) * (n.l21 / n.spectral));
        p.layers.push_back(n);
    }
    p.beta = std::exp(log_product / static_cast<double>(net.depth()));
    p.l1_ratio_term = l1_sum * l1_sum * l1_sum;
    p.l21_ratio_term = l21_sum * l21_sum * l21_sum;
    return p;
}

std::string to_string(BoundMode mode) { return mode == BoundMode::capacity ? "capacity" : "traceable"; }

BoundMode parse_bound_mode(const std::string& s) {
    if (s == "capacity") return BoundMode::capacity;
    if (s == "traceable") return BoundMode::traceable;
    throw InvalidInput("unknown bound mode '" + s + "' (expected capacity or traceable)");
}

double BetaGrid::nearest(double beta) const {
    if (points.empty()) throw InvalidInput("beta grid is empty");
    const auto it = std::min_element(points.begin(), points.end(),
                                     [beta](double a, double b) { return std::abs(a - beta) < std::abs(b - beta); });
    return *it;
}

BetaGrid beta_grid(double gamma, double radius, std::size_t m, std::size_t d) {
    if (!(gamma > 0.0) || !(radius > 0.0)) throw InvalidInput("beta_grid: gamma and B must be positive");
    if (m < 2) throw InvalidInput("beta_grid: need m >= 2");
    if (d < 1) throw InvalidInput("beta_grid: need d >= 1");
    const double dd = static_cast<double>(d);
    const double md = static_cast<double>(m);

    BetaGrid g;
    g.lower = std::pow(gamma / (2.0 * radius), 1.0 / dd);
    g.upper = std::pow(gamma * std::sqrt(md) / (2.0 * radius), 1.0 / dd);
    g.spacing = g.lower / dd;
    g.nominal_size = dd * std::pow(md, 1.0 / (2.0 * dd));
    const auto steps = static_cast<std::size_t>(std::ceil((g.upper - g.lower) / g.spacing - 1e-12));
    g.points.reserve(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) g.points.push_back(g.lower + static_cast<double>(i) * g.spacing);
    return g;
}

Theorem1Result theorem1_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg) {
    validate(data, cfg);
    return theorem1_parts(net, norm_profile(net), data, cfg, margin_loss(net, data, cfg.gamma)).result;
}

double bartlett_l1_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg) {
    validate(data, cfg);
    const NormProfile p = norm_profile(net);
    return margin_loss(net, data, cfg.gamma) + bartlett_excess(p.l1_ratio_term, p, data.radius(), cfg.gamma, data.size());
}

double bartlett_l21_bound(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg) {
    validate(data, cfg);
    const NormProfile p = norm_profile(net);
    return margin_loss(net, data, cfg.gamma) +
           bartlett_excess(p.l21_ratio_term, p, data.radius(), cfg.gamma, data.size());
}

double vc_bound(std::size_t d, std::size_t h, std::size_t m) {
    if (d < 1 || h < 1 || m < 1) throw InvalidInput("vc_bound: d, h, m must be >= 1");
    const double dh = static_cast<double>(d) * static_cast<double>(h);
    return std::sqrt(dh * dh / static_cast<double>(m));
}

RegimeFactors regime_factors(const ReluNetwork& net) {
    const NormProfile p = norm_profile(rebalance(net).net);
    const double d3 = std::pow(static_cast<double>(net.depth()), 3.0);
    std::vector<double> frob;
    std::vector<double> l1;
    for (const auto& n : p.layers) {
        frob.push_back((n.frobenius * n.frobenius) / (n.spectral * n.spectral));
        l1.push_back((n.l1 * n.l1) / (n.spectral * n.spectral));
    }
    return {d3 * static_cast<double>(net.width()) * mean(frob), d3 * mean(l1)};
}

VcConditionRatios vc_condition_ratios(const ReluNetwork& net) {
    const NormProfile p = norm_profile(rebalance(net).net);
    const double dd = static_cast<double>(net.depth());
    const double hd = static_cast<double>(net.width());
    std::vector<double> ours;
    std::vector<double> theirs;
    for (const auto& n : p.layers) {
        ours.push_back(n.frobenius / (std::sqrt(hd / dd) * n.spectral));
        theirs.push_back(n.l1 / ((hd / std::sqrt(dd)) * n.spectral));
    }
    return {mean(ours), mean(theirs)};
}

std::string regime_label(const RegimeFactors& f) {
    const double scale = std::max(std::abs(f.comp_our), std::abs(f.comp_bar));
    if (std::abs(f.comp_our - f.comp_bar) <= 1e-9 * scale) return "similar";
    return f.comp_our < f.comp_bar ? "theorem1-favored" : "l1-favored";
}

BoundReport compute_bound_report(const ReluNetwork& net, const LabeledDataset& data, const BoundConfig& cfg) {
    validate(data, cfg);
    check_compatible(net, data);

    BoundReport r;
    r.config = cfg;
    r.m = data.size();
    r.d = net.depth();
    r.h = net.width();
    r.n = net.input_dim();
    r.k = net.output_dim();
    r.radius = data.radius();
    r.norms = norm_profile(net);

    const Vector margins = kernels::margins(net, data);
    const auto count_at_most = [&](double g) {
        return static_cast<double>(std::count_if(margins.begin(), margins.end(), [g](double x) { return x <= g; })) /
               static_cast<double>(margins.size());
    };
    r.empirical_loss_gamma = count_at_most(cfg.gamma);
    r.empirical_error = count_at_most(0.0);

    const Theorem1Parts t1 = theorem1_parts(net, r.norms, data, cfg, r.empirical_loss_gamma);
    r.theorem1 = t1.result.value;
    r.theorem1_excess = t1.result.excess;
    r.log_clamped = t1.result.log_clamped;
    r.traceable = t1.result.traceable;
    r.log_term_statement = t1.log_statement;
    r.log_term_proof = t1.log_proof;

    r.bartlett_l1_excess = bartlett_excess(r.norms.l1_ratio_term, r.norms, r.radius, cfg.gamma, r.m);
    r.bartlett_l21_excess = bartlett_excess(r.norms.l21_ratio_term, r.norms, r.radius, cfg.gamma, r.m);
    r.bartlett_l1 = r.empirical_loss_gamma + r.bartlett_l1_excess;
    r.bartlett_l21 = r.empirical_loss_gamma + r.bartlett_l21_excess;
    r.vc_excess = vc_bound(r.d, r.h, r.m);
    r.vc = r.empirical_error + r.vc_excess;

    r.regime = regime_factors(net);
    r.vc_ratios = vc_condition_ratios(net);

    if (cfg.mode == BoundMode::capacity) {
        r.caveats.push_back("capacity mode: every unstated O-constant is set to 1");
    } else {
        r.caveats.push_back("traceable mode: constants 42, 4, 6 and e taken from the proof; delta split over the beta cover");
        if (r.traceable && !r.traceable->beta_in_range) {
            r.caveats.push_back("beta outside the covered range: the bound holds trivially and is reported as at least 1");
        }
    }
    r.caveats.push_back("l1 and l2,1 spectral bounds omit their unstated logarithmic factors; cross-bound comparisons are constant-sensitive");
    r.caveats.push_back("regime factors and VC ratios average per-layer ratios after rebalancing");
    if (r.log_clamped) r.caveats.push_back("ln(dh) clamped to 1 because dh <= e");
    return r;
}

}  // namespace specmargin
