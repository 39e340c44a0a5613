#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rddid/data.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/local_fit.hpp"

namespace rddid {

struct InfluenceTerm {
    UnitId unit;
    double weight = 0.0;
};

/// An intercept estimator written as a linear functional sum_i weight_i * Y_i
/// over the units of one period and side. Terms are sorted by unit.
struct InterceptFunctional {
    int period = 0;
    Side side = Side::above;
    std::vector<InfluenceTerm> terms;
};

namespace detail {
inline void sort_terms(std::vector<InfluenceTerm>& terms) {
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.unit < b.unit; });
}
}  // namespace detail

/// Linear weights of a fit's intercept (row 0 of its coefficient weights).
inline InterceptFunctional conventional_functional(const SideFit& fit) {
    InterceptFunctional f{fit.period, fit.side, {}};
    f.terms.reserve(fit.units.size());
    for (std::size_t i = 0; i < fit.units.size(); ++i) {
        f.terms.push_back({fit.units[i], fit.coefficient_weights(0, static_cast<Eigen::Index>(i))});
    }
    detail::sort_terms(f.terms);
    return f;
}

/// e0' Gamma^-1 theta: the leading-bias constant of the intercept for
/// curvature, with theta built from squared scaled regressors.
inline double bias_factor(const SideFit& fit) {
    double acc = 0.0;
    for (std::size_t i = 0; i < fit.units.size(); ++i) {
        const double u = (fit.running[i] - fit.cutoff) / fit.bandwidth;
        acc += fit.coefficient_weights(0, static_cast<Eigen::Index>(i)) * u * u;
    }
    return acc;
}

/// Bias-corrected intercept as a linear functional: the main-fit weights minus
/// h^2 * B / b^2 times the pilot fit's quadratic-coefficient weights.
inline InterceptFunctional bias_corrected_functional(const SideFit& main, const SideFit& pilot) {
    if (pilot.order < 2) throw Error(ErrorCategory::order, "pilot fit must have order >= 2");
    const double h = main.bandwidth;
    const double b = pilot.bandwidth;
    const double scale = h * h * bias_factor(main) / (b * b);
    std::vector<InfluenceTerm> raw;
    raw.reserve(main.units.size() + pilot.units.size());
    for (std::size_t i = 0; i < main.units.size(); ++i) {
        raw.push_back({main.units[i], main.coefficient_weights(0, static_cast<Eigen::Index>(i))});
    }
    for (std::size_t i = 0; i < pilot.units.size(); ++i) {
        raw.push_back({pilot.units[i], -scale * pilot.coefficient_weights(2, static_cast<Eigen::Index>(i))});
    }
    detail::sort_terms(raw);
    InterceptFunctional f{main.period, main.side, {}};
    for (const auto& t : raw) {
        if (!f.terms.empty() && f.terms.back().unit == t.unit) {
            f.terms.back().weight += t.weight;
        } else {
            f.terms.push_back(t);
        }
    }
    return f;
}

struct PeriodDiscontinuity {
    int period = 0;
    Target target = Target::outcome;
    double conventional = 0.0;
    double bias = 0.0;
    double bias_corrected = 0.0;
    double intercept_above = 0.0;
    double intercept_below = 0.0;
    double bc_intercept_above = 0.0;
    double bc_intercept_below = 0.0;
    double curvature_above = 0.0;
    double curvature_below = 0.0;
    double bias_factor_above = 0.0;
    double bias_factor_below = 0.0;

    SideFit above;
    SideFit below;
    SideFit pilot_above;
    SideFit pilot_below;

    InterceptFunctional conv_above;
    InterceptFunctional conv_below;
    InterceptFunctional bc_above;
    InterceptFunctional bc_below;

    /// Residuals from the order-p fit of each unit's side, for every unit any
    /// functional touches. Sorted by unit.
    std::vector<std::pair<UnitId, double>> residuals;
    std::vector<std::string> warnings;

    const InterceptFunctional& functional(Side side, Estimator est) const {
        if (est == Estimator::conventional) return side == Side::above ? conv_above : conv_below;
        return side == Side::above ? bc_above : bc_below;
    }
    double value(Estimator est) const { return est == Estimator::conventional ? conventional : bias_corrected; }
};

namespace detail {

struct SidePair {
    std::vector<Observation> above;
    std::vector<Observation> below;
    std::size_t total = 0;
};

inline SidePair split_period(std::span<const Observation> obs, double cutoff, int period) {
    SidePair s;
    for (const auto& o : obs) (o.running >= cutoff ? s.above : s.below).push_back(o);
    s.total = obs.size();
    for (auto side : {Side::above, Side::below}) {
        if ((side == Side::above ? s.above : s.below).empty()) {
            throw Error(ErrorCategory::support, "period " + std::to_string(period) + ", " +
                                                    std::string(side_name(side)) + ": no observations");
        }
    }
    return s;
}

inline std::vector<std::pair<UnitId, double>> collect_residuals(const SideFit& main, const SideFit* pilot) {
    std::vector<std::pair<UnitId, double>> out;
    for (std::size_t i = 0; i < main.units.size(); ++i) out.emplace_back(main.units[i], main.residuals[i]);
    if (pilot) {
        for (std::size_t i = 0; i < pilot->units.size(); ++i) {
            out.emplace_back(pilot->units[i], pilot->response[i] - main.fitted(pilot->running[i]));
        }
    }
    return out;
}

}  // namespace detail

/// Conventional jump estimate for one period from already-split observations.
inline double discontinuity(std::span<const Observation> obs, double cutoff, const FitSpec& spec, int period,
                            Target target = Target::outcome) {
    auto sides = detail::split_period(obs, cutoff, period);
    const double h = spec.bandwidth(period);
    const auto above = fit_side(sides.above, Side::above, cutoff, spec.p, spec.kernel, h, target, sides.total);
    const auto below = fit_side(sides.below, Side::below, cutoff, spec.p, spec.kernel, h, target, sides.total);
    return intercept(above) - intercept(below);
}

/// Intercept above minus intercept below for one period.
inline double discontinuity(const PanelDataset& ds, int period, const FitSpec& spec, Target target = Target::outcome) {
    auto obs = ds.period_observations(period);
    if (obs.empty()) throw Error(ErrorCategory::validation, "unknown or empty period " + std::to_string(period));
    return discontinuity(obs, ds.cutoff, spec, period, target);
}

/// Full conventional + bias-corrected decomposition from a period's observations.
inline PeriodDiscontinuity bc_discontinuity(std::span<const Observation> obs, double cutoff, const FitSpec& spec,
                                            int period, Target target = Target::outcome) {
    if (spec.q < 2) throw Error(ErrorCategory::order, "q must be >= 2");
    auto sides = detail::split_period(obs, cutoff, period);
    const double h = spec.bandwidth(period);
    const double b = spec.pilot_bandwidth(period);

    PeriodDiscontinuity d;
    d.period = period;
    d.target = target;
    d.above = fit_side(sides.above, Side::above, cutoff, spec.p, spec.kernel, h, target, sides.total);
    d.below = fit_side(sides.below, Side::below, cutoff, spec.p, spec.kernel, h, target, sides.total);
    d.pilot_above = fit_side(sides.above, Side::above, cutoff, spec.q, spec.kernel, b, target, sides.total);
    d.pilot_below = fit_side(sides.below, Side::below, cutoff, spec.q, spec.kernel, b, target, sides.total);
    d.above.period = d.below.period = d.pilot_above.period = d.pilot_below.period = period;

    d.intercept_above = intercept(d.above);
    d.intercept_below = intercept(d.below);
    d.conventional = d.intercept_above - d.intercept_below;
    d.curvature_above = second_derivative(d.pilot_above);
    d.curvature_below = second_derivative(d.pilot_below);
    d.bias_factor_above = bias_factor(d.above);
    d.bias_factor_below = bias_factor(d.below);
    const double bias_above = 0.5 * h * h * d.curvature_above * d.bias_factor_above;
    const double bias_below = 0.5 * h * h * d.curvature_below * d.bias_factor_below;
    d.bias = 0.5 * h * h * (d.curvature_above * d.bias_factor_above - d.curvature_below * d.bias_factor_below);
    d.bias_corrected = d.conventional - d.bias;
    d.bc_intercept_above = d.intercept_above - bias_above;
    d.bc_intercept_below = d.intercept_below - bias_below;

    d.conv_above = conventional_functional(d.above);
    d.conv_below = conventional_functional(d.below);
    d.bc_above = bias_corrected_functional(d.above, d.pilot_above);
    d.bc_below = bias_corrected_functional(d.below, d.pilot_below);

    auto res = detail::collect_residuals(d.above, &d.pilot_above);
    auto res_below = detail::collect_residuals(d.below, &d.pilot_below);
    res.insert(res.end(), res_below.begin(), res_below.end());
    std::stable_sort(res.begin(), res.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    res.erase(std::unique(res.begin(), res.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
              res.end());
    d.residuals = std::move(res);

    if (target == Target::treatment) {
        for (const auto* f : {&d.above, &d.below}) {
            const double p = intercept(*f);
            if (p < 0.0 || p > 1.0) {
                d.warnings.push_back("fitted treatment probability " + std::to_string(p) + " outside [0, 1] " +
                                     std::string(side_name(f->side)) + " the cutoff in period " +
                                     std::to_string(period));
            }
        }
    }
    return d;
}

inline PeriodDiscontinuity bc_discontinuity(const PanelDataset& ds, int period, const FitSpec& spec,
                                            Target target = Target::outcome) {
    auto obs = ds.period_observations(period);
    if (obs.empty()) throw Error(ErrorCategory::validation, "unknown or empty period " + std::to_string(period));
    return bc_discontinuity(obs, ds.cutoff, spec, period, target);
}

/// Plug-in first-order smoothing bias (h^2 / 2)(mu''+ B+ - mu''- B-).
inline double bias_estimate(const PanelDataset& ds, int period, const FitSpec& spec) {
    return bc_discontinuity(ds, period, spec).bias;
}

}  // namespace rddid
