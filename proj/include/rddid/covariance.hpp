#pragma once

// Heteroskedasticity-robust (HC0) variances and cross-period covariances of
// intercept and jump estimators. Every estimator is handled as a linear
// functional sum_i w_i Y_i, so a variance is sum_i w_i^2 e_i^2 and a
// cross-period covariance is the sum over units observed in both periods of
// w_si w_ti e_si e_ti (off-diagonal unit pairs are independent).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rddid/data.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/period_effects.hpp"

namespace rddid {

class ResidualCovariance {
public:
    using Residuals = std::vector<std::pair<UnitId, double>>;

    ResidualCovariance() = default;

    explicit ResidualCovariance(const std::map<int, PeriodDiscontinuity>& periods) {
        for (const auto& [t, d] : periods) add_period(t, d.residuals);
    }

    void add_period(int period, Residuals residuals) {
        std::sort(residuals.begin(), residuals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        residuals_[period] = std::move(residuals);
    }

    std::optional<double> residual(int period, UnitId unit) const {
        auto it = residuals_.find(period);
        if (it == residuals_.end()) return std::nullopt;
        const auto& v = it->second;
        auto pos = std::lower_bound(v.begin(), v.end(), unit, [](const auto& e, UnitId u) { return e.first < u; });
        if (pos == v.end() || pos->first != unit) return std::nullopt;
        return pos->second;
    }

    /// Diagonal of the within-period residual covariance: e_i^2.
    std::map<UnitId, double> within_period(int period) const {
        std::map<UnitId, double> out;
        if (auto it = residuals_.find(period); it != residuals_.end()) {
            for (const auto& [u, e] : it->second) out.emplace(u, e * e);
        }
        return out;
    }

    /// Diagonal of the cross-period residual covariance: e_is * e_it for units
    /// present in both periods.
    std::map<UnitId, double> cross_period(int s, int t) const {
        std::map<UnitId, double> out;
        auto a = residuals_.find(s);
        auto b = residuals_.find(t);
        if (a == residuals_.end() || b == residuals_.end()) return out;
        auto i = a->second.begin();
        auto j = b->second.begin();
        while (i != a->second.end() && j != b->second.end()) {
            if (i->first < j->first) {
                ++i;
            } else if (j->first < i->first) {
                ++j;
            } else {
                out.emplace(i->first, i->second * j->second);
                ++i;
                ++j;
            }
        }
        return out;
    }

    bool has_period(int period) const { return residuals_.contains(period); }

private:
    std::map<int, Residuals> residuals_;
};

inline double functional_variance(const InterceptFunctional& f, const ResidualCovariance& rc) {
    double acc = 0.0;
    for (const auto& term : f.terms) {
        auto e = rc.residual(f.period, term.unit);
        if (!e) {
            throw Error(ErrorCategory::validation, "missing residual for unit index " + std::to_string(term.unit.value) +
                                                       " in period " + std::to_string(f.period));
        }
        acc += term.weight * term.weight * (*e) * (*e);
    }
    return acc;
}

/// Covariance of two functionals from different periods; units absent from
/// either period contribute zero.
inline double functional_covariance(const InterceptFunctional& fs, const InterceptFunctional& ft,
                                    const ResidualCovariance& rc) {
    double acc = 0.0;
    auto i = fs.terms.begin();
    auto j = ft.terms.begin();
    while (i != fs.terms.end() && j != ft.terms.end()) {
        if (i->unit < j->unit) {
            ++i;
        } else if (j->unit < i->unit) {
            ++j;
        } else {
            auto es = rc.residual(fs.period, i->unit);
            auto et = rc.residual(ft.period, j->unit);
            if (es && et) acc += i->weight * j->weight * (*es) * (*et);
            ++i;
            ++j;
        }
    }
    return acc;
}

/// Sandwich variance of a fit's intercept using HC0 residuals.
inline double intercept_variance(const SideFit& fit, const ResidualCovariance& rc) {
    return functional_variance(conventional_functional(fit), rc);
}

inline double cross_period_intercept_covariance(const SideFit& fit_s, const SideFit& fit_t,
                                                const ResidualCovariance& rc, SamplingScheme scheme) {
    if (scheme == SamplingScheme::CS) {
        throw Error(ErrorCategory::scheme, "cross-period covariance is undefined for repeated cross-sections");
    }
    return functional_covariance(conventional_functional(fit_s), conventional_functional(fit_t), rc);
}

/// Single-period jump variance; same-period sides share no units.
inline double discontinuity_variance(const PeriodDiscontinuity& d, const ResidualCovariance& rc, Estimator est) {
    return functional_variance(d.functional(Side::above, est), rc) +
           functional_variance(d.functional(Side::below, est), rc);
}

/// Cov(D_s, D_t) under the declared sampling scheme.
inline double discontinuity_covariance(const PeriodDiscontinuity& ds, const PeriodDiscontinuity& dt,
                                       const ResidualCovariance& rc, SamplingScheme scheme, Estimator est) {
    if (ds.period == dt.period) return discontinuity_variance(ds, rc, est);
    if (scheme == SamplingScheme::CS) return 0.0;
    auto cov = [&](Side a, Side b) { return functional_covariance(ds.functional(a, est), dt.functional(b, est), rc); };
    const double same_side = cov(Side::above, Side::above) + cov(Side::below, Side::below);
    if (scheme == SamplingScheme::PC) return same_side;
    return same_side - cov(Side::above, Side::below) - cov(Side::below, Side::above);
}

/// Variance of sum_t c_t D_t using the scheme-appropriate covariance matrix.
inline double linear_combination_variance(const std::map<int, double>& coefficients,
                                          const std::map<int, PeriodDiscontinuity>& discs,
                                          const ResidualCovariance& rc, SamplingScheme scheme, Estimator est) {
    std::vector<std::pair<const PeriodDiscontinuity*, double>> terms;
    for (const auto& [t, c] : coefficients) {
        auto it = discs.find(t);
        if (it == discs.end()) throw Error(ErrorCategory::validation, "no discontinuity for period " + std::to_string(t));
        terms.emplace_back(&it->second, c);
    }
    double v = 0.0;
    for (std::size_t a = 0; a < terms.size(); ++a) {
        v += terms[a].second * terms[a].second * discontinuity_variance(*terms[a].first, rc, est);
        for (std::size_t b = a + 1; b < terms.size(); ++b) {
            v += 2.0 * terms[a].second * terms[b].second *
                 discontinuity_covariance(*terms[a].first, *terms[b].first, rc, scheme, est);
        }
    }
    return v;
}

/// Variance of D_target - sum_t pi_t D_t under CS, PC or PV sampling.
inline double aggregate_variance(const std::map<int, PeriodDiscontinuity>& discs, const std::map<int, double>& weights,
                                 int target_period, SamplingScheme scheme, Estimator est,
                                 const ResidualCovariance& rc) {
    double total = 0.0;
    for (const auto& [t, w] : weights) {
        if (t == target_period) throw Error(ErrorCategory::config, "target period cannot carry a comparison weight");
        if (!(w >= 0.0)) throw Error(ErrorCategory::config, "comparison weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCategory::config, "comparison weights must sum to 1");

    std::map<int, double> coefficients{{target_period, 1.0}};
    for (const auto& [t, w] : weights) coefficients[t] = -w;
    const double v = linear_combination_variance(coefficients, discs, rc, scheme, est);
    if (!(v > 0.0)) {
        throw Error(ErrorCategory::variance, "assembled " + std::string(scheme_name(scheme)) + " variance is " +
                                                 std::to_string(v) + "; check the sampling scheme declaration");
    }
    return v;
}

}  // namespace rddid
