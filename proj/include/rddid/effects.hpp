#pragma once

// Aggregation of per-period jumps into local ATT/ATU estimates, fuzzy-design
// estimands, and the equivalence / difference tests used for falsification.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rddid/covariance.hpp"
#include "rddid/data.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/period_effects.hpp"
#include "rddid/stats.hpp"

namespace rddid {

struct EffectEstimate {
    Estimand estimand = Estimand::ATT;
    Design design = Design::sharp;
    Trend trend = Trend::constant;
    SamplingScheme scheme = SamplingScheme::CS;
    int target_period = 0;
    double alpha = 0.05;

    double point = 0.0;
    double bias_corrected_point = 0.0;
    double se = 0.0;
    double se_bc = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double ci_bc_lower = 0.0;
    double ci_bc_upper = 0.0;
    double z_stat = 0.0;
    double z_stat_bc = 0.0;

    std::optional<double> slope;
    std::optional<double> slope_bc;
    /// lambda_t with g(target) = sum_t lambda_t D_t, per comparison set.
    std::map<int, double> comparison_coefficients;
    std::map<int, double> jumps;
    std::map<int, double> jumps_bc;
    bool approximate_se = false;
    std::vector<std::string> notes;
};

/// Coefficients that map comparison-period jumps onto the trend-extrapolated
/// bias at the target period, plus (for linear trends) slope coefficients.
struct TrendProjection {
    std::map<int, double> level;
    std::map<int, double> slope;
};

inline double apply_coefficients(const std::map<int, double>& coefficients, const std::map<int, double>& jumps) {
    double acc = 0.0;
    for (const auto& [t, c] : coefficients) acc += c * jumps.at(t);
    return acc;
}

/// Least-squares line through (t, D_t) evaluated at the target period. With two
/// periods this is D_t2 + (target - t2)(D_t2 - D_t1)/(t2 - t1).
inline TrendProjection linear_projection(const std::set<int>& periods, int target) {
    if (periods.size() < 2) {
        throw Error(ErrorCategory::taxonomy, "a linear trend needs at least two comparison periods");
    }
    const double k = static_cast<double>(periods.size());
    double mean = 0.0;
    for (int t : periods) mean += t;
    mean /= k;
    double sxx = 0.0;
    for (int t : periods) sxx += (t - mean) * (t - mean);
    TrendProjection out;
    for (int t : periods) {
        const double dev = t - mean;
        out.slope[t] = dev / sxx;
        out.level[t] = 1.0 / k + (target - mean) * dev / sxx;
    }
    return out;
}

inline TrendProjection constant_projection(const std::map<int, double>& weights) {
    return TrendProjection{weights, {}};
}

/// Comparison-set jump table fed to the estimand-specific aggregators.
struct JumpTable {
    int target_period = 0;
    double target = 0.0;
    std::map<int, double> untreated;  // all-untreated periods
    std::map<int, double> treated;    // all-treated periods
};

/// Sharp-design point estimate from a jump table: D_target minus the
/// trend-extrapolated comparison jump from the set matching the estimand.
inline double sharp_effect(const JumpTable& table, Estimand estimand, const TrendProjection& projection) {
    const auto& comparison = estimand == Estimand::ATT ? table.untreated : table.treated;
    return table.target - apply_coefficients(projection.level, comparison);
}

/// Fuzzy-design point estimate given the extrapolated untreated (g0) and
/// treated (g1) comparison jumps.
inline double fuzzy_effect(Estimand estimand, double dy_target, double dw_target, double g0, double g1,
                           double p_below, double p_above) {
    const double p = estimand == Estimand::ATT ? p_below : p_above;
    return dy_target / dw_target - (g0 * (1.0 - p) + g1 * p) / dw_target;
}

namespace detail {

inline std::set<int> comparison_set(const PeriodTaxonomy& tax, Estimand estimand) {
    return estimand == Estimand::ATT ? tax.untreated : tax.treated;
}

inline void require_target(const PanelDataset& ds) {
    if (!ds.taxonomy.rd.contains(ds.taxonomy.target)) {
        throw Error(ErrorCategory::taxonomy, "target period " + std::to_string(ds.taxonomy.target) +
                                                 " is not an RD period");
    }
}

inline std::map<int, PeriodDiscontinuity> fit_periods(const PanelDataset& ds, const std::set<int>& periods,
                                                      const FitSpec& spec, Target target = Target::outcome) {
    std::map<int, PeriodDiscontinuity> out;
    for (int t : periods) out.emplace(t, bc_discontinuity(ds, t, spec, target));
    return out;
}

/// Minimises Var(D_target - sum pi_t D_t) over the simplex by enumerating
/// active sets of the equality-constrained problem.
inline std::map<int, double> min_variance_weights(const std::set<int>& comparison, int target,
                                                  const std::map<int, PeriodDiscontinuity>& discs,
                                                  const ResidualCovariance& rc, SamplingScheme scheme) {
    const std::vector<int> periods(comparison.begin(), comparison.end());
    const auto k = static_cast<int>(periods.size());
    if (k > 16) throw Error(ErrorCategory::config, "variance-minimising weights support at most 16 periods");
    Eigen::MatrixXd s(k, k);
    Eigen::VectorXd g(k);
    const auto& dt = discs.at(target);
    for (int i = 0; i < k; ++i) {
        g[i] = discontinuity_covariance(dt, discs.at(periods[i]), rc, scheme, Estimator::conventional);
        for (int j = 0; j < k; ++j) {
            s(i, j) = discontinuity_covariance(discs.at(periods[i]), discs.at(periods[j]), rc, scheme,
                                               Estimator::conventional);
        }
    }
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_pi;
    std::vector<int> best_idx;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < k; ++i) {
            if (mask & (1u << i)) idx.push_back(i);
        }
        const auto m = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
        Eigen::VectorXd rhs(m + 1);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = 2.0 * s(idx[a], idx[b]);
            kkt(a, m) = kkt(m, a) = 1.0;
            rhs[a] = 2.0 * g[idx[a]];
        }
        rhs[m] = 1.0;
        Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        Eigen::VectorXd pi = sol.head(m);
        if (!pi.allFinite() || pi.minCoeff() < -1e-12) continue;
        double obj = 0.0;
        for (Eigen::Index a = 0; a < m; ++a) {
            obj -= 2.0 * pi[a] * g[idx[a]];
            for (Eigen::Index b = 0; b < m; ++b) obj += pi[a] * pi[b] * s(idx[a], idx[b]);
        }
        if (obj < best) {
            best = obj;
            best_pi = pi.cwiseMax(0.0);
            best_idx = idx;
        }
    }
    if (best_idx.empty()) throw Error(ErrorCategory::variance, "no feasible variance-minimising weights");
    std::map<int, double> out;
    for (int t : periods) out[t] = 0.0;
    const double total = best_pi.sum();
    for (std::size_t a = 0; a < best_idx.size(); ++a) out[periods[best_idx[a]]] = best_pi[a] / total;
    return out;
}

}  // namespace detail

/// Comparison-period weights pi_t for a constant trend.
inline std::map<int, double> resolve_weights(const FitSpec& spec, const std::set<int>& comparison, int target,
                                             const std::map<int, PeriodDiscontinuity>* discs = nullptr,
                                             const ResidualCovariance* rc = nullptr) {
    if (comparison.empty()) throw Error(ErrorCategory::taxonomy, "empty comparison set");
    std::map<int, double> out;
    switch (spec.weight_rule) {
        case WeightRule::uniform:
            for (int t : comparison) out[t] = 1.0 / static_cast<double>(comparison.size());
            break;
        case WeightRule::nearest: {
            // Ties resolve to the later period.
            int best = *comparison.begin();
            for (int t : comparison) {
                if (std::abs(t - target) <= std::abs(best - target)) best = t;
            }
            for (int t : comparison) out[t] = t == best ? 1.0 : 0.0;
            break;
        }
        case WeightRule::explicit_map: {
            double total = 0.0;
            for (int t : comparison) {
                auto it = spec.weights.find(t);
                const double w = it == spec.weights.end() ? 0.0 : it->second;
                if (!(w >= 0.0)) throw Error(ErrorCategory::config, "weights must be nonnegative");
                out[t] = w;
                total += w;
            }
            if (std::abs(total - 1.0) > 1e-9) {
                throw Error(ErrorCategory::config, "weights over the comparison set must sum to 1");
            }
            break;
        }
        case WeightRule::min_variance:
            if (!discs || !rc) throw Error(ErrorCategory::config, "variance-minimising weights need fitted periods");
            out = detail::min_variance_weights(comparison, target, *discs, *rc, spec.scheme);
            break;
    }
    return out;
}

namespace detail {

inline void fill_inference(EffectEstimate& e, double var, double var_bc) {
    if (!(var > 0.0) || !(var_bc > 0.0)) {
        throw Error(ErrorCategory::variance, "assembled " + std::string(scheme_name(e.scheme)) +
                                                 " variance is not positive; check the sampling scheme declaration");
    }
    const double z = normal_quantile(1.0 - e.alpha / 2.0);
    e.se = std::sqrt(var);
    e.se_bc = std::sqrt(var_bc);
    e.ci_lower = e.point - z * e.se;
    e.ci_upper = e.point + z * e.se;
    e.ci_bc_lower = e.bias_corrected_point - z * e.se_bc;
    e.ci_bc_upper = e.bias_corrected_point + z * e.se_bc;
    e.z_stat = e.point / e.se;
    e.z_stat_bc = e.bias_corrected_point / e.se_bc;
}

inline EffectEstimate sharp_estimate(const PanelDataset& ds, const FitSpec& spec, Trend trend) {
    spec.check();
    require_target(ds);
    if (spec.design != Design::sharp) throw Error(ErrorCategory::config, "sharp estimator called with a fuzzy design");
    const int target = ds.taxonomy.target;
    const auto comparison = comparison_set(ds.taxonomy, spec.estimand);
    if (comparison.empty()) {
        throw Error(ErrorCategory::taxonomy, std::string(estimand_name(spec.estimand)) + " needs a nonempty " +
                                                 (spec.estimand == Estimand::ATT ? "all-untreated" : "all-treated") +
                                                 " period set");
    }
    std::set<int> all = comparison;
    all.insert(target);
    const auto discs = fit_periods(ds, all, spec);
    const ResidualCovariance rc(discs);

    TrendProjection projection = trend == Trend::constant
                                     ? constant_projection(resolve_weights(spec, comparison, target, &discs, &rc))
                                     : linear_projection(comparison, target);

    JumpTable table{target, discs.at(target).conventional, {}, {}};
    JumpTable table_bc{target, discs.at(target).bias_corrected, {}, {}};
    auto& comp = spec.estimand == Estimand::ATT ? table.untreated : table.treated;
    auto& comp_bc = spec.estimand == Estimand::ATT ? table_bc.untreated : table_bc.treated;
    for (int t : comparison) {
        comp[t] = discs.at(t).conventional;
        comp_bc[t] = discs.at(t).bias_corrected;
    }

    EffectEstimate e;
    e.estimand = spec.estimand;
    e.design = Design::sharp;
    e.trend = trend;
    e.scheme = spec.scheme;
    e.target_period = target;
    e.alpha = spec.alpha;
    e.point = sharp_effect(table, spec.estimand, projection);
    e.bias_corrected_point = sharp_effect(table_bc, spec.estimand, projection);
    e.comparison_coefficients = projection.level;
    if (trend == Trend::linear) {
        e.slope = apply_coefficients(projection.slope, comp);
        e.slope_bc = apply_coefficients(projection.slope, comp_bc);
    }
    for (const auto& [t, d] : discs) {
        e.jumps[t] = d.conventional;
        e.jumps_bc[t] = d.bias_corrected;
    }

    double var = 0.0;
    double var_bc = 0.0;
    if (trend == Trend::constant) {
        var = aggregate_variance(discs, projection.level, target, spec.scheme, Estimator::conventional, rc);
        var_bc = aggregate_variance(discs, projection.level, target, spec.scheme, Estimator::bias_corrected, rc);
    } else {
        std::map<int, double> c{{target, 1.0}};
        for (const auto& [t, l] : projection.level) c[t] = -l;
        var = linear_combination_variance(c, discs, rc, spec.scheme, Estimator::conventional);
        var_bc = linear_combination_variance(c, discs, rc, spec.scheme, Estimator::bias_corrected);
    }
    fill_inference(e, var, var_bc);
    return e;
}

}  // namespace detail

/// Effect under discontinuities constant across comparison periods.
inline EffectEstimate estimate_constant(const PanelDataset& ds, const FitSpec& spec) {
    return detail::sharp_estimate(ds, spec, Trend::constant);
}

/// Effect under discontinuities linear in time, extrapolated to the target.
inline EffectEstimate estimate_linear(const PanelDataset& ds, const FitSpec& spec) {
    return detail::sharp_estimate(ds, spec, Trend::linear);
}

inline constexpr double kWeakFirstStage = 0.05;

/// Fuzzy-design estimand. The standard error comes from the delta method with
/// the outcome-treatment covariance set to zero and is flagged approximate.
inline EffectEstimate estimate_fuzzy(const PanelDataset& ds, const FitSpec& spec) {
    spec.check();
    detail::require_target(ds);
    const auto& tax = ds.taxonomy;
    if (tax.untreated.empty() || tax.treated.empty()) {
        throw Error(ErrorCategory::taxonomy, "fuzzy designs need both all-untreated and all-treated periods");
    }
    const int target = tax.target;
    std::set<int> all = tax.untreated;
    all.insert(tax.treated.begin(), tax.treated.end());
    all.insert(target);
    const auto discs = detail::fit_periods(ds, all, spec);
    const ResidualCovariance rc(discs);
    const auto w = bc_discontinuity(ds, target, spec, Target::treatment);
    ResidualCovariance rc_w;
    rc_w.add_period(target, w.residuals);

    auto projection_for = [&](const std::set<int>& set) {
        if (spec.trend == Trend::linear) return linear_projection(set, target);
        return constant_projection(resolve_weights(spec, set, target, &discs, &rc));
    };
    const auto proj0 = projection_for(tax.untreated);
    const auto proj1 = projection_for(tax.treated);

    EffectEstimate e;
    e.estimand = spec.estimand;
    e.design = Design::fuzzy;
    e.trend = spec.trend;
    e.scheme = spec.scheme;
    e.target_period = target;
    e.alpha = spec.alpha;
    e.approximate_se = true;
    e.notes.push_back("fuzzy standard errors use the delta method with zero outcome-treatment covariance");
    e.notes.insert(e.notes.end(), w.warnings.begin(), w.warnings.end());

    std::map<int, double> jumps;
    std::map<int, double> jumps_bc;
    for (const auto& [t, d] : discs) {
        jumps[t] = d.conventional;
        jumps_bc[t] = d.bias_corrected;
    }
    e.jumps = jumps;
    e.jumps_bc = jumps_bc;
    for (const auto& [t, l] : proj0.level) e.comparison_coefficients[t] = l;
    for (const auto& [t, l] : proj1.level) e.comparison_coefficients[t] = l;

    auto evaluate = [&](const std::map<int, double>& j, double dw, double p_below, double p_above, Estimator est,
                        double& point) {
        if (std::abs(dw) < kWeakFirstStage) {
            throw Error(ErrorCategory::weak_first_stage,
                        "treatment-probability jump " + std::to_string(dw) + " is below " +
                            std::to_string(kWeakFirstStage) + " in magnitude");
        }
        const double g0 = apply_coefficients(proj0.level, j);
        const double g1 = apply_coefficients(proj1.level, j);
        point = fuzzy_effect(spec.estimand, j.at(target), dw, g0, g1, p_below, p_above);
        const double p = spec.estimand == Estimand::ATT ? p_below : p_above;

        std::map<int, double> c{{target, 1.0 / dw}};
        for (const auto& [t, l] : proj0.level) c[t] -= (1.0 - p) * l / dw;
        for (const auto& [t, l] : proj1.level) c[t] -= p * l / dw;
        const double var_y = linear_combination_variance(c, discs, rc, spec.scheme, est);

        // d(point)/d(p_above), d(point)/d(p_below); the probability in the
        // numerator contributes (g0 - g1)/dw on its own side.
        double grad_above = -point / dw;
        double grad_below = point / dw;
        (spec.estimand == Estimand::ATT ? grad_below : grad_above) += (g0 - g1) / dw;
        const double var_w = grad_above * grad_above * functional_variance(w.functional(Side::above, est), rc_w) +
                             grad_below * grad_below * functional_variance(w.functional(Side::below, est), rc_w);
        return var_y + var_w;
    };

    const double var = evaluate(jumps, w.conventional, w.intercept_below, w.intercept_above,
                                Estimator::conventional, e.point);
    const double var_bc = evaluate(jumps_bc, w.bias_corrected, w.bc_intercept_below, w.bc_intercept_above,
                                   Estimator::bias_corrected, e.bias_corrected_point);
    if (spec.trend == Trend::linear) {
        e.slope = apply_coefficients(proj0.slope, jumps);
        e.slope_bc = apply_coefficients(proj0.slope, jumps_bc);
    }
    detail::fill_inference(e, var, var_bc);
    return e;
}

/// Dispatches on design and trend.
inline EffectEstimate estimate(const PanelDataset& ds, const FitSpec& spec) {
    if (spec.design == Design::fuzzy) return estimate_fuzzy(ds, spec);
    return spec.trend == Trend::constant ? estimate_constant(ds, spec) : estimate_linear(ds, spec);
}

// ---------------------------------------------------------------------------
// Falsification tests

struct TostResult {
    double difference = 0.0;
    double t_lower = 0.0;
    double t_upper = 0.0;
    double critical = 0.0;
    double minimal_delta = 0.0;
    bool reject_equivalence_null = false;
};

/// Two one-sided tests of H0: |d2 - d1| > delta. Both tests reject exactly when
/// delta >= |d2 - d1| + z_{1-alpha} * se, which is evaluated directly so the
/// boundary is inclusive without rounding drift.
inline TostResult tost_equivalence(double d1, double d2, double se_diff, double delta, double alpha) {
    if (!(se_diff > 0.0)) throw Error(ErrorCategory::config, "standard error of the difference must be positive");
    if (!(delta >= 0.0)) throw Error(ErrorCategory::config, "equivalence margin must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::config, "alpha must lie in (0, 1)");
    TostResult r;
    r.difference = d2 - d1;
    r.critical = normal_quantile(1.0 - alpha);
    r.t_upper = (r.difference - delta) / se_diff;
    r.t_lower = (r.difference + delta) / se_diff;
    r.minimal_delta = std::abs(r.difference) + r.critical * se_diff;
    r.reject_equivalence_null = delta >= r.minimal_delta;
    return r;
}

struct DifferenceTest {
    double difference = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
};

/// Two-sided z test of equal discontinuities.
inline DifferenceTest difference_test(double d1, double d2, double se_diff) {
    if (!(se_diff > 0.0)) throw Error(ErrorCategory::config, "standard error of the difference must be positive");
    DifferenceTest r;
    r.difference = d2 - d1;
    r.t_stat = r.difference / se_diff;
    r.p_value = two_sided_p_value(r.t_stat);
    return r;
}

/// Jumps of two comparison periods and the scheme-aware SE of their difference.
struct PairedJumps {
    int first = 0;
    int second = 0;
    double d1 = 0.0;
    double d2 = 0.0;
    double se_diff = 0.0;
};

inline PairedJumps paired_jumps(const PanelDataset& ds, int first, int second, const FitSpec& spec,
                                Estimator est = Estimator::conventional) {
    spec.check();
    const auto discs = detail::fit_periods(ds, {first, second}, spec);
    const ResidualCovariance rc(discs);
    PairedJumps out;
    out.first = first;
    out.second = second;
    out.d1 = discs.at(first).value(est);
    out.d2 = discs.at(second).value(est);
    const double v = linear_combination_variance({{first, -1.0}, {second, 1.0}}, discs, rc, spec.scheme, est);
    if (!(v > 0.0)) throw Error(ErrorCategory::variance, "variance of the jump difference is not positive");
    out.se_diff = std::sqrt(v);
    return out;
}

// ---------------------------------------------------------------------------
// Event study

struct EventStudyRow {
    int period = 0;
    bool ok = false;
    std::string error;
    double conventional = 0.0;
    double bias_corrected = 0.0;
    double se = 0.0;
    double se_bc = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double ci_bc_lower = 0.0;
    double ci_bc_upper = 0.0;
};

/// One row per period; fit failures are flagged rather than dropped.
inline std::vector<EventStudyRow> event_study(const PanelDataset& ds, const FitSpec& spec) {
    spec.check();
    const double z = normal_quantile(1.0 - spec.alpha / 2.0);
    std::vector<EventStudyRow> rows;
    for (int t : ds.periods()) {
        EventStudyRow row;
        row.period = t;
        try {
            const auto d = bc_discontinuity(ds, t, spec);
            ResidualCovariance rc;
            rc.add_period(t, d.residuals);
            row.conventional = d.conventional;
            row.bias_corrected = d.bias_corrected;
            row.se = std::sqrt(discontinuity_variance(d, rc, Estimator::conventional));
            row.se_bc = std::sqrt(discontinuity_variance(d, rc, Estimator::bias_corrected));
            row.ci_lower = row.conventional - z * row.se;
            row.ci_upper = row.conventional + z * row.se;
            row.ci_bc_lower = row.bias_corrected - z * row.se_bc;
            row.ci_bc_upper = row.bias_corrected + z * row.se_bc;
            row.ok = true;
        } catch (const Error& err) {
            row.error = err.what();
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rddid
