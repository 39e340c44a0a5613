#pragma once

// Diagnostics for running variables that change over time.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "rddid/covariance.hpp"
#include "rddid/data.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/period_effects.hpp"

namespace rddid {

namespace detail {

inline void require_panel(const PanelDataset& ds, const char* what) {
    if (!ds.is_panel()) {
        throw Error(ErrorCategory::scheme, std::string(what) + " requires panel data (PC or PV), got CS");
    }
}

inline std::unordered_map<std::uint32_t, double> running_by_unit(const PanelDataset& ds, int period) {
    std::unordered_map<std::uint32_t, double> out;
    for (const auto& o : ds.observations) {
        if (o.period == period) out.emplace(o.unit.value, o.running);
    }
    if (out.empty()) throw Error(ErrorCategory::validation, "unknown or empty period " + std::to_string(period));
    return out;
}

/// Period-t observations with the running value replaced by the unit's
/// period-s value. Units absent from period s are dropped. Order follows period t.
inline std::vector<Observation> reclassified(const PanelDataset& ds, int running_period, int outcome_period) {
    const auto r = running_by_unit(ds, running_period);
    std::vector<Observation> out;
    for (const auto& o : ds.observations) {
        if (o.period != outcome_period) continue;
        auto it = r.find(o.unit.value);
        if (it == r.end()) continue;
        Observation x = o;
        x.running = it->second;
        out.push_back(x);
    }
    if (out.empty()) {
        throw Error(ErrorCategory::validation, "no units matched between periods " + std::to_string(running_period) +
                                                   " and " + std::to_string(outcome_period));
    }
    return out;
}

}  // namespace detail

/// Jump in period-t outcomes at the cutoff when units are classified and
/// localized by their period-s running values.
inline double cross_period_discontinuity(const PanelDataset& ds, int running_period, int outcome_period,
                                         const FitSpec& spec) {
    detail::require_panel(ds, "cross-period discontinuity");
    const auto obs = detail::reclassified(ds, running_period, outcome_period);
    return discontinuity(obs, ds.cutoff, spec, outcome_period);
}

struct CompositionEstimate {
    int outcome_period = 0;
    int alt_running_period = 0;
    double point = 0.0;
    double se = 0.0;
    double jump_alt = 0.0;       // outcome period, running from the alternative period
    double jump_baseline = 0.0;  // outcome and running both from the outcome period
    std::vector<std::string> notes;
};

/// Change in the outcome-period jump caused by reclassifying units with the
/// alternative period's running variable. The two jumps share units, so the
/// variance includes their cross terms with side-crossing pairs subtracted.
inline CompositionEstimate composition_effect(const PanelDataset& ds, int outcome_period, int alt_running_period,
                                              const FitSpec& spec) {
    spec.check();
    detail::require_panel(ds, "composition effect");
    if (ds.taxonomy.rd.contains(outcome_period)) {
        throw Error(ErrorCategory::taxonomy, "outcome period " + std::to_string(outcome_period) +
                                                 " is an RD period; its outcomes are not a single potential outcome");
    }
    const auto alt_obs = detail::reclassified(ds, alt_running_period, outcome_period);
    const auto base_obs = detail::reclassified(ds, outcome_period, outcome_period);

    // Two pseudo-periods keyed 0 and 1 so the residual store keeps them apart.
    auto alt = bc_discontinuity(alt_obs, ds.cutoff, spec, outcome_period);
    auto base = bc_discontinuity(base_obs, ds.cutoff, spec, outcome_period);
    auto rekey = [](PeriodDiscontinuity& d, int key) {
        d.period = key;
        for (auto* f : {&d.conv_above, &d.conv_below, &d.bc_above, &d.bc_below}) f->period = key;
    };
    rekey(alt, 1);
    rekey(base, 0);
    std::map<int, PeriodDiscontinuity> discs;
    discs.emplace(0, std::move(base));
    discs.emplace(1, std::move(alt));
    const ResidualCovariance rc(discs);

    CompositionEstimate out;
    out.outcome_period = outcome_period;
    out.alt_running_period = alt_running_period;
    out.jump_alt = discs.at(1).conventional;
    out.jump_baseline = discs.at(0).conventional;
    out.point = out.jump_alt - out.jump_baseline;
    const double v =
        linear_combination_variance({{1, 1.0}, {0, -1.0}}, discs, rc, SamplingScheme::PV, Estimator::conventional);
    out.se = v > 0.0 ? std::sqrt(v) : 0.0;
    if (out.point == 0.0 && v <= 0.0) {
        out.notes.push_back("classification is identical in both periods; the composition effect is zero");
    } else if (v <= 0.0) {
        throw Error(ErrorCategory::variance, "composition-effect variance is not positive");
    }
    return out;
}

struct SwitcherSummary {
    std::size_t total_units = 0;
    std::size_t switchers = 0;
    std::size_t upward = 0;    // below in period a, above in period b
    std::size_t downward = 0;  // above in period a, below in period b
    std::vector<std::string> switcher_ids;
};

inline SwitcherSummary switcher_summary(const PanelDataset& ds, int period_a, int period_b) {
    detail::require_panel(ds, "switcher summary");
    const auto ra = detail::running_by_unit(ds, period_a);
    SwitcherSummary s;
    for (const auto& o : ds.observations) {
        if (o.period != period_b) continue;
        auto it = ra.find(o.unit.value);
        if (it == ra.end()) continue;
        ++s.total_units;
        const bool above_a = it->second >= ds.cutoff;
        const bool above_b = o.running >= ds.cutoff;
        if (above_a == above_b) continue;
        ++(above_b ? s.upward : s.downward);
        s.switcher_ids.push_back(ds.label(o.unit));
    }
    s.switchers = s.upward + s.downward;
    std::sort(s.switcher_ids.begin(), s.switcher_ids.end());
    return s;
}

/// Units whose side of the cutoff differs between any two of their periods.
inline std::set<std::uint32_t> switcher_units(const PanelDataset& ds) {
    std::set<std::uint32_t> out;
    if (!ds.is_panel()) return out;
    std::unordered_map<std::uint32_t, int> side;  // bit 0 below, bit 1 above
    for (const auto& o : ds.observations) side[o.unit.value] |= o.running >= ds.cutoff ? 2 : 1;
    for (const auto& [u, bits] : side) {
        if (bits == 3) out.insert(u);
    }
    return out;
}

struct DensityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count_all = 0;
    std::size_t count = 0;  // after switcher omission when requested
};

/// Histogram of one period's running values on bins [c + k w, c + (k+1) w).
/// Bins run from the lowest to the highest occupied bin, empty ones included.
inline std::vector<DensityBin> density_export(const PanelDataset& ds, int period, double bin_width,
                                              bool omit_switchers) {
    if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
        throw Error(ErrorCategory::config, "histogram bin width must be positive");
    }
    const auto excluded = omit_switchers ? switcher_units(ds) : std::set<std::uint32_t>{};
    std::map<long long, DensityBin> bins;
    for (const auto& o : ds.observations) {
        if (o.period != period) continue;
        const auto k = static_cast<long long>(std::floor((o.running - ds.cutoff) / bin_width));
        auto& bin = bins[k];
        ++bin.count_all;
        if (!excluded.contains(o.unit.value)) ++bin.count;
    }
    std::vector<DensityBin> out;
    if (bins.empty()) return out;
    for (long long k = bins.begin()->first; k <= bins.rbegin()->first; ++k) {
        DensityBin b;
        if (auto it = bins.find(k); it != bins.end()) b = it->second;
        b.lower = ds.cutoff + static_cast<double>(k) * bin_width;
        b.upper = ds.cutoff + static_cast<double>(k + 1) * bin_width;
        out.push_back(b);
    }
    return out;
}

}  // namespace rddid
