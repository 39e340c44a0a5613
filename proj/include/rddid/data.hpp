#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rddid/error.hpp"

namespace rddid {

/// Index into PanelDataset::unit_labels.
struct UnitId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(UnitId, UnitId) = default;
};

enum class Side { below, above };
enum class SamplingScheme { CS, PC, PV };
enum class Design { sharp, fuzzy };
/// Which column a local fit regresses on the running variable.
enum class Target { outcome, treatment };

constexpr std::string_view scheme_name(SamplingScheme s) noexcept {
    switch (s) {
        case SamplingScheme::CS: return "CS";
        case SamplingScheme::PC: return "PC";
        case SamplingScheme::PV: return "PV";
    }
    return "?";
}

inline SamplingScheme parse_scheme(std::string_view name) {
    if (name == "CS") return SamplingScheme::CS;
    if (name == "PC") return SamplingScheme::PC;
    if (name == "PV") return SamplingScheme::PV;
    throw Error(ErrorCategory::config, "unknown sampling scheme '" + std::string(name) + "' (expected CS, PC or PV)");
}

constexpr std::string_view side_name(Side s) noexcept { return s == Side::above ? "above" : "below"; }

struct Observation {
    UnitId unit;
    int period = 0;
    double running = 0.0;
    int treated = 0;
    double outcome = 0.0;

    double response(Target t) const noexcept { return t == Target::outcome ? outcome : static_cast<double>(treated); }
};

/// Period sets: all-untreated, all-treated, RD-assigned, and the target RD period.
struct PeriodTaxonomy {
    std::set<int> untreated;
    std::set<int> treated;
    std::set<int> rd;
    int target = 0;

    bool is_pure(int period) const { return untreated.contains(period) || treated.contains(period); }
};

struct PanelDataset {
    std::vector<Observation> observations;
    std::vector<std::string> unit_labels;
    double cutoff = 0.0;
    PeriodTaxonomy taxonomy;
    SamplingScheme sampling = SamplingScheme::CS;
    Design design = Design::sharp;

    UnitId intern(std::string_view label) {
        auto it = label_index_.find(std::string(label));
        if (it != label_index_.end()) return it->second;
        UnitId id{static_cast<std::uint32_t>(unit_labels.size())};
        unit_labels.emplace_back(label);
        label_index_.emplace(unit_labels.back(), id);
        return id;
    }

    void add(std::string_view label, int period, double running, int treated, double outcome) {
        observations.push_back(Observation{intern(label), period, running, treated, outcome});
    }

    const std::string& label(UnitId u) const { return unit_labels.at(u.value); }

    std::set<int> periods() const {
        std::set<int> out;
        for (const auto& o : observations) out.insert(o.period);
        return out;
    }

    /// Observations of one period, in dataset order.
    std::vector<Observation> period_observations(int period) const {
        std::vector<Observation> out;
        for (const auto& o : observations) {
            if (o.period == period) out.push_back(o);
        }
        return out;
    }

    bool is_panel() const noexcept { return sampling != SamplingScheme::CS; }

private:
    std::unordered_map<std::string, UnitId> label_index_;
};

struct Violation {
    std::string rule;
    std::optional<std::string> unit;
    std::optional<int> period;
    std::string detail;
};

namespace detail {
inline std::string describe(const Violation& v) {
    std::string s = v.rule;
    if (v.unit) s += " [unit " + *v.unit + "]";
    if (v.period) s += " [period " + std::to_string(*v.period) + "]";
    if (!v.detail.empty()) s += ": " + v.detail;
    return s;
}
}  // namespace detail

/// Checks dataset invariants; returns one record per violation, empty when well-formed.
inline std::vector<Violation> validate(const PanelDataset& ds) {
    std::vector<Violation> out;
    const auto& tax = ds.taxonomy;
    const auto present = ds.periods();

    auto overlap = [&](const std::set<int>& a, const std::set<int>& b, std::string_view names) {
        for (int t : a) {
            if (b.contains(t)) out.push_back({"period sets overlap", std::nullopt, t, std::string(names)});
        }
    };
    overlap(tax.untreated, tax.treated, "all-untreated and all-treated");
    overlap(tax.untreated, tax.rd, "all-untreated and RD");
    overlap(tax.treated, tax.rd, "all-treated and RD");
    if (!tax.rd.contains(tax.target)) {
        out.push_back({"target period not an RD period", std::nullopt, tax.target, ""});
    }
    for (const auto* set : {&tax.untreated, &tax.treated, &tax.rd}) {
        for (int t : *set) {
            if (!present.contains(t)) out.push_back({"taxonomy period has no observations", std::nullopt, t, ""});
        }
    }

    std::set<std::pair<std::uint32_t, int>> seen;
    std::map<std::uint32_t, double> pc_running;
    for (const auto& o : ds.observations) {
        const std::string& lbl = ds.label(o.unit);
        if (!seen.emplace(o.unit.value, o.period).second) {
            out.push_back({"duplicate unit-period", lbl, o.period, ""});
        }
        if (!std::isfinite(o.running)) out.push_back({"non-finite running value", lbl, o.period, ""});
        if (!std::isfinite(o.outcome)) out.push_back({"non-finite outcome", lbl, o.period, ""});
        if (o.treated != 0 && o.treated != 1) {
            out.push_back({"treatment not binary", lbl, o.period, std::to_string(o.treated)});
            continue;
        }
        if (tax.untreated.contains(o.period) && o.treated == 1) {
            out.push_back({"treated unit in all-untreated period", lbl, o.period, ""});
        }
        if (tax.treated.contains(o.period) && o.treated == 0) {
            out.push_back({"untreated unit in all-treated period", lbl, o.period, ""});
        }
        if (ds.design == Design::sharp && tax.rd.contains(o.period)) {
            const int expected = o.running >= ds.cutoff ? 1 : 0;
            if (o.treated != expected) {
                out.push_back({"treatment inconsistent with sharp assignment", lbl, o.period, ""});
            }
        }
        if (ds.sampling == SamplingScheme::PC) {
            auto [it, inserted] = pc_running.emplace(o.unit.value, o.running);
            if (!inserted && it->second != o.running) {
                out.push_back({"running variable varies under PC", lbl, o.period, ""});
            }
        }
    }
    return out;
}

/// Observations of `period` on one side of the cutoff; ties at the cutoff go above.
inline std::vector<Observation> side_slice(const PanelDataset& ds, int period, Side side) {
    std::vector<Observation> out;
    bool any = false;
    for (const auto& o : ds.observations) {
        if (o.period != period) continue;
        any = true;
        const bool above = o.running >= ds.cutoff;
        if (above == (side == Side::above)) out.push_back(o);
    }
    if (!any) throw Error(ErrorCategory::validation, "unknown or empty period " + std::to_string(period));
    return out;
}

}  // namespace rddid
