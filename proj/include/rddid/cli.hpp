#pragma once

// Configuration parsing, command dispatch and result serialization for the
// rddid command-line tool.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rddid/composition.hpp"
#include "rddid/data.hpp"
#include "rddid/effects.hpp"
#include "rddid/error.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/io.hpp"
#include "rddid/simulate.hpp"

namespace rddid {

struct ConfigKey {
    std::string_view name;
    std::string_view help;
};

/// Every accepted configuration key. Anything else is rejected.
inline constexpr ConfigKey kConfigKeys[] = {
    {"input", "panel CSV path"},
    {"cutoff", "cutoff c (default 0)"},
    {"scheme", "sampling scheme: CS | PC | PV"},
    {"design", "sharp | fuzzy"},
    {"periods.untreated", "comma-separated all-untreated periods"},
    {"periods.treated", "comma-separated all-treated periods"},
    {"periods.rd", "comma-separated RD periods"},
    {"periods.target", "target RD period"},
    {"fit.p", "local polynomial order (default 1)"},
    {"fit.q", "pilot polynomial order (default 2)"},
    {"fit.h", "main bandwidth"},
    {"fit.b", "pilot bandwidth (default 2h)"},
    {"fit.h_by_period", "per-period bandwidths, e.g. 1999:500,2000:600"},
    {"fit.kernel", "uniform | triangular | epanechnikov"},
    {"fit.trend", "constant | linear"},
    {"fit.estimand", "ATT | ATU"},
    {"fit.weights", "uniform | nearest | min_variance | explicit map 1999:0.3,2000:0.7"},
    {"fit.alpha", "significance level (default 0.05)"},
    {"equivalence.first", "earlier comparison period"},
    {"equivalence.second", "later comparison period"},
    {"equivalence.delta", "equivalence margin (default 0.36 x outcome SD)"},
    {"equivalence.estimator", "conventional | bias_corrected"},
    {"composition.outcome_period", "period whose outcomes are used"},
    {"composition.running_period", "period whose running values reclassify units"},
    {"switchers.first", "first period"},
    {"switchers.second", "second period"},
    {"density.period", "period to histogram"},
    {"density.bin_width", "bin width; bins are aligned to the cutoff"},
    {"density.omit_switchers", "true | false"},
    {"simulate.grid", "cells dgp:n:h[:b], comma-separated, e.g. CS:1000:200,PC:1000:600"},
    {"simulate.reps", "replications per cell"},
    {"simulate.seed", "64-bit seed (required)"},
    {"simulate.threads", "worker threads (default 1)"},
    {"simulate.sample_out", "write the first cell's replication-0 dataset to this CSV"},
    {"simulate.jumps", "D1,D2 (default 63,-63)"},
    {"simulate.unit_fe", "mean,sd of the unit effect (default 155,117)"},
    {"simulate.time_fe", "period effects (default -46,0)"},
    {"simulate.noise_sd", "idiosyncratic error SD (default 40)"},
    {"simulate.pv_link", "slope,mean,sd of the PV running-variable link (default 0.97,153,410)"},
    {"simulate.poly_unit", "running-variable unit for polynomial coefficients (default 1000)"},
    {"simulate.poly.1.below", "five coefficients of r^1..r^5, period 1 below the cutoff"},
    {"simulate.poly.1.above", "five coefficients, period 1 above the cutoff"},
    {"simulate.poly.2.below", "five coefficients, period 2 below the cutoff"},
    {"simulate.poly.2.above", "five coefficients, period 2 above the cutoff"},
    {"output.path", "artifact destination (default standard output)"},
};

inline bool is_config_key(std::string_view key) {
    return std::any_of(std::begin(kConfigKeys), std::end(kConfigKeys), [&](const auto& k) { return k.name == key; });
}

class RunConfig {
public:
    void set(const std::string& key, const std::string& value) {
        if (!is_config_key(key)) throw Error(ErrorCategory::config, "unknown key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    std::string get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error(ErrorCategory::config, "missing required key '" + key + "'");
        return it->second;
    }
    std::string get(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    double real(const std::string& key) const { return to_real(key, get(key)); }
    double real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }
    long long integer(const std::string& key) const { return to_integer(key, get(key)); }
    long long integer(const std::string& key, long long fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw Error(ErrorCategory::config, key + ": expected true or false, got '" + v + "'");
    }
    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        for (auto part : detail::split(get(key), ',')) out.push_back(to_real(key, std::string(detail::trim(part))));
        return out;
    }
    std::set<int> periods(const std::string& key) const {
        std::set<int> out;
        if (!has(key) || detail::trim(get(key)).empty()) return out;
        for (auto part : detail::split(get(key), ',')) {
            out.insert(static_cast<int>(to_integer(key, std::string(detail::trim(part)))));
        }
        return out;
    }
    /// "t:value,t:value" pairs.
    std::map<int, double> period_map(const std::string& key) const {
        std::map<int, double> out;
        for (auto part : detail::split(get(key), ',')) {
            const auto kv = detail::split(detail::trim(part), ':');
            if (kv.size() != 2) throw Error(ErrorCategory::config, key + ": expected period:value pairs");
            const int t = static_cast<int>(to_integer(key, std::string(detail::trim(kv[0]))));
            if (!out.emplace(t, to_real(key, std::string(detail::trim(kv[1])))).second) {
                throw Error(ErrorCategory::config, key + ": period " + std::to_string(t) + " listed twice");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static double to_real(const std::string& key, const std::string& v) {
        std::string_view s = detail::trim(v);
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(out)) {
            throw Error(ErrorCategory::config, key + ": invalid number '" + v + "'");
        }
        return out;
    }
    static long long to_integer(const std::string& key, const std::string& v) {
        std::string_view s = detail::trim(v);
        long long out = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
            throw Error(ErrorCategory::config, key + ": invalid integer '" + v + "'");
        }
        return out;
    }

    std::map<std::string, std::string> values_;
};

/// Flat "key = value" lines; '#' starts a comment. Duplicate and unknown keys are errors.
inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCategory::config, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (!seen.insert(key).second) {
            throw Error(ErrorCategory::config, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        try {
            cfg.set(key, value);
        } catch (const Error&) {
            throw Error(ErrorCategory::config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open config '" + path + "'");
    return parse_config(in);
}

// ---------------------------------------------------------------------------
// Building library inputs from a configuration

inline FitSpec fit_spec_from(const RunConfig& cfg) {
    FitSpec spec;
    spec.p = static_cast<int>(cfg.integer("fit.p", 1));
    spec.q = static_cast<int>(cfg.integer("fit.q", 2));
    spec.h = cfg.real("fit.h");
    if (cfg.has("fit.b")) spec.b = cfg.real("fit.b");
    if (cfg.has("fit.h_by_period")) spec.bandwidth_overrides = cfg.period_map("fit.h_by_period");
    spec.kernel = parse_kernel(cfg.get("fit.kernel", "triangular"));
    spec.trend = parse_trend(cfg.get("fit.trend", "constant"));
    spec.estimand = parse_estimand(cfg.get("fit.estimand", "ATT"));
    spec.design = parse_design(cfg.get("design", "sharp"));
    spec.scheme = parse_scheme(cfg.get("scheme", "CS"));
    spec.alpha = cfg.real("fit.alpha", 0.05);
    const auto weights = cfg.get("fit.weights", "uniform");
    if (weights == "uniform") {
        spec.weight_rule = WeightRule::uniform;
    } else if (weights == "nearest") {
        spec.weight_rule = WeightRule::nearest;
    } else if (weights == "min_variance") {
        spec.weight_rule = WeightRule::min_variance;
    } else {
        spec.weight_rule = WeightRule::explicit_map;
        spec.weights = cfg.period_map("fit.weights");
    }
    spec.check();
    return spec;
}

/// Loads and validates the input panel. With `need_taxonomy` false only the
/// structural rules are enforced.
inline PanelDataset load_dataset(const RunConfig& cfg, bool need_taxonomy = true) {
    PanelDataset ds = parse_panel_csv(cfg.get("input"));
    ds.cutoff = cfg.real("cutoff", 0.0);
    ds.sampling = parse_scheme(cfg.get("scheme", "CS"));
    ds.design = parse_design(cfg.get("design", "sharp"));
    ds.taxonomy.untreated = cfg.periods("periods.untreated");
    ds.taxonomy.treated = cfg.periods("periods.treated");
    ds.taxonomy.rd = cfg.periods("periods.rd");
    if (need_taxonomy) {
        ds.taxonomy.target = static_cast<int>(cfg.integer("periods.target"));
    } else {
        ds.taxonomy.target = static_cast<int>(cfg.integer("periods.target", 0));
    }
    static const std::set<std::string> taxonomy_rules = {"target period not an RD period"};
    auto violations = validate(ds);
    if (!need_taxonomy) {
        std::erase_if(violations, [&](const Violation& v) { return taxonomy_rules.contains(v.rule); });
    }
    if (!violations.empty()) {
        std::string msg = std::to_string(violations.size()) + " violation(s); first: " + detail::describe(violations[0]);
        throw Error(ErrorCategory::validation, msg);
    }
    return ds;
}

inline SimConfig sim_config_from(const RunConfig& cfg) {
    SimConfig sim;
    if (!cfg.has("simulate.seed")) {
        throw Error(ErrorCategory::config, "simulate.seed is required so that results are reproducible");
    }
    const auto seed = detail::trim(cfg.get("simulate.seed"));
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(seed.data(), seed.data() + seed.size(), value);
    if (seed.empty() || ec != std::errc{} || ptr != seed.data() + seed.size()) {
        throw Error(ErrorCategory::config, "simulate.seed: invalid unsigned 64-bit integer");
    }
    sim.seed = value;
    auto pair = [&](const std::string& key, std::size_t count) {
        auto v = cfg.reals(key);
        if (v.size() != count) {
            throw Error(ErrorCategory::config, key + ": expected " + std::to_string(count) + " numbers");
        }
        return v;
    };
    if (cfg.has("simulate.jumps")) {
        auto v = pair("simulate.jumps", 2);
        sim.jumps = {v[0], v[1]};
    }
    if (cfg.has("simulate.unit_fe")) {
        auto v = pair("simulate.unit_fe", 2);
        sim.unit_fe_mean = v[0];
        sim.unit_fe_sd = v[1];
    }
    if (cfg.has("simulate.time_fe")) {
        auto v = pair("simulate.time_fe", 2);
        sim.time_fe = {v[0], v[1]};
    }
    if (cfg.has("simulate.pv_link")) {
        auto v = pair("simulate.pv_link", 3);
        sim.pv_slope = v[0];
        sim.pv_mean = v[1];
        sim.pv_sd = v[2];
    }
    sim.noise_sd = cfg.real("simulate.noise_sd", sim.noise_sd);
    sim.poly_unit = cfg.real("simulate.poly_unit", sim.poly_unit);
    for (int t : {1, 2}) {
        for (auto side : {Side::below, Side::above}) {
            const std::string key = "simulate.poly." + std::to_string(t) + "." + std::string(side_name(side));
            if (!cfg.has(key)) continue;
            auto v = pair(key, 5);
            std::copy(v.begin(), v.end(), sim.poly[t - 1][side == Side::above ? 1 : 0].begin());
        }
    }
    sim.check();
    return sim;
}

inline std::vector<CoverageCell> parse_grid(const std::string& text) {
    std::vector<CoverageCell> grid;
    for (auto part : detail::split(text, ',')) {
        const auto fields = detail::split(detail::trim(part), ':');
        if (fields.size() != 3 && fields.size() != 4) {
            throw Error(ErrorCategory::config, "simulate.grid: expected dgp:n:h[:b], got '" + std::string(part) + "'");
        }
        RunConfig cell_cfg;
        cell_cfg.set("simulate.reps", std::string(fields[1]));
        cell_cfg.set("fit.h", std::string(fields[2]));
        if (fields.size() == 4) cell_cfg.set("fit.b", std::string(fields[3]));
        CoverageCell cell;
        cell.dgp = parse_scheme(detail::trim(fields[0]));
        const auto n = cell_cfg.integer("simulate.reps");
        if (n < 6) throw Error(ErrorCategory::config, "simulate.grid: n must be >= 6");
        cell.n = static_cast<std::size_t>(n);
        cell.h = cell_cfg.real("fit.h");
        if (fields.size() == 4) cell.b = cell_cfg.real("fit.b");
        if (!(cell.h > 0.0) || !(cell.pilot() > 0.0)) {
            throw Error(ErrorCategory::bandwidth, "simulate.grid: bandwidths must be positive");
        }
        grid.push_back(cell);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Serialization

using Json = nlohmann::ordered_json;

inline Json periods_json(const std::map<int, double>& m) {
    Json j = Json::object();
    for (const auto& [t, v] : m) j[std::to_string(t)] = v;
    return j;
}

/// Field names are part of the public output schema (see README).
inline Json to_json(const EffectEstimate& e) {
    Json j;
    j["estimand"] = std::string(estimand_name(e.estimand));
    j["design"] = e.design == Design::sharp ? "sharp" : "fuzzy";
    j["trend"] = std::string(trend_name(e.trend));
    j["scheme"] = std::string(scheme_name(e.scheme));
    j["target_period"] = e.target_period;
    j["alpha"] = e.alpha;
    j["point"] = e.point;
    j["se"] = e.se;
    j["ci_lower"] = e.ci_lower;
    j["ci_upper"] = e.ci_upper;
    j["z_stat"] = e.z_stat;
    j["bias_corrected_point"] = e.bias_corrected_point;
    j["se_bc"] = e.se_bc;
    j["ci_bc_lower"] = e.ci_bc_lower;
    j["ci_bc_upper"] = e.ci_bc_upper;
    j["z_stat_bc"] = e.z_stat_bc;
    j["slope"] = e.slope ? Json(*e.slope) : Json(nullptr);
    j["slope_bc"] = e.slope_bc ? Json(*e.slope_bc) : Json(nullptr);
    j["comparison_coefficients"] = periods_json(e.comparison_coefficients);
    j["jumps"] = periods_json(e.jumps);
    j["jumps_bc"] = periods_json(e.jumps_bc);
    j["approximate_se"] = e.approximate_se;
    j["notes"] = e.notes;
    return j;
}

inline void write_summary(const EffectEstimate& e, std::ostream& out) {
    const auto level = static_cast<int>(std::lround(100.0 * (1.0 - e.alpha)));
    out << std::setprecision(6);
    out << estimand_name(e.estimand) << " at period " << e.target_period << " (" << trend_name(e.trend)
        << " trend, " << scheme_name(e.scheme) << " variance, " << (e.design == Design::sharp ? "sharp" : "fuzzy")
        << ")\n";
    out << "  conventional:    " << e.point << "  (se " << e.se << ", " << level << "% CI [" << e.ci_lower << ", "
        << e.ci_upper << "])\n";
    out << "  bias-corrected:  " << e.bias_corrected_point << "  (se " << e.se_bc << ", " << level << "% CI ["
        << e.ci_bc_lower << ", " << e.ci_bc_upper << "])\n";
    if (e.slope) out << "  slope:           " << *e.slope << " per period\n";
    for (const auto& n : e.notes) out << "  note: " << n << '\n';
}

inline void write_event_study_csv(const std::vector<EventStudyRow>& rows, std::ostream& out) {
    out << "period,ok,conventional,se,ci_lower,ci_upper,bias_corrected,se_bc,ci_bc_lower,ci_bc_upper,error\n";
    for (const auto& r : rows) {
        out << r.period << ',' << (r.ok ? 1 : 0) << ',';
        if (r.ok) {
            for (double v : {r.conventional, r.se, r.ci_lower, r.ci_upper, r.bias_corrected, r.se_bc, r.ci_bc_lower,
                             r.ci_bc_upper}) {
                out << detail::format_real(v) << ',';
            }
            out << '\n';
        } else {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '"', '\'');
            out << ",,,,,,,,\"" << msg << "\"\n";
        }
    }
}

inline void write_coverage_csv(const std::vector<CoverageRow>& rows, std::ostream& out) {
    out << "dgp,n,h,b,reps,fit_failures,nonpositive_variance,conv_cs,conv_pc,conv_pv,bc_cs,bc_pc,bc_pv,"
           "mean_point,mean_point_bc,sd_point,sd_point_bc,mean_se,mean_se_bc\n";
    for (const auto& r : rows) {
        out << scheme_name(r.cell.dgp) << ',' << r.cell.n << ',' << detail::format_real(r.cell.h) << ','
            << detail::format_real(r.cell.pilot()) << ',' << r.reps << ',' << r.fit_failures << ','
            << r.nonpositive_variance;
        for (double v : {r.conv[0], r.conv[1], r.conv[2], r.bc[0], r.bc[1], r.bc[2], r.mean_point, r.mean_point_bc,
                         r.sd_point, r.sd_point_bc, r.mean_se, r.mean_se_bc}) {
            out << ',' << detail::format_real(v);
        }
        out << '\n';
    }
}

inline void write_density_csv(const std::vector<DensityBin>& bins, std::ostream& out) {
    out << "lower,upper,count_all,count\n";
    for (const auto& b : bins) {
        out << detail::format_real(b.lower) << ',' << detail::format_real(b.upper) << ',' << b.count_all << ','
            << b.count << '\n';
    }
}

inline void write_switchers_csv(const PanelDataset& ds, int first, int second, std::ostream& out) {
    std::map<std::uint32_t, double> ra;
    for (const auto& o : ds.observations) {
        if (o.period == first) ra.emplace(o.unit.value, o.running);
    }
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& o : ds.observations) {
        if (o.period != second) continue;
        auto it = ra.find(o.unit.value);
        if (it == ra.end()) continue;
        const bool a = it->second >= ds.cutoff;
        const bool b = o.running >= ds.cutoff;
        if (a != b) rows.emplace_back(ds.label(o.unit), b ? "upward" : "downward");
    }
    std::sort(rows.begin(), rows.end());
    out << "unit_id,direction\n";
    for (const auto& [u, d] : rows) out << u << ',' << d << '\n';
}

// ---------------------------------------------------------------------------
// Dispatch

inline constexpr std::string_view kCommands[] = {"estimate",    "event-study", "simulate", "equivalence",
                                                   "composition", "switchers",   "density"};

namespace detail {

/// Sample SD of outcomes pooled over the given periods.
inline double outcome_sd(const PanelDataset& ds, const std::set<int>& periods) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    for (const auto& o : ds.observations) {
        if (!periods.contains(o.period)) continue;
        sum += o.outcome;
        ++n;
    }
    if (n < 2) throw Error(ErrorCategory::validation, "too few outcomes to compute a default equivalence margin");
    const double mean = sum / static_cast<double>(n);
    for (const auto& o : ds.observations) {
        if (periods.contains(o.period)) sum2 += (o.outcome - mean) * (o.outcome - mean);
    }
    return std::sqrt(sum2 / static_cast<double>(n - 1));
}

template <typename Fn>
void with_output(const RunConfig& cfg, std::ostream& out, Fn&& fn) {
    if (!cfg.has("output.path")) {
        fn(out);
        return;
    }
    std::ofstream file(cfg.get("output.path"), std::ios::binary);
    if (!file) throw Error(ErrorCategory::io, "cannot write '" + cfg.get("output.path") + "'");
    fn(file);
    if (!file) throw Error(ErrorCategory::io, "failed writing '" + cfg.get("output.path") + "'");
}

inline void run_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg);
    const auto spec = fit_spec_from(cfg);
    const auto e = estimate(ds, spec);
    write_summary(e, err);
    with_output(cfg, out, [&](std::ostream& o) { o << to_json(e).dump(2) << '\n'; });
}

inline void run_event_study(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg, false);
    const auto rows = event_study(ds, fit_spec_from(cfg));
    for (const auto& r : rows) {
        if (!r.ok) err << "warning: period " << r.period << " not estimated: " << r.error << '\n';
    }
    with_output(cfg, out, [&](std::ostream& o) { write_event_study_csv(rows, o); });
}

inline void run_equivalence(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg, false);
    const auto spec = fit_spec_from(cfg);
    const int first = static_cast<int>(cfg.integer("equivalence.first"));
    const int second = static_cast<int>(cfg.integer("equivalence.second"));
    const auto est_name = cfg.get("equivalence.estimator", "conventional");
    if (est_name != "conventional" && est_name != "bias_corrected") {
        throw Error(ErrorCategory::config, "equivalence.estimator must be conventional or bias_corrected");
    }
    const auto est = est_name == "conventional" ? Estimator::conventional : Estimator::bias_corrected;
    const auto pair = paired_jumps(ds, first, second, spec, est);
    const double delta = cfg.has("equivalence.delta") ? cfg.real("equivalence.delta")
                                                      : 0.36 * outcome_sd(ds, {first, second});
    const auto tost = tost_equivalence(pair.d1, pair.d2, pair.se_diff, delta, spec.alpha);
    const auto diff = difference_test(pair.d1, pair.d2, pair.se_diff);
    Json j;
    j["first_period"] = first;
    j["second_period"] = second;
    j["estimator"] = est_name;
    j["scheme"] = std::string(scheme_name(spec.scheme));
    j["jump_first"] = pair.d1;
    j["jump_second"] = pair.d2;
    j["difference"] = tost.difference;
    j["se_difference"] = pair.se_diff;
    j["alpha"] = spec.alpha;
    j["delta"] = delta;
    j["t_lower"] = tost.t_lower;
    j["t_upper"] = tost.t_upper;
    j["critical_value"] = tost.critical;
    j["reject_equivalence_null"] = tost.reject_equivalence_null;
    j["minimal_delta"] = tost.minimal_delta;
    j["difference_t_stat"] = diff.t_stat;
    j["difference_p_value"] = diff.p_value;
    err << "jumps " << pair.d1 << " (period " << first << ") and " << pair.d2 << " (period " << second
        << "); difference " << tost.difference << " (se " << pair.se_diff << ")\n";
    err << "TOST at delta " << delta << ": " << (tost.reject_equivalence_null ? "equivalent" : "not shown equivalent")
        << "; minimal delta " << tost.minimal_delta << "; difference test p = " << diff.p_value << '\n';
    with_output(cfg, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

inline void run_composition(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg);
    const auto spec = fit_spec_from(cfg);
    const auto c = composition_effect(ds, static_cast<int>(cfg.integer("composition.outcome_period")),
                                      static_cast<int>(cfg.integer("composition.running_period")), spec);
    Json j;
    j["outcome_period"] = c.outcome_period;
    j["alt_running_period"] = c.alt_running_period;
    j["point"] = c.point;
    j["se"] = c.se;
    j["jump_alt"] = c.jump_alt;
    j["jump_baseline"] = c.jump_baseline;
    j["notes"] = c.notes;
    err << "composition effect " << c.point << " (se " << c.se << ")\n";
    for (const auto& n : c.notes) err << "note: " << n << '\n';
    with_output(cfg, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

inline void run_switchers(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg, false);
    const int first = static_cast<int>(cfg.integer("switchers.first"));
    const int second = static_cast<int>(cfg.integer("switchers.second"));
    const auto s = switcher_summary(ds, first, second);
    err << "total_units=" << s.total_units << " switchers=" << s.switchers << " upward=" << s.upward
        << " downward=" << s.downward << '\n';
    with_output(cfg, out, [&](std::ostream& o) { write_switchers_csv(ds, first, second, o); });
}

inline void run_density(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto ds = load_dataset(cfg, false);
    const bool omit = cfg.flag("density.omit_switchers", false);
    if (omit) {
        err << "warning: omitting treatment switchers removes units near the cutoff and distorts the density "
               "(a donut-hole design); do not feed the filtered sample into estimation\n";
    }
    const auto bins = density_export(ds, static_cast<int>(cfg.integer("density.period")),
                                     cfg.real("density.bin_width"), omit);
    with_output(cfg, out, [&](std::ostream& o) { write_density_csv(bins, o); });
}

inline void run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto sim = sim_config_from(cfg);
    const auto grid = parse_grid(cfg.get("simulate.grid"));
    if (grid.empty()) throw Error(ErrorCategory::config, "simulate.grid is empty");
    const auto reps = cfg.integer("simulate.reps", 1000);
    if (reps < 1) throw Error(ErrorCategory::config, "simulate.reps must be >= 1");
    const auto threads = cfg.integer("simulate.threads", 1);
    if (threads < 1) throw Error(ErrorCategory::config, "simulate.threads must be >= 1");
    if (cfg.has("simulate.sample_out")) {
        SimConfig one = sim;
        one.dgp = grid.front().dgp;
        one.n = grid.front().n;
        one.seed = replication_seed(sim.seed, 0);
        write_panel_csv(generate_sample(one), cfg.get("simulate.sample_out"));
    }
    const auto rows = run_coverage_study(grid, static_cast<std::size_t>(reps), sim, static_cast<unsigned>(threads));
    for (const auto& r : rows) {
        if (r.fit_failures > 0 || r.nonpositive_variance > 0) {
            err << "warning: " << scheme_name(r.cell.dgp) << " n=" << r.cell.n << " h=" << r.cell.h << ": "
                << r.fit_failures << " fit failures excluded, " << r.nonpositive_variance
                << " replications with a non-positive variance counted as misses\n";
        }
    }
    with_output(cfg, out, [&](std::ostream& o) { write_coverage_csv(rows, o); });
}

}  // namespace detail

/// Runs one command. Returns the process exit status: 0 on success, otherwise
/// the error category's code, with the diagnostic written to `err`.
inline int run(std::string_view command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (command == "estimate") {
            detail::run_estimate(cfg, out, err);
        } else if (command == "event-study") {
            detail::run_event_study(cfg, out, err);
        } else if (command == "simulate") {
            detail::run_simulate(cfg, out, err);
        } else if (command == "equivalence") {
            detail::run_equivalence(cfg, out, err);
        } else if (command == "composition") {
            detail::run_composition(cfg, out, err);
        } else if (command == "switchers") {
            detail::run_switchers(cfg, out, err);
        } else if (command == "density") {
            detail::run_density(cfg, out, err);
        } else {
            throw Error(ErrorCategory::config, "unknown command '" + std::string(command) + "'");
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.category());
    }
    return 0;
}

}  // namespace rddid
