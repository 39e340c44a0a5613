#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "rddid/data.hpp"
#include "rddid/error.hpp"
#include "rddid/kernel.hpp"

namespace rddid {

enum class Trend { constant, linear };
enum class Estimand { ATT, ATU };
enum class Estimator { conventional, bias_corrected };

/// How comparison-period weights are chosen when no explicit map is given.
enum class WeightRule { uniform, nearest, min_variance, explicit_map };

struct FitSpec {
    int p = 1;
    int q = 2;
    double h = 0.0;
    std::optional<double> b;  // pilot bandwidth; 2h when unset
    Kernel kernel = Kernel::triangular;
    std::map<int, double> bandwidth_overrides;  // per-period h
    WeightRule weight_rule = WeightRule::uniform;
    std::map<int, double> weights;  // used when weight_rule == explicit_map
    Trend trend = Trend::constant;
    Estimand estimand = Estimand::ATT;
    Design design = Design::sharp;
    SamplingScheme scheme = SamplingScheme::CS;
    double alpha = 0.05;

    double bandwidth(int period) const {
        auto it = bandwidth_overrides.find(period);
        return it != bandwidth_overrides.end() ? it->second : h;
    }
    double pilot_bandwidth(int period) const {
        // An overridden h rescales b by the same factor.
        return b ? *b * (bandwidth(period) / h) : 2.0 * bandwidth(period);
    }

    void check() const {
        if (p < 0) throw Error(ErrorCategory::config, "p must be >= 0");
        if (q < 2) throw Error(ErrorCategory::order, "q must be >= 2 for the curvature pilot fit");
        if (!(h > 0.0)) throw Error(ErrorCategory::bandwidth, "h must be positive");
        if (b && !(*b > 0.0)) throw Error(ErrorCategory::bandwidth, "b must be positive");
        for (const auto& [t, v] : bandwidth_overrides) {
            if (!(v > 0.0)) throw Error(ErrorCategory::bandwidth, "bandwidth override for period " + std::to_string(t));
        }
        if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCategory::config, "alpha must lie in (0, 1)");
    }
};

constexpr std::string_view trend_name(Trend t) noexcept { return t == Trend::constant ? "constant" : "linear"; }
constexpr std::string_view estimand_name(Estimand e) noexcept { return e == Estimand::ATT ? "ATT" : "ATU"; }

inline Trend parse_trend(std::string_view s) {
    if (s == "constant") return Trend::constant;
    if (s == "linear") return Trend::linear;
    throw Error(ErrorCategory::config, "unknown trend '" + std::string(s) + "'");
}
inline Estimand parse_estimand(std::string_view s) {
    if (s == "ATT") return Estimand::ATT;
    if (s == "ATU") return Estimand::ATU;
    throw Error(ErrorCategory::config, "unknown estimand '" + std::string(s) + "'");
}
inline Design parse_design(std::string_view s) {
    if (s == "sharp") return Design::sharp;
    if (s == "fuzzy") return Design::fuzzy;
    throw Error(ErrorCategory::config, "unknown design '" + std::string(s) + "'");
}

}  // namespace rddid
