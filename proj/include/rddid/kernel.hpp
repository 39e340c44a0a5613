#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "rddid/error.hpp"

namespace rddid {

enum class Kernel { uniform, triangular, epanechnikov };

/// K(u) for the compact-support kernels; zero outside |u| <= 1.
constexpr double kernel_value(double u, Kernel k) noexcept {
    const double a = u < 0.0 ? -u : u;
    if (!(a <= 1.0)) return 0.0;
    switch (k) {
        case Kernel::uniform: return 0.5;
        case Kernel::triangular: return 1.0 - a;
        case Kernel::epanechnikov: return 0.75 * (1.0 - a * a);
    }
    return 0.0;
}

/// K_h(r - c) = K((r - c) / h) / h.
inline double scaled_weight(double running, double cutoff, double h, Kernel k) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw Error(ErrorCategory::bandwidth, "bandwidth must be positive and finite, got " + std::to_string(h));
    }
    return kernel_value((running - cutoff) / h, k) / h;
}

constexpr std::string_view kernel_name(Kernel k) noexcept {
    switch (k) {
        case Kernel::uniform: return "uniform";
        case Kernel::triangular: return "triangular";
        case Kernel::epanechnikov: return "epanechnikov";
    }
    return "unknown";
}

inline Kernel parse_kernel(std::string_view name) {
    if (name == "uniform") return Kernel::uniform;
    if (name == "triangular") return Kernel::triangular;
    if (name == "epanechnikov") return Kernel::epanechnikov;
    throw Error(ErrorCategory::config, "unknown kernel '" + std::string(name) + "'");
}

}  // namespace rddid
