#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rddid {

/// Error categories surfaced by every module. The CLI maps each one to a
/// distinct nonzero exit status.
enum class ErrorCategory {
    config,
    parse,
    validation,
    bandwidth,
    support,
    singular,
    order,
    scheme,
    variance,
    taxonomy,
    weak_first_stage,
    io,
};

constexpr std::string_view category_name(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::bandwidth: return "bandwidth";
        case ErrorCategory::support: return "insufficient-support";
        case ErrorCategory::singular: return "singular-design";
        case ErrorCategory::order: return "order";
        case ErrorCategory::scheme: return "scheme";
        case ErrorCategory::variance: return "negative-variance";
        case ErrorCategory::taxonomy: return "taxonomy";
        case ErrorCategory::weak_first_stage: return "weak-discontinuity";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

constexpr int exit_code(ErrorCategory c) noexcept { return 10 + static_cast<int>(c); }

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(std::string(category_name(category)) + ": " + message),
          category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

}  // namespace rddid
