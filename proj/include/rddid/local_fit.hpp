#pragma once

// One-sided kernel-weighted local polynomial regression.
//
// Regressors are the scaled offsets u = (r - c) / h raised to powers 0..p, so
// the fitted coefficients are those of the scaled problem. Multiplying entry j
// by h^-j recovers the coefficient of (r - c)^j. The (1/n) normalisation of
// Gamma cancels in every estimator and variance built on top of it.

#include <algorithm>
#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rddid/data.hpp"
#include "rddid/error.hpp"
#include "rddid/kernel.hpp"

namespace rddid {

inline constexpr double kMaxConditionNumber = 1e12;

struct SideFit {
    Side side = Side::above;
    int period = 0;
    int order = 1;
    double bandwidth = 1.0;
    double cutoff = 0.0;
    Kernel kernel = Kernel::triangular;
    Target target = Target::outcome;
    std::size_t normalizer = 0;  // n in Gamma = X'AX / n

    Eigen::VectorXd beta_scaled;
    Eigen::MatrixXd gamma;
    Eigen::MatrixXd gamma_inv;

    // Positively weighted observations only, aligned by index.
    std::vector<UnitId> units;
    std::vector<double> running;
    std::vector<double> response;
    std::vector<double> weights;
    std::vector<double> residuals;
    /// Row j holds the linear weights with beta_scaled[j] = sum_i L(j, i) * response[i].
    Eigen::MatrixXd coefficient_weights;

    std::size_t effective_n() const noexcept { return units.size(); }

    /// Fitted value of the polynomial at an arbitrary running value.
    double fitted(double r) const {
        const double u = (r - cutoff) / bandwidth;
        double acc = 0.0;
        for (Eigen::Index j = beta_scaled.size() - 1; j >= 0; --j) acc = acc * u + beta_scaled[j];
        return acc;
    }

    std::optional<double> residual_of(UnitId u) const {
        for (std::size_t i = 0; i < units.size(); ++i) {
            if (units[i] == u) return residuals[i];
        }
        return std::nullopt;
    }
};

/// Weighted least squares fit of one side of the cutoff. `normalizer` is the
/// per-period sample size used in Gamma; zero means obs.size().
inline SideFit fit_side(std::span<const Observation> obs, Side side, double cutoff, int order, Kernel kernel,
                        double h, Target target = Target::outcome, std::size_t normalizer = 0) {
    if (order < 0) throw Error(ErrorCategory::order, "polynomial order must be nonnegative");
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCategory::bandwidth, "bandwidth must be positive");

    SideFit fit;
    fit.side = side;
    fit.period = obs.empty() ? 0 : obs.front().period;
    fit.order = order;
    fit.bandwidth = h;
    fit.cutoff = cutoff;
    fit.kernel = kernel;
    fit.target = target;
    fit.normalizer = normalizer == 0 ? obs.size() : normalizer;

    for (const auto& o : obs) {
        const double w = scaled_weight(o.running, cutoff, h, kernel);
        if (w <= 0.0) continue;
        fit.units.push_back(o.unit);
        fit.running.push_back(o.running);
        fit.response.push_back(o.response(target));
        fit.weights.push_back(w);
    }

    const auto m = static_cast<Eigen::Index>(fit.units.size());
    const Eigen::Index k = order + 1;
    const std::string where = "period " + std::to_string(fit.period) + ", " + std::string(side_name(side));
    if (m < k) {
        throw Error(ErrorCategory::support, where + ": " + std::to_string(m) + " positively weighted points, need " +
                                                std::to_string(k));
    }

    Eigen::MatrixXd x(m, k);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double u = (fit.running[i] - cutoff) / h;
        double p = 1.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            x(i, j) = p;
            p *= u;
        }
    }
    const auto n = static_cast<double>(fit.normalizer);
    const Eigen::Map<const Eigen::VectorXd> w(fit.weights.data(), m);
    const Eigen::MatrixXd xa = x.transpose() * w.asDiagonal();  // X'A
    fit.gamma = xa * x / n;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.gamma, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxConditionNumber) {
        throw Error(ErrorCategory::singular, where + ": design matrix is singular or ill-conditioned");
    }

    Eigen::LLT<Eigen::MatrixXd> llt(fit.gamma);
    if (llt.info() != Eigen::Success) throw Error(ErrorCategory::singular, where + ": Cholesky factorisation failed");
    fit.gamma_inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
    fit.coefficient_weights = llt.solve(xa) / n;

    const Eigen::Map<const Eigen::VectorXd> y(fit.response.data(), m);
    const bool constant = std::all_of(fit.response.begin(), fit.response.end(),
                                      [&](double v) { return v == fit.response.front(); });
    if (constant) {
        // Exact for degenerate responses (e.g. sharp treatment indicators).
        fit.beta_scaled = Eigen::VectorXd::Zero(k);
        fit.beta_scaled[0] = fit.response.front();
    } else {
        fit.beta_scaled = llt.solve(xa * y / n);
    }

    fit.residuals.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) fit.residuals[i] = fit.response[i] - fit.fitted(fit.running[i]);
    return fit;
}

/// Estimated conditional mean at the cutoff.
inline double intercept(const SideFit& fit) { return fit.beta_scaled[0]; }

/// mu''(c) from a fit of order >= 2: 2 * beta_scaled[2] / h^2.
inline double second_derivative(const SideFit& fit) {
    if (fit.order < 2) throw Error(ErrorCategory::order, "second derivative needs a fit of order >= 2");
    return 2.0 * fit.beta_scaled[2] / (fit.bandwidth * fit.bandwidth);
}

}  // namespace rddid
