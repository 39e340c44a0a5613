#pragma once

// Two-period Monte-Carlo data generator and coverage-study harness.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rddid/covariance.hpp"
#include "rddid/data.hpp"
#include "rddid/fit_spec.hpp"
#include "rddid/period_effects.hpp"
#include "rddid/stats.hpp"

namespace rddid {

/// Coefficients of r^1..r^5 (r in units of SimConfig::poly_unit) for one
/// period and side of the cutoff; index [period - 1][side].
using PolyCoeffs = std::array<std::array<std::array<double, 5>, 2>, 2>;

/// Bundled illustrative f_t. Curvature differs between the two periods so the
/// conventional estimator's smoothing bias grows with h.
inline constexpr PolyCoeffs kDefaultPoly = {{
    {{{0.0, 0.0, 0.0, 0.0, 0.0},                              // period 1, below
      {0.0, 0.0, 0.0, 0.0, 0.0}}},                            // period 1, above
    {{{0.0, -1074.71, -2124.18, -1873.52, -613.44},           // period 2, below
      {0.0, 850.99, -1803.47, 1661.75, -376.48}}},            // period 2, above
}};

struct SimConfig {
    SamplingScheme dgp = SamplingScheme::CS;
    std::size_t n = 1000;
    double beta_a = 2.0;
    double beta_b = 4.0;
    double shift = -0.375;
    double scale = 5000.0;
    double pv_slope = 0.97;
    double pv_mean = 153.0;
    double pv_sd = 410.0;
    std::array<double, 2> jumps{63.0, -63.0};
    double unit_fe_mean = 155.0;
    double unit_fe_sd = 117.0;
    std::array<double, 2> time_fe{-46.0, 0.0};
    double noise_sd = 40.0;
    PolyCoeffs poly = kDefaultPoly;
    double poly_unit = 1000.0;
    std::uint64_t seed = 0;

    double true_att() const { return jumps[1] - jumps[0]; }

    double f(int period, double r) const {
        const auto& c = poly[period - 1][r >= 0.0 ? 1 : 0];
        const double x = r / poly_unit;
        return x * (c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4]))));
    }

    void check() const {
        if (n < 6) throw Error(ErrorCategory::config, "simulation needs n >= 6 units per period");
        if (!(beta_a > 0.0 && beta_b > 0.0)) throw Error(ErrorCategory::config, "beta parameters must be positive");
        if (!(scale > 0.0)) throw Error(ErrorCategory::config, "running-variable scale must be positive");
        if (!(noise_sd >= 0.0 && unit_fe_sd >= 0.0 && pv_sd >= 0.0)) {
            throw Error(ErrorCategory::config, "standard deviations must be nonnegative");
        }
        if (!(poly_unit > 0.0)) throw Error(ErrorCategory::config, "polynomial unit must be positive");
    }
};

/// SplitMix64 finaliser, used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep) noexcept {
    return mix64(mix64(seed) ^ mix64(rep + 0x632be59bd9b4e019ULL));
}

namespace detail {

class Draws {
public:
    explicit Draws(std::uint64_t seed) : rng_(seed) {}

    double normal(double mean, double sd) {
        if (sd == 0.0) return mean;
        return std::normal_distribution<double>(mean, sd)(rng_);
    }
    double beta(double a, double b) {
        const double x = std::gamma_distribution<double>(a, 1.0)(rng_);
        const double y = std::gamma_distribution<double>(b, 1.0)(rng_);
        return x / (x + y);
    }

private:
    std::mt19937_64 rng_;
};

inline std::string unit_label(const char* prefix, std::size_t i) {
    std::string digits = std::to_string(i + 1);
    return prefix + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace detail

/// Draws one dataset. Period 1 is all-untreated and period 2 assigns
/// treatment by the cutoff at 0; the target period is 2.
inline PanelDataset generate_sample(const SimConfig& cfg) {
    cfg.check();
    detail::Draws draw(cfg.seed);
    PanelDataset ds;
    ds.cutoff = 0.0;
    ds.sampling = cfg.dgp;
    ds.design = Design::sharp;
    ds.taxonomy.untreated = {1};
    ds.taxonomy.rd = {2};
    ds.taxonomy.target = 2;
    ds.observations.reserve(2 * cfg.n);

    auto running = [&] { return (draw.beta(cfg.beta_a, cfg.beta_b) + cfg.shift) * cfg.scale; };
    auto outcome = [&](int t, double r, double unit_fe) {
        const double jump = r >= 0.0 ? cfg.jumps[t - 1] : 0.0;
        return cfg.f(t, r) + jump + unit_fe + cfg.time_fe[t - 1] + draw.normal(0.0, cfg.noise_sd);
    };

    if (cfg.dgp == SamplingScheme::CS) {
        for (int t : {1, 2}) {
            const char* prefix = t == 1 ? "a" : "b";
            for (std::size_t i = 0; i < cfg.n; ++i) {
                const double r = running();
                const double fe = draw.normal(cfg.unit_fe_mean, cfg.unit_fe_sd);
                const int w = t == 2 && r >= 0.0 ? 1 : 0;
                ds.add(detail::unit_label(prefix, i), t, r, w, outcome(t, r, fe));
            }
        }
        return ds;
    }

    std::vector<double> r1(cfg.n), r2(cfg.n), fe(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        r1[i] = running();
        r2[i] = cfg.dgp == SamplingScheme::PC ? r1[i] : cfg.pv_slope * r1[i] + draw.normal(cfg.pv_mean, cfg.pv_sd);
        fe[i] = draw.normal(cfg.unit_fe_mean, cfg.unit_fe_sd);
    }
    for (std::size_t i = 0; i < cfg.n; ++i) ds.add(detail::unit_label("u", i), 1, r1[i], 0, outcome(1, r1[i], fe[i]));
    for (std::size_t i = 0; i < cfg.n; ++i) {
        ds.add(detail::unit_label("u", i), 2, r2[i], r2[i] >= 0.0 ? 1 : 0, outcome(2, r2[i], fe[i]));
    }
    return ds;
}

struct CoverageCell {
    SamplingScheme dgp = SamplingScheme::CS;
    std::size_t n = 1000;
    double h = 0.0;
    std::optional<double> b;  // 2h when unset

    double pilot() const { return b ? *b : 2.0 * h; }
};

/// Outcome of one replication: point estimates and, for each declared scheme,
/// the conventional and bias-corrected variances (NaN when not positive).
struct ReplicationResult {
    bool fit_failed = false;
    std::string error;
    double point = 0.0;
    double point_bc = 0.0;
    std::array<double, 3> var{};  // CS, PC, PV
    std::array<double, 3> var_bc{};
};

inline ReplicationResult run_replication(const SimConfig& base, const CoverageCell& cell, std::uint64_t rep) {
    SimConfig cfg = base;
    cfg.dgp = cell.dgp;
    cfg.n = cell.n;
    cfg.seed = replication_seed(base.seed, rep);
    const auto ds = generate_sample(cfg);

    FitSpec spec;
    spec.h = cell.h;
    spec.b = cell.pilot();
    ReplicationResult out;
    try {
        std::map<int, PeriodDiscontinuity> discs;
        discs.emplace(1, bc_discontinuity(ds, 1, spec));
        discs.emplace(2, bc_discontinuity(ds, 2, spec));
        const ResidualCovariance rc(discs);
        out.point = discs.at(2).conventional - discs.at(1).conventional;
        out.point_bc = discs.at(2).bias_corrected - discs.at(1).bias_corrected;
        const std::map<int, double> c{{2, 1.0}, {1, -1.0}};
        for (auto s : {SamplingScheme::CS, SamplingScheme::PC, SamplingScheme::PV}) {
            const auto k = static_cast<std::size_t>(s);
            const double v = linear_combination_variance(c, discs, rc, s, Estimator::conventional);
            const double v_bc = linear_combination_variance(c, discs, rc, s, Estimator::bias_corrected);
            out.var[k] = v > 0.0 ? v : std::nan("");
            out.var_bc[k] = v_bc > 0.0 ? v_bc : std::nan("");
        }
    } catch (const Error& e) {
        out.fit_failed = true;
        out.error = e.what();
    }
    return out;
}

struct CoverageRow {
    CoverageCell cell;
    std::size_t reps = 0;
    std::size_t fit_failures = 0;
    std::size_t nonpositive_variance = 0;
    std::array<double, 3> conv{};  // coverage with CS, PC, PV variance
    std::array<double, 3> bc{};
    double mean_point = 0.0;
    double mean_point_bc = 0.0;
    double sd_point = 0.0;
    double sd_point_bc = 0.0;
    double mean_se = 0.0;     // conventional SE under the DGP's own scheme
    double mean_se_bc = 0.0;
};

/// Runs `reps` replications of each cell. Replication r always uses the stream
/// derived from (seed, r), and results are reduced in replication order, so
/// the output does not depend on the thread count.
inline std::vector<CoverageRow> run_coverage_study(const std::vector<CoverageCell>& grid, std::size_t reps,
                                                   const SimConfig& base, unsigned threads = 1, double alpha = 0.05) {
    if (reps < 1) throw Error(ErrorCategory::config, "reps must be >= 1");
    base.check();
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double truth = base.true_att();
    std::vector<CoverageRow> rows;
    for (const auto& cell : grid) {
        if (!(cell.h > 0.0) || !(cell.pilot() > 0.0)) throw Error(ErrorCategory::bandwidth, "grid bandwidths must be positive");
        std::vector<ReplicationResult> results(reps);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t r; (r = next.fetch_add(1)) < reps;) results[r] = run_replication(base, cell, r);
        };
        const unsigned n_threads = std::max(1u, threads);
        if (n_threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        CoverageRow row;
        row.cell = cell;
        row.reps = reps;
        std::array<std::size_t, 3> hit{}, hit_bc{};
        std::size_t ok = 0;
        double sum = 0.0, sum_bc = 0.0, sum_se = 0.0, sum_se_bc = 0.0;
        std::size_t n_se = 0, n_se_bc = 0;
        const auto own = static_cast<std::size_t>(cell.dgp);
        for (const auto& res : results) {
            if (res.fit_failed) {
                ++row.fit_failures;
                continue;
            }
            ++ok;
            sum += res.point;
            sum_bc += res.point_bc;
            bool bad_variance = false;
            for (std::size_t k = 0; k < 3; ++k) {
                if (std::isnan(res.var[k]) || std::isnan(res.var_bc[k])) bad_variance = true;
                // A non-positive variance yields no interval and counts as a miss.
                if (!std::isnan(res.var[k]) && std::abs(res.point - truth) <= z * std::sqrt(res.var[k])) ++hit[k];
                if (!std::isnan(res.var_bc[k]) && std::abs(res.point_bc - truth) <= z * std::sqrt(res.var_bc[k])) {
                    ++hit_bc[k];
                }
            }
            if (bad_variance) ++row.nonpositive_variance;
            if (!std::isnan(res.var[own])) {
                sum_se += std::sqrt(res.var[own]);
                ++n_se;
            }
            if (!std::isnan(res.var_bc[own])) {
                sum_se_bc += std::sqrt(res.var_bc[own]);
                ++n_se_bc;
            }
        }
        if (ok > 0) {
            for (std::size_t k = 0; k < 3; ++k) {
                row.conv[k] = static_cast<double>(hit[k]) / static_cast<double>(ok);
                row.bc[k] = static_cast<double>(hit_bc[k]) / static_cast<double>(ok);
            }
            row.mean_point = sum / static_cast<double>(ok);
            row.mean_point_bc = sum_bc / static_cast<double>(ok);
            double ss = 0.0, ss_bc = 0.0;
            for (const auto& res : results) {
                if (res.fit_failed) continue;
                ss += (res.point - row.mean_point) * (res.point - row.mean_point);
                ss_bc += (res.point_bc - row.mean_point_bc) * (res.point_bc - row.mean_point_bc);
            }
            if (ok > 1) {
                row.sd_point = std::sqrt(ss / static_cast<double>(ok - 1));
                row.sd_point_bc = std::sqrt(ss_bc / static_cast<double>(ok - 1));
            }
            row.mean_se = n_se ? sum_se / static_cast<double>(n_se) : 0.0;
            row.mean_se_bc = n_se_bc ? sum_se_bc / static_cast<double>(n_se_bc) : 0.0;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rddid
