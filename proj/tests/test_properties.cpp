#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracle.hpp"
#include "rddid/composition.hpp"
#include "rddid/effects.hpp"
#include "rddid/simulate.hpp"

using namespace rddid;

namespace {

PanelDataset sample(SamplingScheme dgp, std::uint64_t seed, std::size_t n = 400) {
    SimConfig cfg;
    cfg.dgp = dgp;
    cfg.n = n;
    cfg.seed = seed;
    return generate_sample(cfg);
}

FitSpec spec_for(SamplingScheme scheme) {
    FitSpec spec;
    spec.h = 900.0;
    spec.scheme = scheme;
    return spec;
}

PanelDataset transformed(const PanelDataset& ds, double scale, double shift1, double shift2) {
    PanelDataset out = ds;
    for (auto& o : out.observations) o.outcome = scale * o.outcome + (o.period == 1 ? shift1 : shift2);
    return out;
}

void expect_rel(double got, double want, double tol) { EXPECT_NEAR(got, want, tol * std::max(1.0, std::abs(want))); }

constexpr SamplingScheme kSchemes[] = {SamplingScheme::CS, SamplingScheme::PC, SamplingScheme::PV};

}  // namespace

TEST(Properties, PeriodShiftsLeaveEffectUnchanged) {
    for (auto dgp : kSchemes) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const auto ds = sample(dgp, seed);
            const auto spec = spec_for(dgp);
            const auto base = estimate(ds, spec);
            const auto moved = estimate(transformed(ds, 1.0, 37.5, -210.0), spec);
            expect_rel(moved.point, base.point, 1e-9);
            expect_rel(moved.bias_corrected_point, base.bias_corrected_point, 1e-9);
            expect_rel(moved.se, base.se, 1e-9);
            expect_rel(moved.se_bc, base.se_bc, 1e-9);
        }
    }
}

TEST(Properties, OutcomeScaleEquivariance) {
    for (auto dgp : kSchemes) {
        for (std::uint64_t seed = 11; seed <= 20; ++seed) {
            const auto ds = sample(dgp, seed);
            const auto spec = spec_for(dgp);
            const auto base = estimate(ds, spec);
            const auto scaled = estimate(transformed(ds, -2.5, 0.0, 0.0), spec);
            expect_rel(scaled.point, -2.5 * base.point, 1e-9);
            expect_rel(scaled.bias_corrected_point, -2.5 * base.bias_corrected_point, 1e-9);
            expect_rel(scaled.se, 2.5 * base.se, 1e-9);
            expect_rel(scaled.se_bc, 2.5 * base.se_bc, 1e-9);
        }
    }
}

TEST(Properties, RowOrderAndUnitLabelsDoNotMatter) {
    std::mt19937_64 rng(7);
    for (auto dgp : kSchemes) {
        const auto ds = sample(dgp, 21);
        auto rows = ds.observations;
        std::shuffle(rows.begin(), rows.end(), rng);
        PanelDataset shuffled;
        shuffled.cutoff = ds.cutoff;
        shuffled.sampling = ds.sampling;
        shuffled.taxonomy = ds.taxonomy;
        for (const auto& o : rows) shuffled.add("z" + ds.label(o.unit), o.period, o.running, o.treated, o.outcome);
        const auto spec = spec_for(dgp);
        const auto a = estimate(ds, spec);
        const auto b = estimate(shuffled, spec);
        expect_rel(b.point, a.point, 1e-10);
        expect_rel(b.bias_corrected_point, a.bias_corrected_point, 1e-10);
        expect_rel(b.se, a.se, 1e-10);
        expect_rel(b.se_bc, a.se_bc, 1e-10);
    }
}

TEST(Properties, CrossSectionVariancesCoincide) {
    SimConfig base;
    base.dgp = SamplingScheme::CS;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto r = run_replication(base, CoverageCell{SamplingScheme::CS, 500, 700.0, std::nullopt}, rep);
        ASSERT_FALSE(r.fit_failed) << r.error;
        EXPECT_EQ(r.var[0], r.var[1]);
        EXPECT_EQ(r.var[0], r.var[2]);
        EXPECT_EQ(r.var_bc[0], r.var_bc[1]);
        EXPECT_EQ(r.var_bc[0], r.var_bc[2]);
    }
}

TEST(Properties, BiasFactorTracksBandwidthLikeOracle) {
    const auto ds = sample(SamplingScheme::CS, 31, 800);
    for (double h : {400.0, 800.0, 1600.0}) {
        FitSpec spec = spec_for(SamplingScheme::CS);
        spec.h = h;
        double want = 0.0;
        for (auto side : {Side::above, Side::below}) {
            oracle::Sample s;
            for (const auto& o : ds.period_observations(2)) {
                if ((o.running >= ds.cutoff) != (side == Side::above)) continue;
                s.r.push_back(o.running);
                s.y.push_back(o.outcome);
            }
            const oracle::Wls main(s, ds.cutoff, h, 1, 1);
            const oracle::Wls pilot(s, ds.cutoff, 2.0 * h, 2, 1);
            want += (side == Side::above ? 1.0 : -1.0) * oracle::side_bias(main, pilot, s, ds.cutoff);
        }
        const double got = bias_estimate(ds, 2, spec);
        EXPECT_NEAR(got, want, 1e-7 * std::max(1.0, std::abs(want))) << h;
    }
}

TEST(Properties, TostMonotoneInMargin) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 1000; ++k) {
        const double d1 = u(rng), d2 = u(rng), se = 0.05 + std::abs(u(rng)), alpha = 0.01 + 0.1 * (u(rng) + 3.0) / 6.0;
        std::vector<double> deltas(25);
        for (double& d : deltas) d = 4.0 * std::abs(u(rng));
        std::sort(deltas.begin(), deltas.end());
        bool rejected = false;
        for (double delta : deltas) {
            const bool now = tost_equivalence(d1, d2, se, delta, alpha).reject_equivalence_null;
            EXPECT_FALSE(rejected && !now);
            rejected = rejected || now;
        }
    }
}

TEST(Properties, SwitcherCounts) {
    for (std::uint64_t seed = 40; seed < 50; ++seed) {
        const auto ds = sample(SamplingScheme::PV, seed);
        const auto s = switcher_summary(ds, 1, 2);
        EXPECT_EQ(s.switchers, s.upward + s.downward);
        EXPECT_LE(s.switchers, s.total_units);
        EXPECT_EQ(s.switcher_ids.size(), s.switchers);
        EXPECT_GT(s.switchers, 0u);
        const auto swapped = switcher_summary(ds, 2, 1);
        EXPECT_EQ(swapped.switchers, s.switchers);
        EXPECT_EQ(swapped.upward, s.downward);
    }
}

TEST(Properties, CrossPeriodDiscontinuityOnOwnPeriod) {
    for (auto dgp : {SamplingScheme::PC, SamplingScheme::PV}) {
        const auto ds = sample(dgp, 51);
        const auto spec = spec_for(dgp);
        for (int t : {1, 2}) {
            EXPECT_NEAR(cross_period_discontinuity(ds, t, t, spec), discontinuity(ds, t, spec),
                        1e-12 * std::max(1.0, std::abs(discontinuity(ds, t, spec))));
        }
    }
}
