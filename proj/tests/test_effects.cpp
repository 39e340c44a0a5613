#include <gtest/gtest.h>

#include <random>

#include "rddid/effects.hpp"
#include "rddid/simulate.hpp"

using namespace rddid;

namespace {

struct PeriodPlan {
    int period = 0;
    double jump = 0.0;      // outcome jump at the cutoff
    double p_below = 0.0;   // treatment probability below the cutoff
    double p_above = 0.0;
};

/// Units observed in every planned period with a smooth outcome, a per-period
/// jump and (for fuzzy periods) randomised treatment.
PanelDataset multi_period(std::uint64_t seed, const std::vector<PeriodPlan>& plan, int n = 400,
                          SamplingScheme scheme = SamplingScheme::PC, double effect = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<double> nd;
    PanelDataset ds;
    ds.sampling = scheme;
    std::vector<double> r(n), fe(n);
    for (int i = 0; i < n; ++i) {
        r[i] = unif(rng);
        fe[i] = nd(rng);
    }
    for (const auto& pp : plan) {
        for (int i = 0; i < n; ++i) {
            const double p = r[i] >= 0.0 ? pp.p_above : pp.p_below;
            const int w = coin(rng) < p ? 1 : 0;
            const double y = 1.0 + r[i] + 0.5 * r[i] * r[i] + (r[i] >= 0.0 ? pp.jump : 0.0) + effect * w + fe[i] +
                             0.3 * nd(rng);
            ds.add("u" + std::to_string(i), pp.period, r[i], w, y);
        }
    }
    return ds;
}

FitSpec spec_for(SamplingScheme scheme, double h = 0.6) {
    FitSpec s;
    s.h = h;
    s.scheme = scheme;
    return s;
}

}  // namespace

TEST(Effects, WeightedDifferenceArithmetic) {
    JumpTable t{3, 10.0, {{1, 2.0}, {2, 4.0}}, {}};
    EXPECT_NEAR(sharp_effect(t, Estimand::ATT, constant_projection({{1, 0.3}, {2, 0.7}})), 6.6, 1e-12);
}

TEST(Effects, TwoPeriodLinearExtrapolation) {
    const auto proj = linear_projection({1999, 2000}, 2004);
    const std::map<int, double> jumps{{1999, 3.0}, {2000, 23.2}};
    const double slope = apply_coefficients(proj.slope, jumps);
    const double alpha = apply_coefficients(proj.level, jumps);
    EXPECT_NEAR(slope, 23.2 - 3.0, 1e-10);
    EXPECT_NEAR(alpha, 23.2 + 4.0 * (23.2 - 3.0), 1e-9);
    EXPECT_NEAR(slope, 20.2, 1e-10);
    EXPECT_NEAR(alpha, 104.0, 1e-9);
}

TEST(Effects, LinearProjectionRecoversExactLine) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double a = u(rng), m = u(rng);
        const std::set<int> periods{1, 2, 4, 5};
        std::map<int, double> jumps;
        for (int t : periods) jumps[t] = a + m * t;
        const auto proj = linear_projection(periods, 9);
        EXPECT_NEAR(apply_coefficients(proj.level, jumps), a + m * 9, 1e-10);
        EXPECT_NEAR(apply_coefficients(proj.slope, jumps), m, 1e-10);
        double total = 0.0;
        for (const auto& [t, l] : proj.level) total += l;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
    EXPECT_THROW(linear_projection({1}, 3), Error);
}

TEST(Effects, FuzzyArithmetic) {
    EXPECT_NEAR(fuzzy_effect(Estimand::ATT, 3.0, 0.5, 1.0, 2.0, 0.2, 0.9), 3.6, 1e-12);
    // The ATU path substitutes the above-cutoff probability.
    EXPECT_NEAR(fuzzy_effect(Estimand::ATU, 3.0, 0.5, 1.0, 2.0, 0.9, 0.2), 3.6, 1e-12);
}

TEST(Effects, AttAndAtuCodePathsAgreeOnSameJumpTable) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::map<int, double> jumps{{1, u(rng)}, {2, u(rng)}, {3, u(rng)}};
        JumpTable table{5, u(rng), jumps, jumps};
        const auto proj = linear_projection({1, 2, 3}, 5);
        EXPECT_EQ(sharp_effect(table, Estimand::ATT, proj), sharp_effect(table, Estimand::ATU, proj));
    }
}

TEST(Effects, IdenticalPeriodsGiveZero) {
    PanelDataset ds;
    ds.taxonomy = PeriodTaxonomy{{1}, {}, {2}, 2};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 300; ++i) {
        const double r = unif(rng);
        const double y = r + (r >= 0 ? 2.0 : 0.0) + nd(rng);
        ds.add("a" + std::to_string(i), 1, r, 0, y);
        ds.add("b" + std::to_string(i), 2, r, r >= 0 ? 1 : 0, y);
    }
    const auto e = estimate_constant(ds, spec_for(SamplingScheme::CS));
    EXPECT_EQ(e.point, 0.0);
    EXPECT_EQ(e.bias_corrected_point, 0.0);
}

TEST(Effects, SinglePreperiodIsPlainDifference) {
    auto ds = multi_period(7, {{1, 0.7}, {2, 2.0, 0.0, 1.0}});
    ds.taxonomy = PeriodTaxonomy{{1}, {}, {2}, 2};
    for (auto scheme : {SamplingScheme::CS, SamplingScheme::PC}) {
        const auto spec = spec_for(scheme);
        const auto e = estimate_constant(ds, spec);
        const double d2 = discontinuity(ds, 2, spec), d1 = discontinuity(ds, 1, spec);
        EXPECT_EQ(e.point, d2 - d1);
        EXPECT_EQ(e.jumps.at(2) - e.jumps.at(1), e.point);
        const double z = normal_quantile(0.975);
        EXPECT_EQ(e.ci_lower, e.point - z * e.se);
        EXPECT_EQ(e.ci_upper, e.point + z * e.se);
        EXPECT_EQ(e.ci_bc_lower, e.bias_corrected_point - z * e.se_bc);
        EXPECT_EQ(e.ci_bc_upper, e.bias_corrected_point + z * e.se_bc);
    }
}

TEST(Effects, LinearTrendWithConstantJumpsMatchesLastPeriod) {
    // Byte-identical comparison periods give an exactly flat line.
    PanelDataset ds;
    ds.sampling = SamplingScheme::PC;
    ds.taxonomy = PeriodTaxonomy{{1, 2}, {}, {3}, 3};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 400; ++i) {
        const double r = unif(rng);
        const double y = r + (r >= 0 ? 0.5 : 0.0) + nd(rng);
        ds.add("u" + std::to_string(i), 1, r, 0, y);
        ds.add("u" + std::to_string(i), 2, r, 0, y);
        ds.add("u" + std::to_string(i), 3, r, r >= 0 ? 1 : 0, y + (r >= 0 ? 1.0 : 0.0) + 0.3 * nd(rng));
    }
    auto spec = spec_for(SamplingScheme::PC);
    spec.trend = Trend::linear;
    const auto lin = estimate_linear(ds, spec);
    spec.trend = Trend::constant;
    spec.weight_rule = WeightRule::nearest;
    const auto con = estimate_constant(ds, spec);
    ASSERT_TRUE(lin.slope.has_value());
    EXPECT_NEAR(*lin.slope, 0.0, 1e-12);
    EXPECT_NEAR(lin.point, con.point, 1e-12);
    EXPECT_EQ(con.comparison_coefficients.at(2), 1.0);
}

TEST(Effects, LinearTrendRemovesDriftingDiscontinuity) {
    // Jumps drift by 0.5 per period; the target carries a further effect of 2.
    const int reps = 200;
    double sum = 0.0;
    for (int r = 0; r < reps; ++r) {
        auto ds = multi_period(100 + r, {{1, 0.5}, {2, 1.0}, {3, 1.5}, {4, 2.0 + 2.0, 0.0, 1.0}});
        ds.taxonomy = PeriodTaxonomy{{1, 2, 3}, {}, {4}, 4};
        auto spec = spec_for(SamplingScheme::PC);
        spec.trend = Trend::linear;
        sum += estimate(ds, spec).point;
    }
    EXPECT_NEAR(sum / reps, 2.0, 0.1);
}

TEST(Effects, WeightRules) {
    auto ds = multi_period(13, {{1, 0.2}, {2, 0.4}, {3, 0.1}, {5, 1.0, 0.0, 1.0}});
    ds.taxonomy = PeriodTaxonomy{{1, 2, 3}, {}, {5}, 5};
    FitSpec spec = spec_for(SamplingScheme::PC);
    const auto u = resolve_weights(spec, {1, 2, 3}, 5);
    for (const auto& [t, w] : u) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);

    spec.weight_rule = WeightRule::nearest;
    auto n = resolve_weights(spec, {1, 2, 3}, 5);
    EXPECT_EQ(n.at(3), 1.0);
    // Equidistant periods resolve to the later one.
    n = resolve_weights(spec, {3, 7}, 5);
    EXPECT_EQ(n.at(7), 1.0);
    EXPECT_EQ(n.at(3), 0.0);

    spec.weight_rule = WeightRule::explicit_map;
    spec.weights = {{1, 0.5}, {3, 0.5}};
    const auto x = resolve_weights(spec, {1, 2, 3}, 5);
    EXPECT_EQ(x.at(2), 0.0);
    spec.weights = {{1, 0.5}, {3, 0.6}};
    EXPECT_THROW(resolve_weights(spec, {1, 2, 3}, 5), Error);
    spec.weights = {{1, -0.5}, {3, 1.5}};
    EXPECT_THROW(resolve_weights(spec, {1, 2, 3}, 5), Error);

    spec.weight_rule = WeightRule::min_variance;
    EXPECT_THROW(resolve_weights(spec, {1, 2, 3}, 5), Error);
}

TEST(Effects, MinVarianceWeightsBeatEveryOtherSimplexPoint) {
    auto ds = multi_period(17, {{1, 0.2}, {2, 0.4}, {3, 0.1}, {4, 1.0, 0.0, 1.0}}, 300, SamplingScheme::PV);
    ds.taxonomy = PeriodTaxonomy{{1, 2, 3}, {}, {4}, 4};
    for (auto scheme : {SamplingScheme::CS, SamplingScheme::PC}) {
        FitSpec spec = spec_for(scheme);
        const auto discs = detail::fit_periods(ds, {1, 2, 3, 4}, spec);
        const ResidualCovariance rc(discs);
        const auto w = detail::min_variance_weights({1, 2, 3}, 4, discs, rc, scheme);
        double total = 0.0;
        for (const auto& [t, v] : w) {
            EXPECT_GE(v, 0.0);
            total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
        const double best = aggregate_variance(discs, w, 4, scheme, Estimator::conventional, rc);
        for (int a = 0; a <= 10; ++a) {
            for (int b = 0; a + b <= 10; ++b) {
                const std::map<int, double> other{{1, a / 10.0}, {2, b / 10.0}, {3, (10 - a - b) / 10.0}};
                EXPECT_LE(best, aggregate_variance(discs, other, 4, scheme, Estimator::conventional, rc) * (1 + 1e-10));
            }
        }
    }
}

TEST(Effects, TaxonomyErrors) {
    auto ds = multi_period(19, {{1, 0.2}, {2, 1.0, 0.0, 1.0}});
    ds.taxonomy = PeriodTaxonomy{{1}, {}, {2}, 2};
    FitSpec spec = spec_for(SamplingScheme::PC);
    spec.estimand = Estimand::ATU;
    try {
        estimate(ds, spec);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::taxonomy);
    }
    spec.estimand = Estimand::ATT;
    spec.trend = Trend::linear;
    EXPECT_THROW(estimate(ds, spec), Error);
    ds.taxonomy.target = 1;
    spec.trend = Trend::constant;
    EXPECT_THROW(estimate(ds, spec), Error);
}

TEST(Effects, FuzzyCollapsesToSharpOnSharpData) {
    auto ds = multi_period(23, {{1, 0.3}, {2, 1.3, 0.0, 1.0}, {3, 0.3, 1.0, 1.0}});
    ds.taxonomy = PeriodTaxonomy{{1}, {3}, {2}, 2};
    for (auto scheme : {SamplingScheme::CS, SamplingScheme::PC}) {
        FitSpec spec = spec_for(scheme);
        const auto sharp = estimate(ds, spec);
        spec.design = Design::fuzzy;
        const auto fuzzy = estimate(ds, spec);
        EXPECT_EQ(fuzzy.point, sharp.point);
        EXPECT_EQ(fuzzy.bias_corrected_point, sharp.bias_corrected_point);
        EXPECT_EQ(fuzzy.se, sharp.se);
        EXPECT_TRUE(fuzzy.approximate_se);
        EXPECT_FALSE(fuzzy.notes.empty());
    }
}

TEST(Effects, FuzzyWeakFirstStage) {
    auto ds = multi_period(29, {{1, 0.3}, {2, 0.3, 0.5, 0.5}, {3, 0.3, 1.0, 1.0}});
    ds.taxonomy = PeriodTaxonomy{{1}, {3}, {2}, 2};
    ds.design = Design::fuzzy;
    FitSpec spec = spec_for(SamplingScheme::PC);
    spec.design = Design::fuzzy;
    // Force an exactly flat treatment probability.
    for (auto& o : ds.observations) {
        if (o.period == 2) o.treated = 1;
    }
    try {
        estimate(ds, spec);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.category(), ErrorCategory::weak_first_stage);
    }
    ds.taxonomy.treated.clear();
    EXPECT_THROW(estimate(ds, spec), Error);
}

TEST(Effects, FuzzyRecoversKnownEffect) {
    // Treatment is randomised locally with probabilities 0.2 / 0.8; the
    // untreated outcome jumps by 0.4 in every period and the effect is 1.5.
    const double effect = 1.5;
    const int reps = 1000;
    std::vector<double> att, atu;
    for (int r = 0; r < reps; ++r) {
        auto ds = multi_period(5000 + r, {{1, 0.4}, {2, 0.4, 0.2, 0.8}, {3, 0.4, 1.0, 1.0}}, 800,
                               SamplingScheme::PC, effect);
        ds.taxonomy = PeriodTaxonomy{{1}, {3}, {2}, 2};
        ds.design = Design::fuzzy;
        FitSpec spec = spec_for(SamplingScheme::PC, 0.8);
        spec.design = Design::fuzzy;
        att.push_back(estimate(ds, spec).point);
        spec.estimand = Estimand::ATU;
        atu.push_back(estimate(ds, spec).point);
    }
    for (const auto* v : {&att, &atu}) {
        double m = 0.0, ss = 0.0;
        for (double x : *v) m += x;
        m /= reps;
        for (double x : *v) ss += (x - m) * (x - m);
        const double mc_se = std::sqrt(ss / (reps - 1) / reps);
        EXPECT_LT(std::abs(m - effect), 3.0 * mc_se) << "mean " << m << " mc se " << mc_se;
    }
}

TEST(Effects, TostExamples) {
    auto r = tost_equivalence(0.0, 1.0, 1.0, 3.0, 0.1);
    EXPECT_DOUBLE_EQ(r.t_upper, -2.0);
    EXPECT_DOUBLE_EQ(r.t_lower, 4.0);
    EXPECT_NEAR(r.critical, 1.2816, 1e-4);
    EXPECT_TRUE(r.reject_equivalence_null);
    r = tost_equivalence(0.0, 1.0, 1.0, 2.0, 0.1);
    EXPECT_DOUBLE_EQ(r.t_upper, -1.0);
    EXPECT_FALSE(r.reject_equivalence_null);
    EXPECT_THROW(tost_equivalence(0.0, 1.0, 0.0, 2.0, 0.1), Error);
    EXPECT_THROW(tost_equivalence(0.0, 1.0, 1.0, -1.0, 0.1), Error);
}

TEST(Effects, TostMinimalDeltaBoundary) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::uniform_real_distribution<double> s(0.1, 20.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double d1 = u(rng), d2 = u(rng), se = s(rng);
        const auto r = tost_equivalence(d1, d2, se, 0.0, 0.05);
        const double scale = std::max(1.0, r.minimal_delta);
        EXPECT_TRUE(tost_equivalence(d1, d2, se, r.minimal_delta, 0.05).reject_equivalence_null);
        EXPECT_FALSE(tost_equivalence(d1, d2, se, r.minimal_delta - 1e-9 * scale, 0.05).reject_equivalence_null);
    }
}

TEST(Effects, DifferenceTest) {
    auto r = difference_test(2.0, 2.0, 1.0);
    EXPECT_EQ(r.t_stat, 0.0);
    EXPECT_DOUBLE_EQ(r.p_value, 1.0);
    r = difference_test(0.0, 1.96, 1.0);
    EXPECT_NEAR(r.p_value, 0.05, 1e-3);
    EXPECT_THROW(difference_test(0.0, 1.0, -1.0), Error);
}

TEST(Effects, PairedJumpsUseSchemeCovariance) {
    auto ds = multi_period(37, {{1, 0.2}, {2, 0.2}});
    FitSpec spec = spec_for(SamplingScheme::PC);
    const auto pc = paired_jumps(ds, 1, 2, spec);
    spec.scheme = SamplingScheme::CS;
    const auto cs = paired_jumps(ds, 1, 2, spec);
    EXPECT_EQ(pc.d1, cs.d1);
    EXPECT_EQ(pc.d2, cs.d2);
    // Unit effects are shared across periods, so the panel SE is smaller.
    EXPECT_LT(pc.se_diff, cs.se_diff);
}
