#include "test_support.hpp"

#include <activereg/validation.hpp>

#include <gtest/gtest.h>

using namespace activereg;

namespace activereg {
inline void PrintTo(BoundId id, std::ostream* os) { *os << to_string(id); }
}  // namespace activereg
using activereg::testing::small_scenario;

namespace {

BoundCheckSpec spec_for(BoundId id, double scale = 1.0, unsigned workers = 1) {
    BoundCheckSpec s;
    s.bound_id = id;
    s.replications = 200;
    s.seed = 5;
    s.penalty_scale = scale;
    s.workers = workers;
    s.keep_per_rep = true;
    return s;
}

}  // namespace

TEST(Wilson, ZeroSuccessesInHundredTrials) {
    const WilsonInterval w = wilson_interval(0, 100);
    EXPECT_NEAR(w.lower, 0.0, 1e-15);
    EXPECT_NEAR(w.upper, 0.036995, 1e-5);
}

TEST(Wilson, SymmetricAtOneHalf) {
    const WilsonInterval w = wilson_interval(50, 100);
    EXPECT_NEAR(w.lower + w.upper, 1.0, 1e-12);
    EXPECT_NEAR(w.upper, 0.59614, 1e-4);
}

TEST(Wilson, EmptyTrialsGiveTheUnitInterval) {
    const WilsonInterval w = wilson_interval(0, 0);
    EXPECT_NEAR(w.lower, 0.0, 1e-15);
    EXPECT_EQ(w.upper, 1.0);
}

TEST(Verdicts, RulesAreApplied) {
    EXPECT_TRUE(make_entry("x", "x", 1000, 0, 0.01, Verdict::wilson_upper).pass);
    EXPECT_FALSE(make_entry("x", "x", 100, 0, 0.01, Verdict::wilson_upper).pass);
    EXPECT_FALSE(make_entry("x", "x", 100, 1, 0.5, Verdict::every_run).pass);
    EXPECT_TRUE(make_entry("x", "x", 100, 10, 0.1, Verdict::raw_frequency).pass);
    EXPECT_FALSE(make_entry("x", "x", 100, 11, 0.1, Verdict::raw_frequency).pass);
    ValidationReport r;
    r.entries.push_back(make_entry("x", "d", 100, 100, 0.0, Verdict::diagnostic));
    EXPECT_TRUE(r.all_gated_pass());
}

TEST(Validation, BoundNamesRoundTrip) {
    for (const auto& [id, name] : bound_names()) EXPECT_EQ(parse_bound_id(name), id);
    EXPECT_THROW(parse_bound_id("L9"), ValidationError);
}

TEST(Validation, TooFewReplicationsAreRejected) {
    const BuiltScenario b = small_scenario();
    BoundCheckSpec s = spec_for(BoundId::L1_pen1);
    s.replications = 50;
    EXPECT_THROW(run_check(b.sim, s), ValidationError);
}

TEST(Validation, ChecksPassOnTheSmallScenario) {
    const BuiltScenario b = small_scenario();
    for (BoundId id : {BoundId::L1_pen1, BoundId::L7_pen0, BoundId::L2_tail, BoundId::L6_delta1, BoundId::L6_delta2,
                       BoundId::T1}) {
        for (const ReportEntry& e : run_check(b.sim, spec_for(id))) {
            EXPECT_EQ(e.exceedances, 0u) << e.label;
            EXPECT_EQ(e.per_rep.size(), e.replications) << e.label;
        }
    }
}

// A harness that cannot fail proves nothing: with the penalty forced to zero
// every check must report violations above its nominal level.
class SanityInversion : public ::testing::TestWithParam<BoundId> {};

TEST_P(SanityInversion, ZeroPenaltyExceedsNominal) {
    const BuiltScenario b = small_scenario();
    for (const ReportEntry& e : run_check(b.sim, spec_for(GetParam(), 0.0))) {
        if (!e.gated()) continue;
        EXPECT_GT(e.frequency, e.nominal) << e.label;
        EXPECT_FALSE(e.pass) << e.label;
    }
}

INSTANTIATE_TEST_SUITE_P(AllBounds, SanityInversion,
                         ::testing::Values(BoundId::L1_pen1, BoundId::L3_pen2, BoundId::L4_noise_tail,
                                           BoundId::L7_pen0, BoundId::L6_delta1, BoundId::L6_delta2, BoundId::T1,
                                           BoundId::T2),
                         [](const auto& info) { return to_string(info.param); });

TEST(Validation, MatrixTailInversionAtSmallScale) {
    const BuiltScenario b = small_scenario();
    for (const ReportEntry& e : run_check(b.sim, spec_for(BoundId::L2_tail, 0.0))) {
        if (e.nominal >= 1.0) continue;
        EXPECT_GT(e.frequency, e.nominal) << e.label;
    }
}

TEST(Validation, IterativeInversionShrinksTheSets) {
    const BuiltScenario b = small_scenario();
    const auto entries = run_check(b.sim, spec_for(BoundId::T3, 1e-4));
    bool any = false;
    for (const ReportEntry& e : entries)
        if (e.label == "T3_membership" || e.label == "T3_both_bullets") any = any || e.frequency > e.nominal;
    EXPECT_TRUE(any);
}

TEST(Validation, ResultsDoNotDependOnWorkerCount) {
    const BuiltScenario b = small_scenario();
    for (BoundId id : {BoundId::L1_pen1, BoundId::L3_pen2, BoundId::L6_delta2, BoundId::T3}) {
        const auto one = run_check(b.sim, spec_for(id, 1.0, 1));
        const auto four = run_check(b.sim, spec_for(id, 1.0, 4));
        ASSERT_EQ(one.size(), four.size());
        for (std::size_t i = 0; i < one.size(); ++i) {
            EXPECT_EQ(one[i].exceedances, four[i].exceedances);
            EXPECT_EQ(one[i].per_rep, four[i].per_rep);
            EXPECT_EQ(one[i].diagnostics, four[i].diagnostics);
        }
    }
}

TEST(Validation, NoNoiseMeansNoNoiseExceedances) {
    const BuiltScenario b = small_scenario(0.0);
    for (BoundId id : {BoundId::L3_pen2, BoundId::L4_noise_tail})
        for (const ReportEntry& e : run_check(b.sim, spec_for(id))) EXPECT_EQ(e.exceedances, 0u) << e.label;
}

TEST(Validation, DeterministicWeightsHaveNoMatrixDeviation) {
    BuiltScenario b = small_scenario();
    b.sim.collection.schemes = {SamplingScheme::make(1, Vec(b.sim.n(), 1.0))};
    for (const ReportEntry& e : run_check(b.sim, spec_for(BoundId::L2_tail))) {
        EXPECT_EQ(e.exceedances, 0u);
        for (double v : e.per_rep) EXPECT_LT(v, 0.0);
    }
}

TEST(Validation, InModelTruthHasNoBiasReweighting) {
    ScenarioConfig c = parse_config(activereg::testing::small_config());
    c.truth_coefficients = {{1, 0.4}, {2, 0.9}};
    const BuiltScenario b = build_scenario(c);
    BoundCheckSpec s = spec_for(BoundId::L7_pen0);
    const ReportEntry e = run_check(b.sim, s).front();
    EXPECT_EQ(e.exceedances, 0u);
    for (double v : e.per_rep) EXPECT_LE(v, 1e-12);
}

TEST(Validation, ReportCollectsEveryRequestedBound) {
    const BuiltScenario b = small_scenario();
    BoundCheckSpec base = spec_for(BoundId::L1_pen1);
    const ValidationReport r = validate_bounds(b.sim, {BoundId::L1_pen1, BoundId::L7_pen0}, base);
    ASSERT_EQ(r.entries.size(), 2u);
    EXPECT_NE(r.find("L7_pen0"), nullptr);
    EXPECT_EQ(r.find("nothing"), nullptr);
}
