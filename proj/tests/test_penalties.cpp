// Reference values were computed with 40-digit arithmetic by
// tests/oracles/penalty_oracle.py.

#include <activereg/penalties.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace activereg;

namespace {

constexpr double kRel = 1e-12;

Model model_d(std::size_t d, double c_m = std::numbers::sqrt2) {
    Model m;
    for (std::size_t j = 1; j <= d; ++j) m.index_set.push_back(static_cast<int>(j));
    m.c_m = c_m;
    return m;
}

PenaltyConfig unit_cfg(double delta) {
    PenaltyConfig c;
    c.delta = delta;
    c.sigma2 = 1.0;
    c.Q = 1.0;
    c.C_bias = 1.0;
    c.r_moment = 2.0;
    c.d_of_r = 1.0;
    return c;
}

void expect_rel(double got, double want) { EXPECT_NEAR(got, want, kRel * std::abs(want)); }

}  // namespace

TEST(Penalties, FixedModelBetaMatchesReference) {
    expect_rel(beta_tilde(model_d(4), 1, 256, unit_cfg(0.05), 0.25), 3.2117064867977534993);
}

TEST(Penalties, FixedModelFluctuationPenaltyMatchesReference) {
    PenaltyConfig c = unit_cfg(0.05);
    c.bias_proxy[0] = 0.1;
    expect_rel(pen1_tilde(model_d(4), 0, 1, 256, c, 0.25), 8.0415715849114478176);
}

TEST(Penalties, NoisePenaltyMatchesReference) {
    // log(2/δ) = 1 at δ = 2/e; the Kraft term is added back from its own formula.
    PenaltyConfig c = unit_cfg(2.0 / std::numbers::e);
    const KraftWeights kraft = default_kraft(c);
    const double L = kraft.L(4, 1);
    expect_rel(pen2_tilde(model_d(4), 1, 256, c, kraft), 11.0 / 256.0 + 2.0 * L * 5.0 / 256.0);
}

TEST(Penalties, SelectionPenaltiesMatchReference) {
    PenaltyConfig c = unit_cfg(0.06);
    expect_rel(pen0(model_d(1), 1, 200, c, 0.5), 0.23018074130013650378);
    c.delta = 0.05;
    expect_rel(beta_ms(model_d(4), 1, 256, c, 0.25), 4.1269084163636354266);
    expect_rel(pen1_ms(model_d(4), 1, 256, c, 0.25), 156.51605594809468337);
}

TEST(Penalties, InitialRadiusMatchesReference) {
    expect_rel(delta0(64, model_d(4), unit_cfg(0.1), 1.0, 2.0), 947.00732265195413916);
}

TEST(Penalties, StepRadiusMatchesReference) {
    const DeltaTerms t = delta_j_terms(36, 64, 4, 1.0, 512, unit_cfg(0.1));
    expect_rel(t.noise, 1.3290849263343376443);
    expect_rel(t.bounded_difference, 1.4371733455331426858);
    expect_rel(t.complexity, 4.4679568932708409593);
    expect_rel(t.total(), 7.2342151651383212894);
}

TEST(Penalties, StepRadiusIsolatesComplexityTerm) {
    PenaltyConfig c = unit_cfg(0.1);
    c.sigma2 = 0.0;
    const DeltaTerms t = delta_j_terms(36, 64, 4, 0.0, 512, c);
    EXPECT_EQ(t.noise, 0.0);
    EXPECT_EQ(t.bounded_difference, 0.0);
    expect_rel(t.total(), 4.4679568932708409593);
}

TEST(Penalties, StepRadiusVanishesAsStepsGrow) {
    const PenaltyConfig c = unit_cfg(0.1);
    const double a = delta_j(100, 64, 4, 1.0, 1000000000, c);
    const double b = delta_j(10000, 64, 4, 1.0, 1000000000, c);
    const double d = delta_j(1000000, 64, 4, 1.0, 1000000000, c);
    EXPECT_GT(a, b);
    EXPECT_GT(b, d);
    EXPECT_LT(d, 0.1 * a);
}

TEST(Penalties, BetaScalesAsInverseRootOfSamplesAndFloor) {
    const PenaltyConfig c = unit_cfg(0.1);
    const Model m = model_d(6);
    expect_rel(beta_tilde(m, 2, 400, c, 0.5) / beta_tilde(m, 2, 1600, c, 0.5), 2.0);
    expect_rel(beta_tilde(m, 2, 400, c, 0.25) / beta_tilde(m, 2, 400, c, 1.0), 2.0);
    expect_rel(beta_ms(m, 2, 400, c, 0.25) / beta_ms(m, 2, 400, c, 1.0), 2.0);
}

TEST(Penalties, NoisePenaltyIsLinearInVariance) {
    PenaltyConfig a = unit_cfg(0.1), b = unit_cfg(0.1);
    b.sigma2 = 3.0;
    const KraftWeights k = default_kraft(a);
    expect_rel(pen2_tilde(model_d(3), 2, 100, b, k), 3.0 * pen2_tilde(model_d(3), 2, 100, a, k));
    expect_rel(pen2_ms(model_d(3), 2, 100, b, k), 3.0 * pen2_ms(model_d(3), 2, 100, a, k));
}

TEST(Penalties, SelectionBiasPenaltyScalesWithBoundSquaredOverFloor) {
    PenaltyConfig a = unit_cfg(0.1), b = unit_cfg(0.1);
    b.C_bias = 3.0;
    expect_rel(pen0(model_d(3), 1, 100, b, 0.5), 9.0 * pen0(model_d(3), 1, 100, a, 0.5));
    expect_rel(pen0(model_d(3), 1, 100, a, 0.25), 2.0 * pen0(model_d(3), 1, 100, a, 0.5));
}

TEST(Penalties, ZeroBiasBoundRemovesBiasPenalties) {
    PenaltyConfig c = unit_cfg(0.1);
    c.C_bias = 0.0;
    const PenaltyBreakdown b = pen_combined(model_d(4), 1, 256, c, 0.5, default_kraft(c));
    EXPECT_EQ(b.pen0, 0.0);
    EXPECT_EQ(b.pen1, 0.0);
    EXPECT_EQ(b.bias_term, 0.0);
    EXPECT_GT(b.combined, 0.0);
}

TEST(Penalties, ClampedLogIsZeroAtOrBelowOne) {
    EXPECT_EQ(clamped_log(0.5), 0.0);
    EXPECT_EQ(clamped_log(1.0), 0.0);
    EXPECT_DOUBLE_EQ(clamped_log(std::numbers::e), 1.0);
}

TEST(Penalties, KraftSummandHasClosedForm) {
    const KraftWeights k{1.0, 2.0};
    expect_rel(k.summand(1, 1), 1.0 / 36.0);
    expect_rel(k.summand(4, 3), 1.0 / (5.0 * 6.0 * 4.0 * 5.0));
}

TEST(Penalties, KraftSumStaysBelowOneQuarter) {
    const KraftWeights k{1.0, 2.0};
    std::vector<std::size_t> dims;
    for (std::size_t d = 1; d <= 200; ++d) dims.push_back(d);
    const double s = k.sum(dims, 200);
    EXPECT_LT(s, 0.25);
    EXPECT_GT(s, 0.24);
    EXPECT_LT(check_kraft(k, {4, 8, 16}, 4), 1.0);
}

TEST(Penalties, KraftViolationIsReported) {
    const KraftWeights k{1.0, 2.0};
    EXPECT_THROW(check_kraft(k, std::vector<std::size_t>(40, 1), 10), KraftViolation);
}

TEST(Penalties, MissingBiasProxyIsReported) {
    const PenaltyConfig c = unit_cfg(0.1);
    EXPECT_THROW(pen1_tilde(model_d(2), 3, 1, 100, c, 0.5), MissingBiasProxy);
}

TEST(Penalties, ConfigRangesAreChecked) {
    PenaltyConfig c = unit_cfg(0.1);
    c.gamma = 1.5;
    try {
        c.validate();
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.field(), "gamma");
        EXPECT_EQ(e.constraint(), "in (0,1)");
    }
    c = unit_cfg(1.0);
    EXPECT_THROW(c.validate(), ValidationError);
}
