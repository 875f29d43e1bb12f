#include <activereg/batch.hpp>

#include <gtest/gtest.h>

using namespace activereg;

namespace {

struct Bench {
    DesignSpec design = DesignSpec::equispaced(256, BasisFamily::trigonometric());
    std::vector<FittedModel> models;
    CandidateCollection collection;
    PenaltyConfig cfg;
    KraftWeights kraft;
    Vec x0;

    Bench() {
        models = prepare_models(design, {Model::on(design, {1, 2, 3, 4}), Model::on(design, {1, 2, 3, 4, 5, 6, 7, 8})});
        collection.schemes = {SamplingScheme::make(1, Vec(256, 0.25)), SamplingScheme::make(2, Vec(256, 0.5)),
                              SamplingScheme::make(3, Vec(256, 1.0))};
        cfg.sigma2 = 0.25;
        cfg.C_bias = 0.3;
        cfg.bias_proxy = {{0, 0.05}, {1, 0.01}};
        kraft = default_kraft(cfg);
        x0 = evaluate_expansion(design, {1, 2, 3, 9}, {0.2, 1.0, -0.5, 0.1});
    }

    Vec observe(std::uint64_t seed) const {
        Stream st = Stream::derive(seed, "noise");
        Vec y = NoiseSpec{cfg.sigma2}.draw(design.size(), st);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += x0[i];
        return y;
    }
};

}  // namespace

TEST(Batch, LargerProbabilitiesGiveSmallerPenalties) {
    Bench s;
    // Every penalty decreases in p_min, so the all-ones scheme wins.
    EXPECT_EQ(select_sampling_fixed_m(s.models[0].model, 0, s.collection, 256, s.cfg, s.kraft), 3);
    EXPECT_EQ(select_sampling_per_model(s.models[1].model, s.collection, 256, s.cfg, s.kraft), 3);
}

TEST(Batch, EqualFloorsPreferTheLowerIndex) {
    Bench s;
    CandidateCollection same;
    same.schemes = {SamplingScheme::make(1, Vec(256, 0.5)), SamplingScheme::make(2, Vec(256, 0.5))};
    // The Kraft term grows with k, so equal floors still prefer k = 1.
    EXPECT_EQ(select_sampling_per_model(s.models[0].model, same, 256, s.cfg, s.kraft), 1);
}

TEST(Batch, SelectionIsDeterministicForAFixedStream) {
    Bench s;
    const Vec y = s.observe(1);
    const Stream st = Stream::derive(9, "weights");
    const BatchResult a = select_model(s.design, s.models, s.collection, y, s.cfg, s.kraft, st);
    const BatchResult b = select_model(s.design, s.models, s.collection, y, s.cfg, s.kraft, st);
    EXPECT_EQ(a.chosen_m, b.chosen_m);
    EXPECT_EQ(a.estimate.coefficients, b.estimate.coefficients);
    EXPECT_EQ(a.chosen_k_per_model(), b.chosen_k_per_model());
}

TEST(Batch, UnfittableModelsAreSkipped) {
    Bench s;
    CandidateCollection sparse;
    sparse.schemes = {SamplingScheme::make(1, Vec(256, 1e-4))};
    const Vec y = s.observe(2);
    EXPECT_THROW(select_model(s.design, s.models, sparse, y, s.cfg, s.kraft, Stream::derive(3, "w")),
                 AllModelsFailed);
}

TEST(Batch, OracleInequalityHoldsOnANoisyDraw) {
    Bench s;
    std::vector<Vec> proj;
    for (const auto& fm : s.models) proj.push_back(project_q(fm.g, s.design.q_values, s.x0));
    const Vec y = s.observe(3);
    const BatchResult r = select_model(s.design, s.models, s.collection, y, s.cfg, s.kraft, Stream::derive(4, "w"));
    const OracleGap g = oracle_gap(r, s.design, s.models, proj, s.x0, s.collection, s.cfg, s.kraft);
    EXPECT_TRUE(g.holds);
    EXPECT_NEAR(g.factor, 1.2 / 0.2, 1e-12);
}

TEST(Batch, OracleFactorRequiresSmallGamma) {
    EXPECT_THROW(oracle_factor(0.25), GammaOutOfRange);
    EXPECT_THROW(oracle_factor(0.0), GammaOutOfRange);
    EXPECT_NEAR(oracle_factor(0.1), 1.1 / 0.6, 1e-15);
}

TEST(Batch, CollectionValidation) {
    CandidateCollection c;
    EXPECT_THROW(c.validate(4), ValidationError);
    c.schemes = {SamplingScheme::make(2, Vec(4, 0.5))};
    EXPECT_THROW(c.validate(4), ValidationError);
    c.schemes = {SamplingScheme::make(1, Vec(3, 0.5))};
    EXPECT_THROW(c.validate(4), ValidationError);
}
