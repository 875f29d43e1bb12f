#pragma once

// Batch procedure: choose a sampling scheme per model from a finite candidate
// collection, fit each model once, then select the model by penalized
// empirical loss.

#include <activereg/design.hpp>
#include <activereg/error.hpp>
#include <activereg/estimator.hpp>
#include <activereg/penalties.hpp>
#include <activereg/rng.hpp>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace activereg {

/// Ordered candidate schemes P_1..P_K.
struct CandidateCollection {
    std::vector<SamplingScheme> schemes;

    std::size_t size() const noexcept { return schemes.size(); }
    const SamplingScheme& operator[](std::size_t i) const { return schemes[i]; }

    void validate(std::size_t n) const {
        if (schemes.empty()) throw ValidationError("schemes", "nonempty");
        for (std::size_t i = 0; i < schemes.size(); ++i) {
            if (schemes[i].k != static_cast<int>(i) + 1)
                throw ValidationError("schemes", "indices consecutive from 1");
            if (schemes[i].size() != n) throw ValidationError("schemes", "one probability per design point");
            for (double p : schemes[i].probs)
                if (p < schemes[i].p_min) throw ValidationError("schemes", "every probability >= p_min");
        }
    }
};

/// A model together with its position in the model list and its design matrix.
struct FittedModel {
    std::size_t index = 0;
    Model model;
    Mat g;
};

inline std::vector<FittedModel> prepare_models(const DesignSpec& design, const std::vector<Model>& models) {
    std::vector<FittedModel> out;
    out.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) out.push_back({i, models[i], gram_matrix(design, models[i])});
    return out;
}

/// k̂ minimizing (1+γ)peñ1 + (1+1/γ)peñ2; returns a 1-based index, lowest on ties.
inline int select_sampling_fixed_m(const Model& m, std::size_t model_index, const CandidateCollection& collection,
                                   std::size_t n, const PenaltyConfig& cfg, const KraftWeights& kraft) {
    if (collection.size() == 0) throw ValidationError("schemes", "nonempty");
    int best = 1;
    double best_val = std::numeric_limits<double>::infinity();
    for (const SamplingScheme& s : collection.schemes) {
        const double v = pen_fixed_model(m, model_index, s.k, n, cfg, s.p_min, kraft);
        if (v < best_val) {
            best_val = v;
            best = s.k;
        }
    }
    return best;
}

/// k̂(m) minimizing the combined penalty; computable before any label is seen.
inline int select_sampling_per_model(const Model& m, const CandidateCollection& collection, std::size_t n,
                                     const PenaltyConfig& cfg, const KraftWeights& kraft) {
    if (collection.size() == 0) throw ValidationError("schemes", "nonempty");
    int best = 1;
    double best_val = std::numeric_limits<double>::infinity();
    for (const SamplingScheme& s : collection.schemes) {
        const double v = pen_combined(m, s.k, n, cfg, s.p_min, kraft).combined;
        if (v < best_val) {
            best_val = v;
            best = s.k;
        }
    }
    return best;
}

struct ModelOutcome {
    std::size_t model_index = 0;
    int chosen_k = 0;
    bool fitted = false;
    std::string skip_reason;
    Estimate estimate;
    double empirical_loss = 0.0;
    double penalty = 0.0;
    double penalized_loss = std::numeric_limits<double>::infinity();
};

struct BatchResult {
    std::vector<ModelOutcome> per_model;
    std::size_t chosen_m = 0;  ///< index into the model list
    Estimate estimate;
    double penalized_loss = 0.0;
    double expected_effective_samples = 0.0;  ///< Σ p̂(ti) for the chosen model

    std::vector<int> chosen_k_per_model() const {
        std::vector<int> ks;
        for (const auto& o : per_model) ks.push_back(o.chosen_k);
        return ks;
    }
};

/// Fits every model under its own k̂(m) with one weight draw per model
/// (stream forked by model index) and returns the lowest-index minimizer of
/// L_n + pen. Models that cannot be fitted are skipped with a reason.
inline BatchResult select_model(const DesignSpec& design, const std::vector<FittedModel>& models,
                                const CandidateCollection& collection, std::span<const double> y,
                                const PenaltyConfig& cfg, const KraftWeights& kraft, const Stream& stream) {
    BatchResult r;
    const std::size_t n = design.size();
    bool any = false;
    for (const FittedModel& fm : models) {
        ModelOutcome o;
        o.model_index = fm.index;
        o.chosen_k = select_sampling_per_model(fm.model, collection, n, cfg, kraft);
        const SamplingScheme& s = collection[static_cast<std::size_t>(o.chosen_k - 1)];
        Stream ws = stream.fork("model-weights", fm.index);
        const WeightDraw draw = draw_weights(s, ws);
        try {
            o.estimate = fit_weighted(fm.g, design.q_values, y, s.probs, draw);
            o.fitted = true;
        } catch (const NotEnoughSamples& e) {
            o.skip_reason = e.what();
        }
        if (o.fitted) {
            o.empirical_loss = loss_empirical(o.estimate.fitted, y, design.q_values, s.probs, draw.weights);
            o.penalty = pen_combined(fm.model, o.chosen_k, n, cfg, s.p_min, kraft).combined;
            o.penalized_loss = o.empirical_loss + o.penalty;
            if (!any || o.penalized_loss < r.penalized_loss) {
                any = true;
                r.chosen_m = fm.index;
                r.penalized_loss = o.penalized_loss;
                r.estimate = o.estimate;
                r.expected_effective_samples = 0.0;
                for (double p : s.probs) r.expected_effective_samples += p;
            }
        }
        r.per_model.push_back(std::move(o));
    }
    if (!any) throw AllModelsFailed("no model could be fitted with the drawn samples");
    return r;
}

struct OracleGap {
    double loss = 0.0;    ///< L(x̂_m̂)
    double factor = 0.0;  ///< (1+γ)/(1−4γ)
    double bracket = 0.0; ///< min over m of [L(x_m) + min_k pen]
    double rhs = 0.0;
    bool holds = false;
};

inline double oracle_factor(double gamma) {
    if (!(gamma > 0.0 && gamma < 0.25)) throw GammaOutOfRange(gamma);
    return (1.0 + gamma) / (1.0 - 4.0 * gamma);
}

/// Both sides of the model-selection oracle inequality. `projections` holds
/// x_m (the q-projection of x0) for each model, in model order.
inline OracleGap oracle_gap(const BatchResult& result, const DesignSpec& design,
                            const std::vector<FittedModel>& models, const std::vector<Vec>& projections,
                            std::span<const double> x0, const CandidateCollection& collection,
                            const PenaltyConfig& cfg, const KraftWeights& kraft) {
    OracleGap g;
    g.factor = oracle_factor(cfg.gamma);
    g.loss = loss_true(result.estimate.fitted, x0, design.q_values, cfg.sigma2);
    g.bracket = std::numeric_limits<double>::infinity();
    for (const FittedModel& fm : models) {
        double best = std::numeric_limits<double>::infinity();
        for (const SamplingScheme& s : collection.schemes)
            best = std::min(best, pen_combined(fm.model, s.k, design.size(), cfg, s.p_min, kraft).combined);
        g.bracket = std::min(g.bracket, loss_true(projections[fm.index], x0, design.q_values, cfg.sigma2) + best);
    }
    g.rhs = g.factor * g.bracket;
    g.holds = g.loss <= g.rhs;
    return g;
}

}  // namespace activereg
