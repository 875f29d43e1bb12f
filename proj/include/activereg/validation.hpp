#pragma once

// Monte Carlo checks of the probability bounds. Each check counts, over
// independent replications, how often a statistic exceeds its bound and
// compares the frequency with the nominal level through a Wilson interval.

#include <activereg/batch.hpp>
#include <activereg/design.hpp>
#include <activereg/estimator.hpp>
#include <activereg/iterative.hpp>
#include <activereg/parallel.hpp>
#include <activereg/penalties.hpp>
#include <activereg/rng.hpp>

#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace activereg {

// ---------------------------------------------------------------------------
// Scenario and report types

/// Everything a simulation needs: the design, the truth at the design points,
/// the models with their q-projections of the truth, and the candidate schemes.
struct SimulationScenario {
    DesignSpec design;
    Vec x0;
    NoiseSpec noise;
    std::vector<FittedModel> models;
    std::vector<Vec> projections;  ///< x_m for each model
    CandidateCollection collection;
    PenaltyConfig pcfg;
    KraftWeights kraft;
    IterativeConfig icfg;
    std::size_t reference_model = 0;
    std::size_t aux_draws = 200;
    std::size_t l8_pairs = 4;
    double label_savings_ratio = 0.8;
    double label_savings_level = 0.9;

    std::size_t n() const { return design.size(); }
};

struct WilsonInterval {
    double lower = 0.0;
    double upper = 0.0;
};

inline constexpr double kWilsonZ95 = 1.959963984540054;

inline WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z = kWilsonZ95) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

enum class Verdict {
    wilson_upper,   ///< pass iff the Wilson upper limit is at most the nominal level
    every_run,      ///< pass iff no replication exceeds
    raw_frequency,  ///< pass iff the raw exceedance frequency is at most the nominal level
    diagnostic,     ///< reported, never gated
};

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::wilson_upper: return "wilson-upper";
        case Verdict::every_run: return "every-run";
        case Verdict::raw_frequency: return "raw-frequency";
        case Verdict::diagnostic: return "diagnostic";
    }
    return "unknown";
}

struct ReportEntry {
    std::string bound_id;
    std::string label;
    std::size_t replications = 0;
    std::size_t exceedances = 0;
    double frequency = 0.0;
    WilsonInterval wilson;
    double nominal = 0.0;
    Verdict rule = Verdict::wilson_upper;
    bool pass = false;
    std::map<std::string, double> diagnostics;
    std::vector<double> per_rep;  ///< statistic minus bound, one per replication
    double wall_seconds = 0.0;

    bool gated() const { return rule != Verdict::diagnostic; }
};

inline ReportEntry make_entry(std::string id, std::string label, std::size_t reps, std::size_t exceed,
                              double nominal, Verdict rule) {
    ReportEntry e;
    e.bound_id = std::move(id);
    e.label = std::move(label);
    e.replications = reps;
    e.exceedances = exceed;
    e.frequency = reps ? static_cast<double>(exceed) / static_cast<double>(reps) : 0.0;
    e.wilson = wilson_interval(exceed, reps);
    e.nominal = nominal;
    e.rule = rule;
    switch (rule) {
        case Verdict::wilson_upper: e.pass = e.wilson.upper <= nominal; break;
        case Verdict::every_run: e.pass = exceed == 0; break;
        case Verdict::raw_frequency: e.pass = e.frequency <= nominal; break;
        case Verdict::diagnostic: e.pass = e.frequency <= nominal; break;
    }
    return e;
}

struct ValidationReport {
    std::vector<ReportEntry> entries;

    bool all_gated_pass() const {
        for (const auto& e : entries)
            if (e.gated() && !e.pass) return false;
        return true;
    }
    const ReportEntry* find(const std::string& label) const {
        for (const auto& e : entries)
            if (e.label == label) return &e;
        return nullptr;
    }
};

enum class BoundId { L1_pen1, L3_pen2, L4_noise_tail, L7_pen0, L2_moment, L2_tail, L6_delta1, L6_delta2, T1, T2, T3 };

inline const std::vector<std::pair<BoundId, std::string>>& bound_names() {
    static const std::vector<std::pair<BoundId, std::string>> names = {
        {BoundId::L1_pen1, "L1_pen1"},     {BoundId::L3_pen2, "L3_pen2"},     {BoundId::L4_noise_tail, "L4_noise_tail"},
        {BoundId::L7_pen0, "L7_pen0"},     {BoundId::L2_moment, "L2_moment"}, {BoundId::L2_tail, "L2_tail"},
        {BoundId::L6_delta1, "L6_delta1"}, {BoundId::L6_delta2, "L6_delta2"}, {BoundId::T1, "T1"},
        {BoundId::T2, "T2"},               {BoundId::T3, "T3"},
    };
    return names;
}

inline std::string to_string(BoundId id) {
    for (const auto& [b, s] : bound_names())
        if (b == id) return s;
    return "unknown";
}

inline BoundId parse_bound_id(const std::string& s) {
    for (const auto& [b, name] : bound_names())
        if (name == s) return b;
    throw ValidationError("bound", "one of L1_pen1, L3_pen2, L4_noise_tail, L7_pen0, L2_moment, L2_tail, "
                                   "L6_delta1, L6_delta2, T1, T2, T3, all");
}

struct BoundCheckSpec {
    BoundId bound_id = BoundId::L1_pen1;
    std::size_t replications = 1000;
    std::optional<double> delta;      ///< overrides the scenario's δ
    std::uint64_t seed = 0;
    double penalty_scale = 1.0;       ///< multiplies the bound; 0 gives the sanity inversion
    std::optional<std::size_t> model; ///< fixed model for single-model checks; default the reference model
    unsigned workers = 1;
    bool keep_per_rep = false;

    void validate() const {
        if (replications < 100) throw ValidationError("replications", ">= 100");
        if (delta && !(*delta > 0.0 && *delta < 1.0)) throw ValidationError("delta", "in (0,1)");
        if (!(penalty_scale >= 0.0)) throw ValidationError("penalty_scale", ">= 0");
    }
};

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

inline PenaltyConfig effective_cfg(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    PenaltyConfig c = sc.pcfg;
    if (spec.delta) c.delta = *spec.delta;
    return c;
}

inline std::size_t fixed_model(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    const std::size_t m = spec.model.value_or(sc.reference_model);
    if (m >= sc.models.size()) throw ValidationError("validation.model", "an existing model");
    return m;
}

inline Stream rep_stream(const BoundCheckSpec& spec, std::string_view tag, std::size_t rep) {
    return Stream::derive(spec.seed, tag, rep);
}

/// Monte Carlo average of R_{m,p} v over W weight draws; singular draws are skipped.
inline Vec expected_projection(const FittedModel& fm, const DesignSpec& design, const SamplingScheme& s,
                               std::span<const double> v, std::size_t W, Stream stream) {
    Vec acc(design.size(), 0.0);
    std::size_t used = 0;
    for (std::size_t w = 0; w < W; ++w) {
        const WeightDraw draw = draw_weights(s, stream);
        try {
            const WeightedProjector proj(fm.g, importance_weights(design.q_values, s.probs, draw.weights));
            const Vec r = proj.apply(v);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
            ++used;
        } catch (const NotEnoughSamples&) {
        }
    }
    if (used == 0) throw NotEnoughSamples("no auxiliary draw gave a nonsingular Gram matrix");
    for (double& x : acc) x /= static_cast<double>(used);
    return acc;
}

inline Vec bias_vector(const SimulationScenario& sc, std::size_t m) { return difference(sc.x0, sc.projections[m]); }

inline Vec add(std::span<const double> a, std::span<const double> b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

template <class F>
ReportEntry timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    ReportEntry e = f();
    e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return e;
}

/// Builds an entry from per-replication statistics (statistic minus bound).
inline ReportEntry entry_from_stats(std::string id, std::string label, const std::vector<double>& stats,
                                    double nominal, Verdict rule, bool keep) {
    std::size_t exceed = 0;
    for (double s : stats)
        if (s > 0.0) ++exceed;
    ReportEntry e = make_entry(std::move(id), std::move(label), stats.size(), exceed, nominal, rule);
    if (keep) e.per_rep = stats;
    return e;
}

inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

constexpr double kSingular = std::numeric_limits<double>::infinity();

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-model fluctuation and noise penalties

/// sup over the collection of ‖(R_{m,p} − E R_{m,p})(x0 − x_m)‖²_{n,q} − peñ1, against δ/2.
inline ReportEntry check_pen1_bound(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t m = detail::fixed_model(sc, spec);
        const FittedModel& fm = sc.models[m];
        const Vec b = detail::bias_vector(sc, m);
        const std::size_t K = sc.collection.size();
        std::vector<Vec> er(K);
        std::vector<double> pen(K);
        for (std::size_t k = 0; k < K; ++k) {
            const SamplingScheme& s = sc.collection[k];
            er[k] = detail::expected_projection(fm, sc.design, s, b, sc.aux_draws,
                                                Stream::derive(spec.seed, "aux-mean", k));
            pen[k] = spec.penalty_scale * pen1_tilde(fm.model, m, s.k, sc.n(), cfg, s.p_min);
        }
        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "L1_pen1", r);
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                const SamplingScheme& s = sc.collection[k];
                const WeightDraw draw = weights_from_uniforms(s.probs, u);
                try {
                    const WeightedProjector proj(fm.g, importance_weights(sc.design.q_values, s.probs, draw.weights));
                    const Vec dev = difference(proj.apply(b), er[k]);
                    worst = std::max(worst, empirical_norm_sq(dev, sc.design.q_values) - pen[k]);
                } catch (const NotEnoughSamples&) {
                    worst = detail::kSingular;
                }
            }
            return worst;
        });
        ReportEntry e = detail::entry_from_stats("L1_pen1", "L1_pen1", stats, cfg.delta / 2.0,
                                                 Verdict::wilson_upper, spec.keep_per_rep);
        e.diagnostics["bias"] = empirical_norm_sq(b, sc.design.q_values);
        e.diagnostics["pen1_min"] = *std::min_element(pen.begin(), pen.end());
        return e;
    });
}

/// sup over the collection of ‖R_{m,p} ε‖²_{n,q} − peñ2, against δ/2.
inline ReportEntry check_pen2_bound(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t m = detail::fixed_model(sc, spec);
        const FittedModel& fm = sc.models[m];
        const std::size_t K = sc.collection.size();
        std::vector<double> pen(K);
        for (std::size_t k = 0; k < K; ++k)
            pen[k] = spec.penalty_scale * pen2_tilde(fm.model, sc.collection[k].k, sc.n(), cfg, sc.kraft);
        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "L3_pen2", r);
            Stream ns = st.fork("noise");
            const Vec eps = sc.noise.draw(sc.n(), ns);
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                const SamplingScheme& s = sc.collection[k];
                const WeightDraw draw = weights_from_uniforms(s.probs, u);
                try {
                    const WeightedProjector proj(fm.g, importance_weights(sc.design.q_values, s.probs, draw.weights));
                    worst = std::max(worst, empirical_norm_sq(proj.apply(eps), sc.design.q_values) - pen[k]);
                } catch (const NotEnoughSamples&) {
                    worst = detail::kSingular;
                }
            }
            return worst;
        });
        ReportEntry e = detail::entry_from_stats("L3_pen2", "L3_pen2", stats, cfg.delta / 2.0,
                                                 Verdict::wilson_upper, spec.keep_per_rep);
        e.diagnostics["pen2_min"] = *std::min_element(pen.begin(), pen.end());
        return e;
    });
}

// ---------------------------------------------------------------------------
// Quadratic-form noise tail

struct NoiseTailGeometry {
    double trace = 0.0;  ///< Tr(AᵀA)
    double rho = 0.0;    ///< ρ(AᵀA)
};

/// For A with ‖Aε‖² = ‖R_m ε‖²_{n,q} (full sample), the trace and spectral
/// radius of AᵀA, computed on the d × d side.
inline NoiseTailGeometry noise_tail_geometry(const FittedModel& fm, const DesignSpec& design) {
    const std::size_t n = design.size(), d = fm.model.dim();
    Mat a = weighted_gram(fm.g, design.q_values);
    a *= 1.0 / static_cast<double>(n);
    Vec q2(n);
    for (std::size_t i = 0; i < n; ++i) q2[i] = design.q_values[i] * design.q_values[i];
    Mat h = weighted_gram(fm.g, q2);
    h *= 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    const SpdFactor f(a);
    Mat x(d, d);  // columns with XᵀAX = I, so A⁻¹ = XXᵀ
    Vec e(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        e[j] = 1.0;
        const Vec col = f.unwhiten(e);
        for (std::size_t i = 0; i < d; ++i) x(i, j) = col[i];
        e[j] = 0.0;
    }
    const Mat m = x.transpose() * h * x;
    NoiseTailGeometry g;
    for (std::size_t i = 0; i < d; ++i) g.trace += m(i, i);
    g.rho = eig_sym_oracle(m).front();
    return g;
}

/// Tail of η²(A) at u ∈ {ρ, 10ρ, 50ρ} against exp(−√(d(u/ρ + rL(Tr/ρ + 1)))). The
/// replication count is raised so that a zero count can certify the smallest
/// nominal level.
inline std::vector<ReportEntry> check_noise_tail(const SimulationScenario& sc, const BoundCheckSpec& spec,
                                                 std::optional<double> L_override = std::nullopt) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
    const std::size_t m = detail::fixed_model(sc, spec);
    const FittedModel& fm = sc.models[m];
    const NoiseTailGeometry geo = noise_tail_geometry(fm, sc.design);
    const double L = L_override.value_or(sc.kraft.L(fm.model.dim(), 1));
    const double sigma2 = sc.noise.sigma2;
    const double r = cfg.r_moment;
    const std::vector<double> multiples = {1.0, 10.0, 50.0};

    std::vector<double> nominal, threshold;
    for (double mult : multiples) {
        const double u = mult * geo.rho;
        nominal.push_back(std::exp(-std::sqrt(cfg.d_of_r * (u / geo.rho + r * L * (geo.trace / geo.rho + 1.0)))));
        threshold.push_back(spec.penalty_scale *
                            (sigma2 * (geo.trace + geo.rho) * r * (1.0 + L) + sigma2 * u));
    }
    const double min_nominal = *std::min_element(nominal.begin(), nominal.end());
    const std::size_t reps = std::min<std::size_t>(
        2000000, std::max<std::size_t>(spec.replications, static_cast<std::size_t>(std::ceil(5.0 / min_nominal))));

    const WeightedProjector proj(fm.g, Vec(sc.design.q_values.begin(), sc.design.q_values.end()));
    const auto eta2 = parallel_map<double>(reps, spec.workers, [&](std::size_t rep) {
        Stream st = detail::rep_stream(spec, "L4_noise_tail", rep);
        const Vec eps = sc.noise.draw(sc.n(), st);
        return empirical_norm_sq(proj.apply(eps), sc.design.q_values);
    });

    std::vector<ReportEntry> out;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t i = 0; i < multiples.size(); ++i) {
        std::vector<double> stats(reps);
        for (std::size_t rep = 0; rep < reps; ++rep) stats[rep] = eta2[rep] - threshold[i];
        ReportEntry e = detail::entry_from_stats("L4_noise_tail", "L4_noise_tail u=" + detail::fmt_num(multiples[i]) + "rho",
                                                 stats, nominal[i], Verdict::wilson_upper, spec.keep_per_rep);
        e.diagnostics["trace"] = geo.trace;
        e.diagnostics["rho"] = geo.rho;
        e.diagnostics["L"] = L;
        e.diagnostics["threshold"] = threshold[i];
        e.wall_seconds = wall;
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bias reweighting

/// sup over models and schemes of ‖x0 − x_m‖²_{n,qw/p} − ‖x0 − x_m‖²_{n,q} − pen0, against δ/6.
inline ReportEntry check_pen0_bound(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t M = sc.models.size(), K = sc.collection.size();
        std::vector<Vec> b2(M);
        for (std::size_t m = 0; m < M; ++m) {
            const Vec b = detail::bias_vector(sc, m);
            b2[m].resize(b.size());
            for (std::size_t i = 0; i < b.size(); ++i) b2[m][i] = sc.design.q_values[i] * b[i] * b[i];
        }
        std::vector<std::vector<double>> pen(M, std::vector<double>(K));
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < K; ++k)
                pen[m][k] = spec.penalty_scale *
                            pen0(sc.models[m].model, sc.collection[k].k, sc.n(), cfg, sc.collection[k].p_min);
        const double n = static_cast<double>(sc.n());
        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "L7_pen0", r);
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                const SamplingScheme& s = sc.collection[k];
                for (std::size_t m = 0; m < M; ++m) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < sc.n(); ++i)
                        acc += ((u[i] < s.probs[i] ? 1.0 / s.probs[i] : 0.0) - 1.0) * b2[m][i];
                    worst = std::max(worst, acc / n - pen[m][k]);
                }
            }
            return worst;
        });
        return detail::entry_from_stats("L7_pen0", "L7_pen0", stats, cfg.delta / 6.0, Verdict::wilson_upper,
                                        spec.keep_per_rep);
    });
}

// ---------------------------------------------------------------------------
// Weighted Gram deviation

inline constexpr double kTau = (4.123105625617661 + 1.0) / 4.0;  // (√17 + 1)/4

/// Per scheme: A = D_{qw/p}^{1/2} G_m, statistic ‖(AᵀA − E AᵀA)/(nΛ)‖_ρ.
/// Returns the moment checks (r ∈ {2, 4}) and the tail checks (u ∈ {√2, 2, 3}).
inline std::vector<ReportEntry> check_matrix_deviation(const SimulationScenario& sc, const BoundCheckSpec& spec,
                                                       bool moments, bool tails) {
    spec.validate();
    const std::size_t m = detail::fixed_model(sc, spec);
    const FittedModel& fm = sc.models[m];
    const double n = static_cast<double>(sc.n());
    const double dm = static_cast<double>(fm.model.dim());
    Mat mean = weighted_gram(fm.g, sc.design.q_values);
    const double lambda = spectral_norm(mean) / n;
    const std::vector<double> us = {std::numbers::sqrt2, 2.0, 3.0};

    std::vector<ReportEntry> out;
    for (std::size_t k = 0; k < sc.collection.size(); ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const SamplingScheme& s = sc.collection[k];
        const double K = std::max(1.0, fm.model.c_m * std::sqrt(sc.design.Q / s.p_min));
        const auto dev = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = Stream::derive(spec.seed, "L2_gram", r * 131 + k);
            const WeightDraw draw = draw_weights(s, st);
            Mat a = weighted_gram(fm.g, importance_weights(sc.design.q_values, s.probs, draw.weights));
            a -= mean;
            a *= 1.0 / (n * lambda);
            return spectral_norm(a);
        });
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::string tag = "k=" + std::to_string(s.k);
        if (tails) {
            for (double u : us) {
                const double thr = spec.penalty_scale * 2.0 * kTau * K / std::sqrt(lambda) * std::sqrt(dm / n) * u;
                std::vector<double> stats(dev.size());
                for (std::size_t r = 0; r < dev.size(); ++r) stats[r] = dev[r] - thr;
                ReportEntry e = detail::entry_from_stats("L2_tail", "L2_tail " + tag + " u=" + detail::fmt_num(u), stats,
                                                         std::min(1.0, dm * std::pow(2.0, 0.75) * std::exp(-u * u / 2.0)),
                                                         Verdict::wilson_upper, spec.keep_per_rep);
                e.diagnostics["threshold"] = thr;
                e.diagnostics["K"] = K;
                e.diagnostics["Lambda"] = lambda;
                e.wall_seconds = wall;
                out.push_back(std::move(e));
            }
        }
        if (moments) {
            for (int r : {2, 4}) {
                double acc = 0.0;
                for (double v : dev) acc += std::pow(v, r);
                const double er = std::pow(acc / static_cast<double>(dev.size()), 1.0 / r);
                const double sigma = std::pow(2.0 * K / std::sqrt(n * lambda) * std::sqrt(dm / n), r) *
                                     std::pow(2.0, 0.75) * dm * std::pow(r, r / 2.0) * std::exp(-r / 2.0);
                const double bound = spec.penalty_scale * kTau * sigma;
                // One comparison of the pooled moment estimate against the bound.
                ReportEntry e = make_entry("L2_moment", "L2_moment " + tag + " r=" + std::to_string(r), 1,
                                           er > bound ? 1 : 0, 0.0, Verdict::diagnostic);
                e.diagnostics["replications"] = static_cast<double>(dev.size());
                e.diagnostics["moment"] = er;
                e.diagnostics["bound"] = bound;
                e.wall_seconds = wall;
                out.push_back(std::move(e));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model-selection deviations

/// Δ1(x_m, x_m', P_k) = −(2/n) Σ q (w/p) ε (x_m − x_m') against
/// (pen2(m)² + pen2(m')²)/(γ p²) + γ(‖x0 − x_m‖² + ‖x0 − x_m'‖²), level δ/3.
inline ReportEntry check_delta1(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t M = sc.models.size(), K = sc.collection.size();
        const double n = static_cast<double>(sc.n());
        std::vector<double> bias(M);
        for (std::size_t m = 0; m < M; ++m) bias[m] = empirical_norm_sq(detail::bias_vector(sc, m), sc.design.q_values);
        std::vector<std::vector<double>> p2(M, std::vector<double>(K));
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < K; ++k) p2[m][k] = pen2_ms(sc.models[m].model, sc.collection[k].k, sc.n(), cfg, sc.kraft);

        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "L6_delta1", r);
            Stream ns = st.fork("noise");
            const Vec eps = sc.noise.draw(sc.n(), ns);
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                const SamplingScheme& s = sc.collection[k];
                for (std::size_t a = 0; a < M; ++a)
                    for (std::size_t b = 0; b < M; ++b) {
                        if (a == b) continue;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < sc.n(); ++i)
                            if (u[i] < s.probs[i])
                                acc += sc.design.q_values[i] / s.probs[i] * eps[i] *
                                       (sc.projections[a][i] - sc.projections[b][i]);
                        const double d1 = -2.0 * acc / n;
                        const double bound = (p2[a][k] * p2[a][k] + p2[b][k] * p2[b][k]) / (cfg.gamma * s.p_min * s.p_min) +
                                             cfg.gamma * (bias[a] + bias[b]);
                        worst = std::max(worst, d1 - spec.penalty_scale * bound);
                    }
            }
            return worst;
        });
        return detail::entry_from_stats("L6_delta1", "L6_delta1", stats, cfg.delta / 3.0, Verdict::wilson_upper,
                                        spec.keep_per_rep);
    });
}

/// Δ2(x̂_{m,P_k}, x_m', P_k) = (1/n) Σ q (w/p − 1)[(x̂ − x0)² − (x_m' − x0)²] against
/// the displayed combination of pen0, pen1, pen2 and the bias, level 2δ/3.
inline ReportEntry check_delta2(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t M = sc.models.size(), K = sc.collection.size();
        const double n = static_cast<double>(sc.n());
        const double g = cfg.gamma;
        std::vector<double> bias(M);
        for (std::size_t m = 0; m < M; ++m) bias[m] = empirical_norm_sq(detail::bias_vector(sc, m), sc.design.q_values);
        std::vector<std::vector<PenaltyBreakdown>> pb(M, std::vector<PenaltyBreakdown>(K));
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t k = 0; k < K; ++k)
                pb[m][k] = pen_combined(sc.models[m].model, sc.collection[k].k, sc.n(), cfg, sc.collection[k].p_min, sc.kraft);

        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "L6_delta2", r);
            Stream ns = st.fork("noise");
            const Vec eps = sc.noise.draw(sc.n(), ns);
            const Vec y = detail::add(sc.x0, eps);
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < K; ++k) {
                const SamplingScheme& s = sc.collection[k];
                const WeightDraw draw = weights_from_uniforms(s.probs, u);
                const double p = s.p_min;
                for (std::size_t a = 0; a < M; ++a) {
                    Vec xh;
                    try {
                        xh = fit_weighted(sc.models[a].g, sc.design.q_values, y, s.probs, draw).fitted;
                    } catch (const NotEnoughSamples&) {
                        return detail::kSingular;
                    }
                    for (std::size_t b = 0; b < M; ++b) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < sc.n(); ++i) {
                            const double f = (draw.weights[i] ? 1.0 / s.probs[i] : 0.0) - 1.0;
                            const double ea = xh[i] - sc.x0[i], eb = sc.projections[b][i] - sc.x0[i];
                            acc += sc.design.q_values[i] * f * (ea * ea - eb * eb);
                        }
                        const double d2 = acc / n;
                        const double bound = 2.0 * pb[a][k].pen0 + (1.0 / p + 1.0 / g) * pb[a][k].pen1 +
                                             2.0 * pb[b][k].pen0 + pb[b][k].pen1 / p + 3.0 * g * bias[a] +
                                             ((1.0 / g + 1.0) / (p * p) + 1.0 / g) * pb[b][k].pen2 +
                                             pb[a][k].bias_term;
                        worst = std::max(worst, d2 - spec.penalty_scale * bound);
                    }
                }
            }
            return worst;
        });
        return detail::entry_from_stats("L6_delta2", "L6_delta2", stats, 2.0 * cfg.delta / 3.0, Verdict::wilson_upper,
                                        spec.keep_per_rep);
    });
}

// ---------------------------------------------------------------------------
// Oracle inequalities

/// Fixed-model inequality for every model at its k̂:
/// ‖x_m − x̂‖² ≤ 6(‖E R (x_m − x0)‖² + (1+γ)peñ1 + (1+1/γ)peñ2). Violation if any model fails.
inline ReportEntry check_theorem1(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    return detail::timed([&] {
        const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
        const std::size_t M = sc.models.size();
        std::vector<int> khat(M);
        std::vector<double> rhs(M);
        for (std::size_t m = 0; m < M; ++m) {
            const FittedModel& fm = sc.models[m];
            khat[m] = select_sampling_fixed_m(fm.model, m, sc.collection, sc.n(), cfg, sc.kraft);
            const SamplingScheme& s = sc.collection[static_cast<std::size_t>(khat[m] - 1)];
            const Vec b = difference(sc.projections[m], sc.x0);
            const Vec er = detail::expected_projection(fm, sc.design, s, b, sc.aux_draws,
                                                       Stream::derive(spec.seed, "aux-mean-t1", m));
            rhs[m] = spec.penalty_scale * 6.0 *
                     (empirical_norm_sq(er, sc.design.q_values) +
                      pen_fixed_model(fm.model, m, s.k, sc.n(), cfg, s.p_min, sc.kraft));
        }
        const auto stats = parallel_map<double>(spec.replications, spec.workers, [&](std::size_t r) {
            Stream st = detail::rep_stream(spec, "T1", r);
            Stream ns = st.fork("noise");
            const Vec y = detail::add(sc.x0, sc.noise.draw(sc.n(), ns));
            const Vec u = draw_uniforms(sc.n(), st);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t m = 0; m < M; ++m) {
                const SamplingScheme& s = sc.collection[static_cast<std::size_t>(khat[m] - 1)];
                try {
                    const Estimate e = fit_weighted(sc.models[m].g, sc.design.q_values, y, s.probs,
                                                    weights_from_uniforms(s.probs, u));
                    const Vec d = difference(sc.projections[m], e.fitted);
                    worst = std::max(worst, empirical_norm_sq(d, sc.design.q_values) - rhs[m]);
                } catch (const NotEnoughSamples&) {
                    return detail::kSingular;
                }
            }
            return worst;
        });
        ReportEntry e =
            detail::entry_from_stats("T1", "T1", stats, cfg.delta, Verdict::wilson_upper, spec.keep_per_rep);
        for (std::size_t m = 0; m < M; ++m) e.diagnostics["khat_m" + std::to_string(m + 1)] = khat[m];
        return e;
    });
}

/// Model-selection oracle inequality, plus the diagnostic share of replications
/// in which m̂ is the model with the smallest mean true loss.
inline std::vector<ReportEntry> check_theorem2(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();
    PenaltyConfig cfg = detail::effective_cfg(sc, spec);
    oracle_factor(cfg.gamma);
    const std::size_t M = sc.models.size();
    struct Rep {
        double stat = 0.0;
        std::size_t chosen = 0;
        std::vector<double> losses;
    };
    const auto reps = parallel_map<Rep>(spec.replications, spec.workers, [&](std::size_t r) {
        Stream st = detail::rep_stream(spec, "T2", r);
        Stream ns = st.fork("noise");
        const Vec y = detail::add(sc.x0, sc.noise.draw(sc.n(), ns));
        Rep out;
        out.losses.assign(M, std::numeric_limits<double>::infinity());
        try {
            const BatchResult br = select_model(sc.design, sc.models, sc.collection, y, cfg, sc.kraft, st.fork("batch"));
            const OracleGap g =
                oracle_gap(br, sc.design, sc.models, sc.projections, sc.x0, sc.collection, cfg, sc.kraft);
            out.stat = g.loss - spec.penalty_scale * g.rhs;
            out.chosen = br.chosen_m;
            for (const auto& o : br.per_model)
                if (o.fitted) out.losses[o.model_index] = loss_true(o.estimate.fitted, sc.x0, sc.design.q_values, cfg.sigma2);
        } catch (const AllModelsFailed&) {
            out.stat = detail::kSingular;
        }
        return out;
    });
    std::vector<double> stats;
    std::vector<double> mean(M, 0.0);
    for (const Rep& r : reps) {
        stats.push_back(r.stat);
        for (std::size_t m = 0; m < M; ++m) mean[m] += r.losses[m] / static_cast<double>(reps.size());
    }
    const std::size_t best = static_cast<std::size_t>(std::min_element(mean.begin(), mean.end()) - mean.begin());
    std::size_t missed = 0;
    for (const Rep& r : reps)
        if (r.chosen != best) ++missed;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<ReportEntry> out;
    ReportEntry e = detail::entry_from_stats("T2", "T2", stats, cfg.delta, Verdict::wilson_upper, spec.keep_per_rep);
    e.diagnostics["factor"] = oracle_factor(cfg.gamma);
    e.wall_seconds = wall;
    out.push_back(std::move(e));
    ReportEntry d = make_entry("T2", "T2 best-model recovery", reps.size(), missed, 0.5, Verdict::diagnostic);
    d.diagnostics["best_model"] = static_cast<double>(best + 1);
    for (std::size_t m = 0; m < M; ++m) d.diagnostics["mean_loss_m" + std::to_string(m + 1)] = mean[m];
    d.wall_seconds = wall;
    out.push_back(std::move(d));
    return out;
}

// ---------------------------------------------------------------------------
// Iterative procedure

struct IterativeRunChecks {
    bool l8_violation = false;
    bool l8_violation_later = false;   ///< restricted to j ≥ 2
    bool membership_violation = false;
    bool loss_gap_violation = false;   ///< |L(x) − L(x')| ≤ 2Δ_{j−1} on S_j
    bool excess_loss_violation = false;///< L(x̂_j) ≤ L(x*) + 2Δ_{j−1}
    bool ess_violation = false;
    bool parsimony_violation = false;
    bool savings_failure = false;
    double prob_sum = 0.0;
    double ess_bound = 0.0;
    std::size_t labels_used = 0;
};

namespace detail {

/// L(β) = βᵀHβ − 2hᵀβ + c over the full design.
struct TrueLoss {
    Mat H;
    Vec h;
    double c = 0.0;
    double operator()(std::span<const double> beta) const { return dot(beta, matvec(H, beta)) - 2.0 * dot(h, beta) + c; }
};

inline TrueLoss make_true_loss(const Mat& g, const DesignSpec& design, std::span<const double> x0, double sigma2) {
    const double n = static_cast<double>(design.size());
    TrueLoss L;
    L.H = weighted_gram(g, design.q_values);
    L.H *= 1.0 / n;
    Vec qx(design.size());
    for (std::size_t i = 0; i < qx.size(); ++i) {
        qx[i] = design.q_values[i] * x0[i] / n;
        L.c += design.q_values[i] * (x0[i] * x0[i] + sigma2) / n;
    }
    L.h = matvec_t(g, qx);
    return L;
}

inline Vec boundary_point(const HypothesisEllipsoid& e, const SpdFactor& f, Stream& st) {
    Vec z(e.center.size());
    double nz = 0.0;
    while (nz == 0.0) {
        for (double& v : z) v = st.gaussian();
        nz = norm2(z);
    }
    for (double& v : z) v *= std::sqrt(std::max(e.radius, 0.0)) / nz;
    const Vec off = f.unwhiten(z);
    Vec p = e.center;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += off[i];
    return p;
}

}  // namespace detail

/// One simulated run of the iterative procedure with all per-run checks.
inline IterativeRunChecks run_iterative_checks(const SimulationScenario& sc, const IterativeConfig& icfg,
                                               const PenaltyConfig& cfg, std::uint64_t seed, std::size_t run) {
    Stream base = Stream::derive(seed, "T3", run);
    Stream ns = base.fork("noise");
    const Vec eps = sc.noise.draw(sc.n(), ns);
    const LabelSource label = [&](std::size_t i) { return sc.x0[i] + eps[i]; };
    Stream algo = base.fork("algorithm");
    Stream pairs = base.fork("pairs");

    const Mat g = gram_matrix(sc.design, icfg.m0);
    const detail::TrueLoss L = detail::make_true_loss(g, sc.design, sc.x0, sc.noise.sigma2);
    const Vec beta_star = SpdFactor(L.H).solve(L.h);
    const double loss_star = L(beta_star);

    IterativeRunChecks c;
    std::size_t seen_history = 0;
    const HypothesisEllipsoid* prev_set = nullptr;  // latest ellipsoid before the step
    HypothesisEllipsoid prev_copy;
    const auto on_step = [&](const IterativeState& st) {
        if (st.j >= 1) {
            const double dj = st.delta_history[st.j];
            const double djm1 = st.delta_history[st.j - 1];
            // Uniform deviation over S_{j−1}.
            if (prev_set) {
                const SpdFactor f(prev_copy.shape);
                for (std::size_t p = 0; p < sc.l8_pairs; ++p) {
                    const Vec a = detail::boundary_point(prev_copy, f, pairs);
                    const Vec b = detail::boundary_point(prev_copy, f, pairs);
                    const double lhs = std::abs(st.running_loss(a) - st.running_loss(b) - (L(a) - L(b)));
                    if (lhs > dj) {
                        c.l8_violation = true;
                        if (st.j >= 2) c.l8_violation_later = true;
                    }
                }
            }
            // Loss spread over S_j and excess loss of x̂_j.
            const HypothesisEllipsoid& cur = st.history.back();
            const SpdFactor fc(cur.shape);
            for (std::size_t p = 0; p < sc.l8_pairs; ++p) {
                const Vec a = detail::boundary_point(cur, fc, pairs);
                const Vec b = detail::boundary_point(cur, fc, pairs);
                if (std::abs(L(a) - L(b)) > 2.0 * djm1) c.loss_gap_violation = true;
            }
            if (L(st.x_hat) > loss_star + 2.0 * djm1) c.excess_loss_violation = true;
        }
        for (; seen_history < st.history.size(); ++seen_history)
            if (!st.history[seen_history].contains(beta_star)) c.membership_violation = true;
        prev_copy = st.history.back();
        prev_set = &prev_copy;
    };
    const IterativeResult res = iterative_run(sc.design, label, icfg, cfg, algo, on_step);

    c.prob_sum = realized_probability_sum(res.state);
    c.ess_bound = effective_sample_bound(res.state, sc.design, icfg, loss_star);
    c.ess_violation = c.prob_sum > c.ess_bound;
    c.labels_used = res.state.labels_used;
    const double queried = static_cast<double>(c.labels_used - icfg.n0);
    c.parsimony_violation =
        queried > c.prob_sum + 3.0 * std::sqrt(c.prob_sum * clamped_log(1.0 / cfg.delta));
    const double budget = static_cast<double>(icfg.stop_time(sc.n()) + icfg.n0);
    c.savings_failure = !(static_cast<double>(c.labels_used) < sc.label_savings_ratio * budget);
    return c;
}

inline std::vector<ReportEntry> check_iterative(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    if (spec.replications < 1) throw ValidationError("replications", ">= 1");
    const auto t0 = std::chrono::steady_clock::now();
    const PenaltyConfig cfg = detail::effective_cfg(sc, spec);
    IterativeConfig icfg = sc.icfg;
    icfg.delta_scale *= spec.penalty_scale;
    const auto runs = parallel_map<IterativeRunChecks>(spec.replications, spec.workers, [&](std::size_t r) {
        return run_iterative_checks(sc, icfg, cfg, spec.seed, r);
    });
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::size_t R = runs.size();
    auto count = [&](auto pred) {
        std::size_t k = 0;
        for (const auto& r : runs)
            if (pred(r)) ++k;
        return k;
    };
    const double d = cfg.delta;
    std::vector<ReportEntry> out;
    out.push_back(make_entry("T3", "L8_uniform_deviation", R, count([](const auto& r) { return r.l8_violation; }), d,
                             Verdict::wilson_upper));
    out.push_back(make_entry("T3", "L8_uniform_deviation j>=2", R,
                             count([](const auto& r) { return r.l8_violation_later; }), d, Verdict::diagnostic));
    out.push_back(make_entry("T3", "T3_membership", R, count([](const auto& r) { return r.membership_violation; }), d,
                             Verdict::wilson_upper));
    out.push_back(make_entry("T3", "T3_loss_spread", R, count([](const auto& r) { return r.loss_gap_violation; }), d,
                             Verdict::wilson_upper));
    out.push_back(make_entry("T3", "T3_excess_loss", R, count([](const auto& r) { return r.excess_loss_violation; }), d,
                             Verdict::wilson_upper));
    out.push_back(make_entry("T3", "T3_both_bullets", R,
                             count([](const auto& r) { return r.loss_gap_violation || r.excess_loss_violation; }), d,
                             Verdict::wilson_upper));
    out.push_back(make_entry("T3", "T3_effective_samples", R, count([](const auto& r) { return r.ess_violation; }), 0.0,
                             Verdict::every_run));
    out.push_back(make_entry("T3", "T3_label_parsimony", R,
                             count([](const auto& r) { return r.parsimony_violation; }), d, Verdict::wilson_upper));
    out.push_back(make_entry("T3", "T3_label_savings", R, count([](const auto& r) { return r.savings_failure; }),
                             1.0 - sc.label_savings_level, Verdict::raw_frequency));
    double mean_labels = 0.0, mean_psum = 0.0, mean_bound = 0.0;
    for (const auto& r : runs) {
        mean_labels += static_cast<double>(r.labels_used) / static_cast<double>(R);
        mean_psum += r.prob_sum / static_cast<double>(R);
        mean_bound += r.ess_bound / static_cast<double>(R);
    }
    for (auto& e : out) {
        e.wall_seconds = wall;
        e.diagnostics["mean_labels_used"] = mean_labels;
        e.diagnostics["mean_probability_sum"] = mean_psum;
        e.diagnostics["mean_effective_sample_bound"] = mean_bound;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dispatch

inline std::vector<ReportEntry> run_check(const SimulationScenario& sc, const BoundCheckSpec& spec) {
    switch (spec.bound_id) {
        case BoundId::L1_pen1: return {check_pen1_bound(sc, spec)};
        case BoundId::L3_pen2: return {check_pen2_bound(sc, spec)};
        case BoundId::L4_noise_tail: return check_noise_tail(sc, spec);
        case BoundId::L7_pen0: return {check_pen0_bound(sc, spec)};
        case BoundId::L2_moment: return check_matrix_deviation(sc, spec, true, false);
        case BoundId::L2_tail: return check_matrix_deviation(sc, spec, false, true);
        case BoundId::L6_delta1: return {check_delta1(sc, spec)};
        case BoundId::L6_delta2: return {check_delta2(sc, spec)};
        case BoundId::T1: return {check_theorem1(sc, spec)};
        case BoundId::T2: return check_theorem2(sc, spec);
        case BoundId::T3: return check_iterative(sc, spec);
    }
    return {};
}

inline ValidationReport validate_bounds(const SimulationScenario& sc, const std::vector<BoundId>& ids,
                                        BoundCheckSpec base) {
    ValidationReport rep;
    for (BoundId id : ids) {
        base.bound_id = id;
        for (auto& e : run_check(sc, base)) rep.entries.push_back(std::move(e));
    }
    return rep;
}

}  // namespace activereg
