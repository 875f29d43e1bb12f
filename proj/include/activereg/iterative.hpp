#pragma once

// Iterative procedure: hypothesis sets are coefficient ellipsoids (exact level
// sets of the quadratic running loss), the query probability at a candidate is
// the capped disagreement of the current set, and labels are drawn as
// Bernoulli(p).

#include <activereg/design.hpp>
#include <activereg/error.hpp>
#include <activereg/estimator.hpp>
#include <activereg/penalties.hpp>
#include <activereg/rng.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

namespace activereg {

/// {β : (β − center)ᵀ shape (β − center) ≤ radius}.
struct HypothesisEllipsoid {
    Vec center;
    Mat shape;
    double radius = 0.0;
    std::size_t step = 0;

    double quad(std::span<const double> beta) const {
        const Vec d = difference(beta, center);
        return dot(d, matvec(shape, d));
    }
    bool contains(std::span<const double> beta, double rel_slack = 1e-9) const {
        return quad(beta) <= radius * (1.0 + rel_slack) + 1e-12;
    }
};

/// Half-width of {φᵀβ : β in e} times two: 2√(radius · φᵀ shape⁻¹ φ).
inline double ellipsoid_disagreement(const HypothesisEllipsoid& e, const SpdFactor& f, std::span<const double> phi) {
    if (e.radius <= 0.0) return 0.0;
    return 2.0 * std::sqrt(e.radius * f.inverse_quadratic(phi));
}

struct IterativeConfig {
    std::size_t n0 = 0;
    Model m0;
    double B_au = 2.0;
    std::optional<std::size_t> T;
    std::vector<std::size_t> dim_schedule;  ///< d_j for j = 1, 2, ...; empty means d_{m0}
    std::optional<double> delta0_override;
    double delta_scale = 1.0;               ///< multiplies every radius; 1 in normal use
    bool log_horizon_T = false;             ///< use T instead of n in the complexity log
    bool estimate_sigma2 = false;

    void validate(std::size_t n) const {
        if (n0 < m0.dim()) throw ValidationError("iterative.n0", ">= model dimension");
        if (n0 > n) throw ValidationError("iterative.n0", "<= n");
        if (T && *T + n0 > n) throw ValidationError("iterative.T", "T + n0 <= n");
        if (!(B_au >= 0.0)) throw ValidationError("iterative.B", ">= 0");
        if (!(delta_scale >= 0.0)) throw ValidationError("iterative.delta_scale", ">= 0");
        if (delta0_override && !(*delta0_override >= 0.0))
            throw ValidationError("iterative.delta0_override", ">= 0");
        for (std::size_t i = 0; i < dim_schedule.size(); ++i) {
            if (dim_schedule[i] < 1) throw ValidationError("iterative.dim_schedule", ">= 1");
            if (i > 0 && dim_schedule[i] > dim_schedule[i - 1])
                throw ValidationError("iterative.dim_schedule", "nonincreasing");
        }
    }

    std::size_t stop_time(std::size_t n) const { return T.value_or(n - n0); }

    std::size_t dim_at(std::size_t j) const {
        if (dim_schedule.empty()) return m0.dim();
        return dim_schedule[std::min(j == 0 ? 0 : j - 1, dim_schedule.size() - 1)];
    }
};

using LabelSource = std::function<double(std::size_t)>;

struct StepRecord {
    std::size_t j = 0;
    std::size_t candidate = 0;
    double p = 0.0;
    bool w = false;
    double delta = 0.0;
    double B = 0.0;
    std::size_t labels_used = 0;
};

struct IterativeState {
    std::size_t j = 0;
    std::vector<std::size_t> sampled;    ///< M_j in sampling order
    std::vector<std::uint8_t> is_sampled;
    std::vector<HypothesisEllipsoid> history;
    double B = 0.0;                      ///< sup-disagreement of the current set, capped at 1
    std::vector<double> delta_history;   ///< Δ0 .. Δj
    std::size_t labels_used = 0;
    std::vector<StepRecord> trace;
    Vec x_hat;                           ///< coefficients of x̂_j
    double sigma2_used = 0.0;
    std::optional<double> sigma2_estimate;

    // Running loss L_j(β) = (βᵀ S β − 2 sᵀβ + c) / N.
    Mat S;
    Vec s;
    double c = 0.0;
    std::size_t N = 0;

    Mat g;                               ///< design matrix of the model, n × d
    std::vector<double> min_disagreement;  ///< per design point, min over history (uncapped)

    double running_loss(std::span<const double> beta) const {
        return (dot(beta, matvec(S, beta)) - 2.0 * dot(s, beta) + c) / static_cast<double>(N);
    }
};

/// Capped disagreement of the current hypothesis set at a design point.
inline double disagreement_at(std::size_t point_index, const IterativeState& state) {
    if (state.history.empty()) throw Error("disagreement_at: empty history");
    return std::min(state.min_disagreement[point_index], 1.0);
}

/// Uncapped min over a list of ellipsoids of the disagreement at φ.
inline double disagreement_over(const std::vector<HypothesisEllipsoid>& history, std::span<const double> phi) {
    double best = std::numeric_limits<double>::infinity();
    for (const HypothesisEllipsoid& e : history) {
        const SpdFactor f(e.shape);
        best = std::min(best, ellipsoid_disagreement(e, f, phi));
    }
    return best;
}

namespace detail {

inline void absorb_ellipsoid(IterativeState& st, HypothesisEllipsoid e) {
    const SpdFactor f(e.shape);
    double B = 0.0;
    for (std::size_t i = 0; i < st.g.rows(); ++i) {
        const double v = ellipsoid_disagreement(e, f, st.g.row(i));
        st.min_disagreement[i] = std::min(st.min_disagreement[i], v);
        B = std::max(B, std::min(st.min_disagreement[i], 1.0));
    }
    st.B = B;
    st.history.push_back(std::move(e));
}

inline void add_observation(IterativeState& st, std::span<const double> phi, double weight, double y) {
    const std::size_t d = phi.size();
    for (std::size_t a = 0; a < d; ++a) {
        st.s[a] += weight * phi[a] * y;
        for (std::size_t b = 0; b < d; ++b) st.S(a, b) += weight * phi[a] * phi[b];
    }
    st.c += weight * y * y;
}

inline Mat current_shape(const IterativeState& st) {
    Mat a = st.S;
    a *= 1.0 / static_cast<double>(st.N);
    return a;
}

}  // namespace detail

/// Initial block: n0 points drawn uniformly without replacement, all labeled,
/// least-squares fit and the ellipsoid of radius Δ0.
inline IterativeState iterative_init(const DesignSpec& design, const LabelSource& label, const IterativeConfig& cfg,
                                     const PenaltyConfig& pcfg, Stream& stream) {
    const std::size_t n = design.size();
    cfg.validate(n);
    IterativeState st;
    st.g = gram_matrix(design, cfg.m0);
    const std::size_t d = cfg.m0.dim();
    st.is_sampled.assign(n, 0);
    st.min_disagreement.assign(n, std::numeric_limits<double>::infinity());
    st.S = Mat(d, d);
    st.s.assign(d, 0.0);

    // Partial Fisher-Yates over the index set.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.n0; ++i) {
        const std::size_t r = i + static_cast<std::size_t>(stream.below(n - i));
        std::swap(idx[i], idx[r]);
    }
    Vec ys(cfg.n0);
    for (std::size_t i = 0; i < cfg.n0; ++i) {
        const std::size_t t = idx[i];
        st.sampled.push_back(t);
        st.is_sampled[t] = 1;
        ys[i] = label(t);
        detail::add_observation(st, st.g.row(t), design.q_values[t], ys[i]);
    }
    st.N = cfg.n0;
    st.labels_used = cfg.n0;

    const Mat shape = detail::current_shape(st);
    Vec b = st.s;
    for (double& v : b) v /= static_cast<double>(st.N);
    try {
        st.x_hat = SpdFactor(shape).solve(b);
    } catch (const NotPositiveDefinite& e) {
        throw NotEnoughSamples(std::string("initial sample does not identify the model: ") + e.what());
    }

    st.sigma2_used = pcfg.sigma2;
    if (cfg.estimate_sigma2 && cfg.n0 > d) {
        double rss = 0.0;
        for (std::size_t i = 0; i < cfg.n0; ++i) {
            const double r = dot(st.g.row(st.sampled[i]), st.x_hat) - ys[i];
            rss += r * r;
        }
        st.sigma2_estimate = rss / static_cast<double>(cfg.n0 - d);
        st.sigma2_used = *st.sigma2_estimate;
    }

    PenaltyConfig pc = pcfg;
    pc.sigma2 = st.sigma2_used;
    const double d0 = cfg.delta0_override ? *cfg.delta0_override
                                          : cfg.delta_scale * delta0(cfg.n0, cfg.m0, pc, 1.0, cfg.B_au);
    st.delta_history.push_back(d0);
    detail::absorb_ellipsoid(st, {st.x_hat, shape, d0, 0});
    return st;
}

/// One candidate: draw it uniformly from the unsampled points, query with
/// probability p_j, refit and add an ellipsoid on a query.
inline void iterative_step(IterativeState& st, const DesignSpec& design, const LabelSource& label,
                           const IterativeConfig& cfg, const PenaltyConfig& pcfg, Stream& stream) {
    const std::size_t n = design.size();
    const std::size_t remaining = n - st.sampled.size();
    if (remaining == 0) throw Exhausted();

    // The r-th unsampled point in index order.
    std::size_t r = static_cast<std::size_t>(stream.below(remaining));
    std::size_t cand = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!st.is_sampled[i]) {
            if (r == 0) {
                cand = i;
                break;
            }
            --r;
        }
    const double u = stream.uniform();

    st.j += 1;
    const double B_prev = st.B;
    const double p = disagreement_at(cand, st);
    const bool w = u < p;
    st.sampled.push_back(cand);
    st.is_sampled[cand] = 1;
    st.N += 1;

    PenaltyConfig pc = pcfg;
    pc.sigma2 = st.sigma2_used;
    const std::size_t horizon = cfg.log_horizon_T ? cfg.stop_time(n) : n;
    const double dj = cfg.delta_scale * delta_j(st.j, cfg.n0, cfg.dim_at(st.j), B_prev, horizon, pc);
    st.delta_history.push_back(dj);

    if (w) {
        st.labels_used += 1;
        const double y = label(cand);
        detail::add_observation(st, st.g.row(cand), design.q_values[cand] / p, y);
        const Mat shape = detail::current_shape(st);
        Vec b = st.s;
        for (double& v : b) v /= static_cast<double>(st.N);
        const SpdFactor f(shape);
        const Vec beta_u = f.solve(b);

        // Keep x̂_j inside the previous set by radial projection; the level set
        // through x̂_j then has radius Δj + (x̂_j − β_u)ᵀÂ(x̂_j − β_u).
        const HypothesisEllipsoid& prev = st.history.back();
        Vec x_hat = beta_u;
        const double qd = prev.quad(beta_u);
        if (qd > prev.radius) {
            const double scale = qd > 0.0 ? std::sqrt(prev.radius / qd) : 0.0;
            for (std::size_t a = 0; a < x_hat.size(); ++a)
                x_hat[a] = prev.center[a] + scale * (beta_u[a] - prev.center[a]);
        }
        const Vec diff = difference(x_hat, beta_u);
        const double slack = dot(diff, matvec(shape, diff));
        st.x_hat = x_hat;
        detail::absorb_ellipsoid(st, {beta_u, shape, dj + slack, st.j});
    }
    st.trace.push_back({st.j, cand, p, w, dj, st.B, st.labels_used});
}

struct IterativeResult {
    IterativeState state;
    Estimate estimate;
};

inline IterativeResult iterative_run(const DesignSpec& design, const LabelSource& label, const IterativeConfig& cfg,
                                     const PenaltyConfig& pcfg, Stream& stream,
                                     const std::function<void(const IterativeState&)>& on_step = {}) {
    IterativeResult r{iterative_init(design, label, cfg, pcfg, stream), {}};
    if (on_step) on_step(r.state);
    const std::size_t T = cfg.stop_time(design.size());
    for (std::size_t j = 0; j < T && r.state.sampled.size() < design.size(); ++j) {
        iterative_step(r.state, design, label, cfg, pcfg, stream);
        if (on_step) on_step(r.state);
    }
    r.estimate.coefficients = r.state.x_hat;
    r.estimate.fitted = matvec(r.state.g, r.state.x_hat);
    r.estimate.active_count = r.state.labels_used;
    r.estimate.model_dim = cfg.m0.dim();
    return r;
}

/// 2√2 r̄ (√L(x*) Σ √dj + Σ √(dj Δj)) over the steps taken.
inline double effective_sample_bound(const IterativeState& st, const DesignSpec& design, const IterativeConfig& cfg,
                                     double loss_star) {
    double a = 0.0, b = 0.0;
    double rbar = 0.0;
    for (std::size_t j = 1; j <= st.j; ++j) {
        const std::size_t dj = cfg.dim_at(j);
        rbar = std::max(rbar, rbar_bound(design.basis, dj));
        a += std::sqrt(static_cast<double>(dj));
        b += std::sqrt(static_cast<double>(dj) * st.delta_history[j]);
    }
    if (st.j == 0) return 0.0;
    return 2.0 * std::numbers::sqrt2 * rbar * (std::sqrt(loss_star) * a + b);
}

/// Σ pj over the steps taken.
inline double realized_probability_sum(const IterativeState& st) {
    double s = 0.0;
    for (const StepRecord& r : st.trace) s += r.p;
    return s;
}

}  // namespace activereg
