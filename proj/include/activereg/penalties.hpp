#pragma once

// Penalties and radii. Every function is a direct evaluation of a closed-form
// bound; logs of arguments at or below one are clamped to zero.

#include <activereg/design.hpp>
#include <activereg/error.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <vector>

namespace activereg {

struct PenaltyConfig {
    double delta = 0.1;     ///< confidence level δ
    double gamma = 0.2;     ///< trade-off γ
    double r_moment = 2.0;  ///< r > 1
    double d_of_r = 1.0;    ///< the constant d(r) of the quadratic-form tail bound
    double sigma2 = 0.25;
    double Q = 1.0;
    double alpha = 1.0;     ///< Gram deviation decay exponent
    double C_bias = 1.0;    ///< uniform bound on ‖x0 − x_m‖∞
    double c_lemma5 = 1.0;  ///< constant c of the E[R_{m,p}] bias term
    std::map<std::size_t, double> bias_proxy;  ///< model index -> ‖x0 − x_m‖²_{n,q}

    void validate() const {
        if (!(delta > 0 && delta < 1)) throw ValidationError("delta", "in (0,1)");
        if (!(gamma > 0 && gamma < 1)) throw ValidationError("gamma", "in (0,1)");
        if (!(r_moment > 1)) throw ValidationError("r", "> 1");
        if (!(d_of_r > 0)) throw ValidationError("d_of_r", "> 0");
        if (!(sigma2 >= 0)) throw ValidationError("sigma2", ">= 0");
        if (!(Q > 0)) throw ValidationError("Q", "> 0");
        if (!(alpha > 0)) throw ValidationError("alpha", "> 0");
        if (!(C_bias >= 0)) throw ValidationError("C_bias", ">= 0");
        if (!(c_lemma5 >= 0)) throw ValidationError("c_lemma5", ">= 0");
        for (const auto& [m, b] : bias_proxy)
            if (!(b >= 0)) throw ValidationError("bias_proxy", ">= 0");
    }
};

/// log(x) for x > 1, else 0.
inline double clamped_log(double x) { return x > 1.0 ? std::log(x) : 0.0; }

inline constexpr double kTauTimesTwo = 2.5615528128088303;  // (√17 + 1)/2
inline const double kTwoPow74 = std::pow(2.0, 1.75);

/// Kraft weights L_{m,k} = [ln((d+1)(d+2)) + ln((k+1)(k+2))]² / (d(r) r (d+1)),
/// so that exp(−√(d(r) r L (d+1))) = 1/((d+1)(d+2)(k+1)(k+2)).
struct KraftWeights {
    double d_of_r = 1.0;
    double r = 2.0;

    double L(std::size_t dim, int k) const {
        const double d = static_cast<double>(dim);
        const double s = std::log((d + 1) * (d + 2)) + std::log((k + 1.0) * (k + 2.0));
        return s * s / (d_of_r * r * (d + 1));
    }

    double summand(std::size_t dim, int k) const {
        return std::exp(-std::sqrt(d_of_r * r * L(dim, k) * (static_cast<double>(dim) + 1)));
    }

    /// Σ over the given model dimensions and k = 1..max_k.
    double sum(const std::vector<std::size_t>& dims, int max_k) const {
        double s = 0.0;
        for (std::size_t d : dims)
            for (int k = 1; k <= max_k; ++k) s += summand(d, k);
        return s;
    }
};

inline KraftWeights default_kraft(const PenaltyConfig& cfg) { return {cfg.d_of_r, cfg.r_moment}; }

/// Throws KraftViolation unless the truncated Kraft sum is below one.
inline double check_kraft(const KraftWeights& kraft, const std::vector<std::size_t>& dims, int max_k) {
    const double s = kraft.sum(dims, max_k);
    if (!(s < 1.0)) throw KraftViolation("Kraft sum " + std::to_string(s) + " is not below 1");
    return s;
}

// ---------------------------------------------------------------------------
// Fixed model

inline double beta_tilde(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg, double p_min) {
    const double d = static_cast<double>(m.dim());
    const double arg = kTwoPow74 * d * k * (k + 1.0) / cfg.delta;
    return m.c_m * kTauTimesTwo * std::sqrt(d * cfg.Q / (static_cast<double>(n) * p_min)) *
           std::sqrt(2.0 * clamped_log(arg));
}

inline double bias_proxy_of(std::size_t model_index, const PenaltyConfig& cfg) {
    const auto it = cfg.bias_proxy.find(model_index);
    if (it == cfg.bias_proxy.end())
        throw MissingBiasProxy("no bias proxy for model " + std::to_string(model_index + 1));
    return it->second;
}

/// Penalty for the fluctuation (R_{m,p} − E R_{m,p})(x0 − x_m).
inline double pen1_tilde(const Model& m, std::size_t model_index, int k, std::size_t n,
                         const PenaltyConfig& cfg, double p_min) {
    const double bias = bias_proxy_of(model_index, cfg);
    const double b = beta_tilde(m, k, n, cfg, p_min);
    const double f = b * (1.0 + std::sqrt(b));
    return bias * f * f;
}

/// Penalty for the noise term R_{m,p} ε.
inline double pen2_tilde(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg,
                         const KraftWeights& kraft) {
    const double d = static_cast<double>(m.dim());
    const double nn = static_cast<double>(n);
    const double l = clamped_log(2.0 / cfg.delta);
    return cfg.sigma2 * cfg.r_moment * cfg.Q * (1.0 + kraft.L(m.dim(), k)) * (d + 1.0) / nn +
           cfg.sigma2 * cfg.Q * l * l / (cfg.d_of_r * nn);
}

/// (1+γ) peñ1 + (1+1/γ) peñ2, the objective for choosing a scheme at fixed m.
inline double pen_fixed_model(const Model& m, std::size_t model_index, int k, std::size_t n,
                              const PenaltyConfig& cfg, double p_min, const KraftWeights& kraft) {
    return (1.0 + cfg.gamma) * pen1_tilde(m, model_index, k, n, cfg, p_min) +
           (1.0 + 1.0 / cfg.gamma) * pen2_tilde(m, k, n, cfg, kraft);
}

// ---------------------------------------------------------------------------
// Model selection

inline double pen0(const Model& m, int /*k*/, std::size_t n, const PenaltyConfig& cfg, double p_k_min) {
    const double d = static_cast<double>(m.dim());
    return cfg.Q * cfg.C_bias * cfg.C_bias / p_k_min *
           std::sqrt(clamped_log(6.0 * d * (d + 1.0) / cfg.delta) / (2.0 * static_cast<double>(n)));
}

inline double beta_ms(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg, double p_k_min) {
    const double d = static_cast<double>(m.dim());
    const double arg = 3.0 * kTwoPow74 * d * d * (d + 1.0) * k * (k + 1.0) / cfg.delta;
    return m.c_m * kTauTimesTwo * std::sqrt(d * cfg.Q / (static_cast<double>(n) * p_k_min)) *
           std::sqrt(2.0 * clamped_log(arg));
}

inline double pen1_ms(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg, double p_k_min) {
    const double b = beta_ms(m, k, n, cfg, p_k_min);
    const double f = b * (1.0 + std::sqrt(b));
    return cfg.Q * cfg.C_bias * f * f;
}

inline double pen2_ms(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg,
                      const KraftWeights& kraft) {
    const double d = static_cast<double>(m.dim());
    const double nn = static_cast<double>(n);
    const double l = clamped_log(6.0 / cfg.delta);
    return cfg.Q * cfg.sigma2 *
           (cfg.r_moment * (1.0 + kraft.L(m.dim(), k)) * (d + 1.0) / nn + l * l / (cfg.d_of_r * nn));
}

struct PenaltyBreakdown {
    double pen0 = 0.0;
    double pen1 = 0.0;
    double pen2 = 0.0;
    double bias_term = 0.0;  ///< 2((c+1) n^{-(1+α)} Q C / p_min)²
    double combined = 0.0;
};

/// pen = 2 pen0 + (1/p + 1/γ) pen1 + ((2/γ + 1)/p² + 1/γ) pen2 + 2((c+1) n^{-(1+α)} QC/p)².
inline PenaltyBreakdown pen_combined(const Model& m, int k, std::size_t n, const PenaltyConfig& cfg,
                                     double p_min, const KraftWeights& kraft) {
    PenaltyBreakdown b;
    b.pen0 = pen0(m, k, n, cfg, p_min);
    b.pen1 = pen1_ms(m, k, n, cfg, p_min);
    b.pen2 = pen2_ms(m, k, n, cfg, kraft);
    const double g = cfg.gamma;
    const double tail = (cfg.c_lemma5 + 1.0) * std::pow(static_cast<double>(n), -(1.0 + cfg.alpha)) *
                        cfg.Q * cfg.C_bias / p_min;
    b.bias_term = 2.0 * tail * tail;
    b.combined = 2.0 * b.pen0 + (1.0 / p_min + 1.0 / g) * b.pen1 +
                 ((2.0 / g + 1.0) / (p_min * p_min) + 1.0 / g) * b.pen2 + b.bias_term;
    return b;
}

// ---------------------------------------------------------------------------
// Iterative radii

/// Initial radius from the fixed-model penalties at r = γ = 2 with the bias
/// replaced by the uniform bound B².
inline double delta0(std::size_t n0, const Model& m0, const PenaltyConfig& cfg, double p_min, double B) {
    const double d0 = static_cast<double>(m0.dim());
    const double nn = static_cast<double>(n0);
    const double b = m0.c_m * kTauTimesTwo * std::sqrt(d0 * cfg.Q / (nn * p_min)) *
                     std::sqrt(2.0 * clamped_log(kTwoPow74 * d0 / cfg.delta));
    const double l = clamped_log(2.0 / cfg.delta);
    const double f = b * (1.0 + b);
    return 2.0 * cfg.sigma2 * cfg.Q * (2.0 * (d0 + 1.0) / nn + l * l / nn) + 2.0 * f * f * B * B;
}

struct DeltaTerms {
    double noise = 0.0;
    double bounded_difference = 0.0;
    double complexity = 0.0;
    double total() const { return noise + bounded_difference + complexity; }
};

/// Radius at step j ≥ 1. `log_horizon` is the n (or stop time T) in the
/// complexity term's log.
inline DeltaTerms delta_j_terms(std::size_t j, std::size_t n0, std::size_t d_j, double B_j,
                                std::size_t log_horizon, const PenaltyConfig& cfg) {
    const double N = static_cast<double>(n0 + j);
    const double d = static_cast<double>(d_j);
    const double ell = clamped_log(4.0 * N * (N + 1.0) / cfg.delta);
    const double cap = std::min(2.0 * B_j, 1.0);
    DeltaTerms t;
    t.noise = std::sqrt(cfg.sigma2 * cfg.Q * (2.0 * (d + 1.0) / N + ell * ell / N));
    t.bounded_difference = std::sqrt(ell * 16.0 * B_j * B_j * cap * cap * cfg.Q * cfg.Q / N);
    t.complexity = 4.0 * std::sqrt(4.0 * (d + 1.0) * clamped_log(static_cast<double>(log_horizon)) / N);
    return t;
}

inline double delta_j(std::size_t j, std::size_t n0, std::size_t d_j, double B_j, std::size_t log_horizon,
                      const PenaltyConfig& cfg) {
    return delta_j_terms(j, n0, d_j, B_j, log_horizon, cfg).total();
}

}  // namespace activereg
