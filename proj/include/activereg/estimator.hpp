#pragma once

// Importance-weighted least squares: Bernoulli sampling weights, the weighted
// projector R_{m,p} and the empirical / expected losses.

#include <activereg/design.hpp>
#include <activereg/error.hpp>
#include <activereg/linalg.hpp>
#include <activereg/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace activereg {

/// Candidate sampling probabilities P_k over the design points.
struct SamplingScheme {
    int k = 1;
    Vec probs;
    double p_min = 0.0;
    std::string label;

    /// p_min defaults to the smallest probability.
    static SamplingScheme make(int k, Vec probs, std::optional<double> p_min = std::nullopt,
                               std::string label = {}) {
        if (k < 1) throw ValidationError("scheme.k", ">= 1");
        if (probs.empty()) throw ValidationError("scheme.probs", "nonempty");
        const double lo = *std::min_element(probs.begin(), probs.end());
        const double hi = *std::max_element(probs.begin(), probs.end());
        if (!(hi <= 1.0)) throw ValidationError("scheme.probs", "<= 1");
        const double floor = p_min.value_or(lo);
        if (!(floor > 0.0)) throw ValidationError("scheme.p_min", "> 0");
        if (lo < floor) throw ValidationError("scheme.probs", ">= p_min");
        return {k, std::move(probs), floor, std::move(label)};
    }

    std::size_t size() const noexcept { return probs.size(); }
};

struct WeightDraw {
    Vec uniforms;
    std::vector<std::uint8_t> weights;

    std::size_t active_count() const {
        return static_cast<std::size_t>(std::count(weights.begin(), weights.end(), std::uint8_t{1}));
    }
};

/// wi = 1[ui < pi] for given uniforms; sharing uniforms across schemes couples
/// their draws.
inline WeightDraw weights_from_uniforms(std::span<const double> probs, Vec uniforms) {
    WeightDraw d{std::move(uniforms), {}};
    d.weights.resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) d.weights[i] = d.uniforms[i] < probs[i] ? 1 : 0;
    return d;
}

inline Vec draw_uniforms(std::size_t n, Stream& stream) {
    Vec u(n);
    for (double& x : u) x = stream.uniform();
    return u;
}

inline WeightDraw draw_weights(const SamplingScheme& scheme, Stream& stream) {
    return weights_from_uniforms(scheme.probs, draw_uniforms(scheme.size(), stream));
}

/// Diagonal of D_{w,q,p}: qi wi / pi.
inline Vec importance_weights(std::span<const double> q, std::span<const double> probs,
                              std::span<const std::uint8_t> weights) {
    Vec d(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) d[i] = weights[i] ? q[i] / probs[i] : 0.0;
    return d;
}

enum class NoiseKind { gaussian, bounded_symmetric };

inline std::string to_string(NoiseKind k) {
    return k == NoiseKind::gaussian ? "gaussian" : "bounded-symmetric";
}

/// Centered noise satisfying the Bernstein moment condition: Gaussian, or
/// uniform on [-σ√3, σ√3].
struct NoiseSpec {
    double sigma2 = 0.0;
    NoiseKind kind = NoiseKind::gaussian;

    Vec draw(std::size_t n, Stream& stream) const {
        Vec e(n, 0.0);
        const double sigma = std::sqrt(sigma2);
        if (sigma == 0.0) return e;
        for (double& x : e) {
            if (kind == NoiseKind::gaussian)
                x = sigma * stream.gaussian();
            else
                x = (2.0 * stream.uniform() - 1.0) * sigma * std::sqrt(3.0);
        }
        return e;
    }
};

/// (1/n) Σ ri vi².
inline double empirical_norm_sq(std::span<const double> v, std::span<const double> r) {
    if (v.size() != r.size()) throw Error("empirical_norm_sq: length mismatch");
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += r[i] * v[i] * v[i];
    return s / static_cast<double>(v.size());
}

inline Vec difference(std::span<const double> a, std::span<const double> b) {
    Vec d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

/// Weighted projector onto span(G) in the D-weighted empirical norm:
/// R v = G A⁻¹ (1/n) Gᵀ D v with A = (1/n) Gᵀ D G.
class WeightedProjector {
public:
    WeightedProjector(const Mat& g, Vec d) : g_(&g), d_(std::move(d)), factor_(make_factor(g, d_)) {}

    Vec coefficients(std::span<const double> v) const {
        const std::size_t n = g_->rows();
        Vec dv(n);
        for (std::size_t i = 0; i < n; ++i) dv[i] = d_[i] * v[i] / static_cast<double>(n);
        return factor_.solve(matvec_t(*g_, dv));
    }

    Vec apply(std::span<const double> v) const { return matvec(*g_, coefficients(v)); }

    const SpdFactor& factor() const noexcept { return factor_; }
    std::span<const double> weights() const noexcept { return d_; }

private:
    static SpdFactor make_factor(const Mat& g, std::span<const double> d) {
        Mat a = weighted_gram(g, d);
        a *= 1.0 / static_cast<double>(g.rows());
        try {
            return SpdFactor(a);
        } catch (const NotPositiveDefinite& e) {
            throw NotEnoughSamples("weighted Gram matrix is singular: too few active samples (" +
                                   std::string(e.what()) + ")");
        }
    }

    const Mat* g_;
    Vec d_;
    SpdFactor factor_;
};

struct Estimate {
    Vec coefficients;
    Vec fitted;
    std::size_t active_count = 0;
    std::size_t model_dim = 0;
};

/// x̂ = argmin over S_m of ‖x − y‖²_{n, qw/p}, given a precomputed Gram matrix.
inline Estimate fit_weighted(const Mat& g, std::span<const double> q, std::span<const double> y,
                             std::span<const double> probs, const WeightDraw& draw) {
    if (y.size() != g.rows() || q.size() != g.rows() || probs.size() != g.rows())
        throw Error("fit_weighted: length mismatch");
    const WeightedProjector proj(g, importance_weights(q, probs, draw.weights));
    Estimate e;
    e.coefficients = proj.coefficients(y);
    e.fitted = matvec(g, e.coefficients);
    e.active_count = draw.active_count();
    e.model_dim = g.cols();
    return e;
}

inline Estimate fit_weighted(const DesignSpec& design, const Model& model, std::span<const double> y,
                             const SamplingScheme& scheme, const WeightDraw& draw) {
    const Mat g = gram_matrix(design, model);
    return fit_weighted(g, design.q_values, y, scheme.probs, draw);
}

/// L_n(x, y, p) = (1/n) Σ qi (wi/pi) (x(ti) − yi)².
inline double loss_empirical(std::span<const double> x, std::span<const double> y,
                             std::span<const double> q, std::span<const double> probs,
                             std::span<const std::uint8_t> weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (weights[i]) {
            const double r = x[i] - y[i];
            s += q[i] / probs[i] * r * r;
        }
    return s / static_cast<double>(x.size());
}

inline double loss_empirical(std::span<const double> x, std::span<const double> y, const DesignSpec& design,
                             const SamplingScheme& scheme, const WeightDraw& draw) {
    return loss_empirical(x, y, design.q_values, scheme.probs, draw.weights);
}

/// L(x) = (1/n) Σ qi [(x − x0)²(ti) + σ²].
inline double loss_true(std::span<const double> x, std::span<const double> x0, std::span<const double> q,
                        double sigma2) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = x[i] - x0[i];
        s += q[i] * (r * r + sigma2);
    }
    return s / static_cast<double>(x.size());
}

inline double loss_true(std::span<const double> x, std::span<const double> x0, const DesignSpec& design,
                        double sigma2) {
    return loss_true(x, x0, design.q_values, sigma2);
}

/// q-projection x_m = R_m x0 of a target onto the model (all weights one).
inline Vec project_q(const Mat& g, std::span<const double> q, std::span<const double> target) {
    const WeightedProjector proj(g, Vec(q.begin(), q.end()));
    return proj.apply(target);
}

}  // namespace activereg
