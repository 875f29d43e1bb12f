#pragma once

// Fixed designs on [0, 1], orthonormal basis families, Gram matrices and the
// structural diagnostics (density bound, sup-norm bound, Gram deviation).

#include <activereg/error.hpp>
#include <activereg/linalg.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace activereg {

enum class BasisKind { trigonometric, histogram, piecewise_polynomial, polynomial };

inline std::string to_string(BasisKind k) {
    switch (k) {
        case BasisKind::trigonometric: return "trigonometric";
        case BasisKind::histogram: return "histogram";
        case BasisKind::piecewise_polynomial: return "piecewise-polynomial";
        case BasisKind::polynomial: return "polynomial";
    }
    return "unknown";
}

namespace detail {

/// Legendre polynomial P_l(x) by the three-term recurrence.
inline double legendre(int l, double x) {
    if (l == 0) return 1.0;
    double p0 = 1.0, p1 = x;
    for (int k = 1; k < l; ++k) {
        const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

inline int cell_of(double t, int cells) {
    const int s = static_cast<int>(std::floor(t * cells));
    return std::clamp(s, 0, cells - 1);
}

}  // namespace detail

/// Basis families orthonormal in L2([0,1]) under the uniform density.
///
///  - trigonometric: φ1 = 1, φ2k = √2 cos(2πkt), φ2k+1 = √2 sin(2πkt)
///  - histogram: φj = √B · 1[(j-1)/B, j/B) on B = `pieces` bins
///  - piecewise-polynomial: scaled Legendre polynomials of degree ≤ `degree`
///    on each of `pieces` equal cells; index j-1 = cell·(degree+1) + order
///  - polynomial: shifted Legendre, φj = √(2j-1) P_{j-1}(2t-1)
struct BasisFamily {
    BasisKind kind = BasisKind::trigonometric;
    int degree = 0;
    int pieces = 1;

    static BasisFamily trigonometric() { return {BasisKind::trigonometric, 0, 1}; }
    static BasisFamily histogram(int bins) { return {BasisKind::histogram, 0, bins}; }
    static BasisFamily piecewise_polynomial(int degree, int pieces) {
        return {BasisKind::piecewise_polynomial, degree, pieces};
    }
    static BasisFamily polynomial() { return {BasisKind::polynomial, 0, 1}; }

    /// Largest valid index, or -1 when unbounded.
    int max_index() const {
        switch (kind) {
            case BasisKind::histogram: return pieces;
            case BasisKind::piecewise_polynomial: return pieces * (degree + 1);
            default: return -1;
        }
    }

    bool valid_index(int j) const { return j >= 1 && (max_index() < 0 || j <= max_index()); }

    double operator()(int j, double t) const {
        switch (kind) {
            case BasisKind::trigonometric: {
                if (j == 1) return 1.0;
                const int k = j / 2;
                const double arg = 2.0 * std::numbers::pi * k * t;
                return std::numbers::sqrt2 * (j % 2 == 0 ? std::cos(arg) : std::sin(arg));
            }
            case BasisKind::histogram:
                return detail::cell_of(t, pieces) == j - 1 ? std::sqrt(static_cast<double>(pieces)) : 0.0;
            case BasisKind::piecewise_polynomial: {
                const int cell = (j - 1) / (degree + 1);
                const int order = (j - 1) % (degree + 1);
                if (detail::cell_of(t, pieces) != cell) return 0.0;
                const double local = 2.0 * (t * pieces - cell) - 1.0;
                return std::sqrt(static_cast<double>(pieces) * (2.0 * order + 1.0)) *
                       detail::legendre(order, local);
            }
            case BasisKind::polynomial:
                return std::sqrt(2.0 * j - 1.0) * detail::legendre(j - 1, 2.0 * t - 1.0);
        }
        return 0.0;
    }

    friend bool operator==(const BasisFamily&, const BasisFamily&) = default;
};

/// Fixed design t1 < ... < tn in [0, 1] with density values q(ti) and the
/// density bound Q.
struct DesignSpec {
    Vec points;
    Vec q_values;
    double Q = 1.0;
    BasisFamily basis;

    std::size_t size() const noexcept { return points.size(); }

    /// Throws ValidationError on malformed input. The density bound itself is
    /// checked by check_conditions.
    void validate() const {
        if (points.size() < 2) throw ValidationError("design.n", ">= 2");
        if (q_values.size() != points.size())
            throw ValidationError("design.q", "one density value per point");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!(points[i] >= 0.0 && points[i] <= 1.0))
                throw ValidationError("design.t", "points in [0, 1]");
            if (i > 0 && !(points[i] > points[i - 1]))
                throw ValidationError("design.t", "strictly increasing");
            if (!(q_values[i] > 0.0) || !std::isfinite(q_values[i]))
                throw ValidationError("design.q", "positive and finite");
        }
        if (!(Q > 0.0)) throw ValidationError("design.Q", "> 0");
    }

    /// Midpoint grid ti = (i - 1/2)/n with uniform density.
    static DesignSpec equispaced(std::size_t n, BasisFamily basis, double Q = 1.0) {
        DesignSpec d;
        d.points.resize(n);
        for (std::size_t i = 0; i < n; ++i) d.points[i] = (static_cast<double>(i) + 0.5) / n;
        d.q_values.assign(n, 1.0);
        d.Q = Q;
        d.basis = basis;
        d.validate();
        return d;
    }
};

/// A model space S_m spanned by the basis functions in index_set.
struct Model {
    std::vector<int> index_set;
    double c_m = 0.0;

    std::size_t dim() const noexcept { return index_set.size(); }

    /// Model with c_m measured as the largest |φj(ti)| over the design.
    static Model on(const DesignSpec& design, std::vector<int> indices) {
        if (indices.empty()) throw ValidationError("model.index_set", "nonempty");
        for (int j : indices)
            if (!design.basis.valid_index(j))
                throw ValidationError("model.index_set", "index " + std::to_string(j) + " valid for the basis");
        Model m{std::move(indices), 0.0};
        m.c_m = sup_norm_on_design(design, m.index_set);
        return m;
    }

    static double sup_norm_on_design(const DesignSpec& design, const std::vector<int>& indices) {
        double c = 0.0;
        for (double t : design.points)
            for (int j : indices) c = std::max(c, std::abs(design.basis(j, t)));
        return c;
    }
};

/// G = [φ_{I(j)}(ti)], n × d.
inline Mat gram_matrix(const DesignSpec& design, const Model& model) {
    Mat g(design.size(), model.dim());
    for (std::size_t i = 0; i < design.size(); ++i)
        for (std::size_t j = 0; j < model.dim(); ++j) {
            const double v = design.basis(model.index_set[j], design.points[i]);
            if (!std::isfinite(v)) throw NonFinite();
            g(i, j) = v;
        }
    return g;
}

/// Values of Σ coef_j φ_j at the design points.
inline Vec evaluate_expansion(const DesignSpec& design, const std::vector<int>& indices,
                              const Vec& coefficients) {
    Vec out(design.size(), 0.0);
    for (std::size_t i = 0; i < design.size(); ++i)
        for (std::size_t j = 0; j < indices.size(); ++j)
            out[i] += coefficients[j] * design.basis(indices[j], design.points[i]);
    return out;
}

struct DesignConditions {
    double as_deviation = 0.0;          ///< ‖I − (1/n)GᵀD_qG‖_ρ
    double q_max = 0.0;
    double c_m_observed = 0.0;          ///< max |φj(ti)| over the model
    std::optional<double> alpha_hat;    ///< fitted decay exponent
    std::optional<double> c1_hat;
    std::optional<double> c2_hat;
    std::vector<std::pair<std::size_t, double>> ladder;  ///< (n, deviation)
};

inline double gram_deviation(const DesignSpec& design, const Model& model) {
    const Mat g = gram_matrix(design, model);
    Mat a = weighted_gram(g, design.q_values);
    a *= 1.0 / static_cast<double>(design.size());
    return spectral_norm(Mat::identity(model.dim()) - a);
}

/// Checks the density bound (AQ) and the sup-norm bound (AB), throwing
/// ConditionViolated on failure, and reports the Gram deviation. With a ladder
/// of at least three sub-designs the decay n^{-1-α} is fitted by log-log least
/// squares; the fit is skipped when a deviation sits at rounding level.
inline DesignConditions check_conditions(const DesignSpec& design, const Model& model,
                                         const std::vector<DesignSpec>& ladder = {}) {
    DesignConditions out;
    out.q_max = *std::max_element(design.q_values.begin(), design.q_values.end());
    if (out.q_max > design.Q)
        throw ConditionViolated("AQ", "max q = " + std::to_string(out.q_max) + " exceeds Q = " +
                                          std::to_string(design.Q));
    out.c_m_observed = Model::sup_norm_on_design(design, model.index_set);
    if (out.c_m_observed > model.c_m * (1.0 + 1e-12))
        throw ConditionViolated("AB", "max |phi| = " + std::to_string(out.c_m_observed) +
                                          " exceeds c_m = " + std::to_string(model.c_m));
    out.as_deviation = gram_deviation(design, model);

    for (const DesignSpec& sub : ladder)
        out.ladder.emplace_back(sub.size(), gram_deviation(sub, model));
    const bool fittable = out.ladder.size() >= 3 &&
                          std::all_of(out.ladder.begin(), out.ladder.end(),
                                      [](const auto& p) { return p.second > 1e-13; });
    if (fittable) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double k = static_cast<double>(out.ladder.size());
        for (const auto& [n, dev] : out.ladder) {
            const double x = std::log(static_cast<double>(n)), y = std::log(dev);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        const double alpha = -slope - 1.0;
        out.alpha_hat = alpha;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& [n, dev] : out.ladder) {
            const double c = dev * std::pow(static_cast<double>(n), 1.0 + alpha);
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        out.c1_hat = lo;
        out.c2_hat = hi;
    }
    return out;
}

/// Upper bound on the sup-norm/L2 constant r̄ for a d-dimensional span of the
/// family.
inline double rbar_bound(const BasisFamily& basis, std::size_t d) {
    if (d < 1) throw ValidationError("d", ">= 1");
    switch (basis.kind) {
        case BasisKind::trigonometric: return std::sqrt(2.0 * static_cast<double>(d));
        case BasisKind::polynomial: return static_cast<double>(d);
        case BasisKind::histogram: return 1.0;
        case BasisKind::piecewise_polynomial: return 2.0 * basis.degree + 1.0;
    }
    throw UnsupportedFamily("no r-bar constant for family " + to_string(basis.kind));
}

/// Discrete η(S): (1/√d) · max_i √(Σ_j φj(ti)²).
inline double eta_s(const DesignSpec& design, const Model& model) {
    const Mat g = gram_matrix(design, model);
    double best = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const auto r = g.row(i);
        best = std::max(best, dot(r, r));
    }
    return std::sqrt(best / static_cast<double>(model.dim()));
}

}  // namespace activereg
