#pragma once

// Small dense kernel: row-major matrices, SPD factorization, spectral norm by
// power iteration and a cyclic Jacobi eigen-solver used as its oracle.

#include <activereg/error.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace activereg {

using Vec = std::vector<double>;

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            assert(row.size() == cols_);
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Mat diagonal(std::span<const double> d) {
        Mat m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> entries() const noexcept { return data_; }
    std::span<double> entries() noexcept { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Mat transpose() const {
        Mat t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Mat& operator+=(const Mat& o) {
        assert(rows_ == o.rows_ && cols_ == o.cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        assert(rows_ == o.rows_ && cols_ == o.cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Mat& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Mat operator+(Mat a, const Mat& b) { return a += b; }
    friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
    friend Mat operator*(Mat a, double s) { return a *= s; }
    friend Mat operator*(double s, Mat a) { return a *= s; }

    friend Mat operator*(const Mat& a, const Mat& b) {
        assert(a.cols_ == b.rows_);
        Mat c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

inline Vec matvec(const Mat& a, std::span<const double> x) {
    assert(a.cols() == x.size());
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        y[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
    }
    return y;
}

/// aᵀx without forming the transpose.
inline Vec matvec_t(const Mat& a, std::span<const double> x) {
    assert(a.rows() == x.size());
    Vec y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// aᵀ diag(w) a for a tall matrix a (n × d), the weighted Gram form.
inline Mat weighted_gram(const Mat& a, std::span<const double> w) {
    assert(a.rows() == w.size());
    const std::size_t d = a.cols();
    Mat g(d, d);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (w[i] == 0.0) continue;
        const auto r = a.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double wr = w[i] * r[j];
            for (std::size_t k = j; k < d; ++k) g(j, k) += wr * r[k];
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < j; ++k) g(j, k) = g(k, j);
    return g;
}

inline bool is_symmetric(const Mat& a, double rel_tol = 1e-12) {
    if (!a.square()) return false;
    double scale = 0.0;
    for (double v : a.entries()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(a(i, j) - a(j, i)) > rel_tol * std::max(scale, 1e-300)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Eigenvalues (oracle)

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending. Throws TooLarge above max_dim.
inline Vec eig_sym_oracle(const Mat& a, std::size_t max_dim = 64) {
    if (!a.square()) throw Error("eig_sym_oracle requires a square matrix");
    if (!a.all_finite()) throw NonFinite();
    const std::size_t n = a.rows();
    if (n > max_dim)
        throw TooLarge("eig_sym_oracle: dimension " + std::to_string(n) + " exceeds " +
                       std::to_string(max_dim));
    Mat m = a;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double v = m(i, j) * m(i, j);
                total += v;
                if (i != j) off += v;
            }
        if (off <= 1e-30 * total || off == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
    }
    Vec ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = m(i, i);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

// ---------------------------------------------------------------------------
// Spectral norm

namespace detail {

/// Largest eigenvalue of a symmetric PSD matrix b by power iteration from v.
/// Returns a negative value when the iteration cap is hit.
inline double power_top_eigenvalue(const Mat& b, Vec v, double tol, int max_iter) {
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec bv = matvec(b, v);
        lambda = dot(v, bv);
        double res = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double r = bv[i] - lambda * v[i];
            res += r * r;
        }
        const double nbv = norm2(bv);
        if (nbv == 0.0) return 0.0;
        if (std::sqrt(res) <= tol * std::abs(lambda)) return lambda;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = bv[i] / nbv;
    }
    return -1.0;
}

}  // namespace detail

/// Largest singular value of a. Power iteration runs on the smaller of aᵀa
/// and aaᵀ from the normalized all-ones vector; a second deterministic start
/// guards against a start that is orthogonal to the top eigenvector. On
/// non-convergence falls back to Jacobi when the Gram side is at most 64.
inline double spectral_norm(const Mat& a, double tol = 1e-10) {
    if (!a.all_finite()) throw NonFinite();
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    const Mat at = a.transpose();
    const Mat b = a.cols() <= a.rows() ? at * a : a * at;
    const std::size_t d = b.rows();

    constexpr int kMaxIter = 10000;
    Vec ones(d, 1.0);
    Vec alt(d);
    for (std::size_t i = 0; i < d; ++i) alt[i] = std::cos(1.0 + 2.399963 * static_cast<double>(i));

    const double l1 = detail::power_top_eigenvalue(b, ones, tol, kMaxIter);
    const double l2 = detail::power_top_eigenvalue(b, alt, tol, kMaxIter);
    if (l1 < 0.0 || l2 < 0.0) {
        if (d > 64) throw Error("spectral_norm: power iteration did not converge");
        const Vec ev = eig_sym_oracle(b);
        return std::sqrt(std::max(ev.front(), 0.0));
    }
    return std::sqrt(std::max({l1, l2, 0.0}));
}

// ---------------------------------------------------------------------------
// SPD factorization

struct SpdSolveResult {
    Vec solution;
    double min_pivot = 0.0;
};

/// Cholesky factorization with symmetric (diagonal) pivoting: PᵀAP = LLᵀ.
/// Throws NotPositiveDefinite when the largest remaining diagonal is at or
/// below the pivot floor.
class SpdFactor {
public:
    explicit SpdFactor(const Mat& a, double pivot_floor = 1e-12) {
        if (!a.square()) throw Error("SpdFactor requires a square matrix");
        if (!a.all_finite()) throw NonFinite();
        const std::size_t n = a.rows();
        l_ = a;
        perm_.resize(n);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        min_pivot_ = n ? std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t best = k;
            for (std::size_t i = k + 1; i < n; ++i)
                if (l_(i, i) > l_(best, best)) best = i;
            const double pivot = l_(best, best);
            if (!(pivot > pivot_floor)) throw NotPositiveDefinite(pivot);
            if (best != k) swap_symmetric(k, best);
            min_pivot_ = std::min(min_pivot_, pivot);
            const double lkk = std::sqrt(pivot);
            l_(k, k) = lkk;
            for (std::size_t i = k + 1; i < n; ++i) l_(i, k) /= lkk;
            // Full trailing block kept symmetric so later pivots can swap rows
            // and columns freely.
            for (std::size_t j = k + 1; j < n; ++j) {
                const double ljk = l_(j, k);
                for (std::size_t i = k + 1; i < n; ++i) l_(i, j) -= l_(i, k) * ljk;
            }
        }
    }

    std::size_t dim() const noexcept { return perm_.size(); }
    double min_pivot() const noexcept { return min_pivot_; }

    Vec solve(std::span<const double> b) const {
        const std::size_t n = dim();
        assert(b.size() == n);
        Vec z(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = b[perm_[i]];
        for (std::size_t i = 0; i < n; ++i) {
            double s = z[i];
            for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * z[k];
            z[i] = s / l_(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = z[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= l_(k, i) * z[k];
            z[i] = s / l_(i, i);
        }
        Vec x(n);
        for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = z[i];
        return x;
    }

    /// vᵀA⁻¹v computed as ‖L⁻¹Pᵀv‖².
    double inverse_quadratic(std::span<const double> v) const {
        const std::size_t n = dim();
        Vec z(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = v[perm_[i]];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = z[i];
            for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * z[k];
            z[i] = s / l_(i, i);
            acc += z[i] * z[i];
        }
        return acc;
    }

    /// x with xᵀAx = zᵀz, i.e. x = P L⁻ᵀ z. Maps the unit sphere onto the
    /// boundary of {x : xᵀAx ≤ 1}.
    Vec unwhiten(std::span<const double> z) const {
        const std::size_t n = dim();
        Vec w(z.begin(), z.end());
        for (std::size_t i = n; i-- > 0;) {
            double s = w[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= l_(k, i) * w[k];
            w[i] = s / l_(i, i);
        }
        Vec x(n);
        for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = w[i];
        return x;
    }

    Mat inverse() const {
        const std::size_t n = dim();
        Mat inv(n, n);
        Vec e(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            e[j] = 1.0;
            const Vec col = solve(e);
            for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
            e[j] = 0.0;
        }
        return inv;
    }

private:
    void swap_symmetric(std::size_t a, std::size_t b) {
        const std::size_t n = dim();
        std::swap(perm_[a], perm_[b]);
        for (std::size_t k = 0; k < n; ++k) std::swap(l_(a, k), l_(b, k));
        for (std::size_t k = 0; k < n; ++k) std::swap(l_(k, a), l_(k, b));
    }

    Mat l_;
    std::vector<std::size_t> perm_;
    double min_pivot_ = 0.0;
};

inline SpdSolveResult spd_solve(const Mat& a, std::span<const double> b, double pivot_floor = 1e-12) {
    if (!is_symmetric(a)) throw Error("spd_solve requires a symmetric matrix");
    const SpdFactor f(a, pivot_floor);
    return {f.solve(b), f.min_pivot()};
}

}  // namespace activereg
