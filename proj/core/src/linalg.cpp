#include "regcl/linalg.hpp"

#include "regcl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

namespace regcl {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + ")");
    }
}

// In-place lower Cholesky of a symmetric matrix with `shift` added to the diagonal.
// Only the lower triangle of `a` is read. Returns false on a non-positive or
// vanishing pivot.
bool cholesky_shifted(const Matrix& a, double shift, Matrix& l) {
    const std::size_t m = a.rows();
    l = Matrix::zeros(m, m);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < m; ++i) max_diag = std::max(max_diag, std::abs(a(i, i) + shift));
    const double pivot_floor = 1e-14 * max_diag;
    for (std::size_t j = 0; j < m; ++j) {
        double d = a(j, j) + shift;
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > pivot_floor) || !std::isfinite(d)) return false;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < m; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return true;
}

Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
    const std::size_t m = l.rows();
    const std::size_t n = b.cols();
    Matrix x = b;
    // forward: L y = b
    for (std::size_t i = 0; i < m; ++i) {
        auto xi = x.row(i);
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = l(i, k);
            auto xk = x.row(k);
            for (std::size_t c = 0; c < n; ++c) xi[c] -= lik * xk[c];
        }
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c < n; ++c) xi[c] *= inv;
    }
    // backward: Lᵀ x = y
    for (std::size_t ii = m; ii-- > 0;) {
        auto xi = x.row(ii);
        for (std::size_t k = ii + 1; k < m; ++k) {
            const double lki = l(k, ii);
            auto xk = x.row(k);
            for (std::size_t c = 0; c < n; ++c) xi[c] -= lki * xk[c];
        }
        const double inv = 1.0 / l(ii, ii);
        for (std::size_t c = 0; c < n; ++c) xi[c] *= inv;
    }
    return x;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ValidationError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                              std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    if (!all_finite(*this)) throw ValidationError("matrix contains non-finite entries");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ValidationError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

bool operator==(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    // bitwise: distinguishes -0.0 from 0.0
    return a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

GramMatrix gram(const Matrix& x) {
    if (x.cols() == 0) throw ValidationError("empty feature dimension");
    return gram_accumulate(GramMatrix::zeros(x.cols()), x);
}

GramMatrix gram_accumulate(GramMatrix acc, const Matrix& batch) {
    const std::size_t m = acc.dim();
    if (batch.cols() != m) {
        throw ValidationError("gram_accumulate: batch has " + std::to_string(batch.cols()) +
                              " columns, accumulator dim is " + std::to_string(m));
    }
    if (m == 0) throw ValidationError("empty feature dimension");
    // Upper triangle only, mirrored at the end so the result is exactly symmetric.
    // Rows are folded in order, which fixes the summation order per entry.
    Matrix& g = acc.values;
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto x = batch.row(r);
        for (std::size_t i = 0; i < m; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            auto gi = g.row(i);
            for (std::size_t j = i; j < m; ++j) gi[j] += xi * x[j];
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) g(j, i) = g(i, j);
    acc.sample_count += batch.rows();
    return acc;
}

GramMatrix scale_offdiagonal(GramMatrix g, double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("offdiag_scale must lie in [0, 1]");
    if (s == 1.0) return g;
    const std::size_t m = g.dim();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) g.values(i, j) *= s;
    return g;
}

Matrix solve_spd(const Matrix& a, const Matrix& b, double ridge_scale) {
    if (a.rows() != a.cols()) throw ValidationError("solve_spd: matrix is not square");
    if (a.rows() != b.rows()) throw ValidationError("solve_spd: right-hand side row count mismatch");
    if (!(ridge_scale >= 0.0)) throw ValidationError("solve_spd: ridge_scale must be >= 0");
    const std::size_t m = a.rows();
    if (m == 0) throw ValidationError("empty feature dimension");

    const double mean_diag = trace(a) / static_cast<double>(m);
    const double unit = mean_diag > 0.0 ? mean_diag : 1.0;

    Matrix l;
    if (cholesky_shifted(a, 0.0, l)) return cholesky_solve(l, b);
    double lambda = ridge_scale > 0.0 ? ridge_scale * unit : 1e-12 * unit;
    for (int attempt = 0; attempt <= 6; ++attempt, lambda *= 10.0) {
        if (cholesky_shifted(a, lambda, l)) return cholesky_solve(l, b);
    }
    throw NumericalError("gram matrix numerically singular");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ValidationError("matmul_tn: row count mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const auto ak = a.row(k);
        const auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ValidationError("matmul_nt: column count mismatch");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    add_inplace(c, b);
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    axpy_inplace(c, -1.0, b);
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
    require_same_shape(a, b, "axpy");
    auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += s * bd[i];
}

double trace(const Matrix& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) t += a(i, i);
    return t;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::abs(ad[i] - bd[i]));
    return m;
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
    const double denom = std::max(frobenius_norm(b), std::numeric_limits<double>::min());
    return frobenius_norm(sub(a, b)) / denom;
}

bool all_finite(const Matrix& a) noexcept {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

Matrix slice_rows(const Matrix& a, std::size_t first, std::size_t count) {
    if (first + count > a.rows()) throw ValidationError("slice_rows: out of range");
    std::vector<double> data(a.values().begin() + static_cast<std::ptrdiff_t>(first * a.cols()),
                             a.values().begin() + static_cast<std::ptrdiff_t>((first + count) * a.cols()));
    return Matrix(count, a.cols(), std::move(data));
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows()) throw ValidationError("gather_rows: index out of range");
        const auto src = a.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.rows() == 0) return bottom;
    if (bottom.rows() == 0) return top;
    if (top.cols() != bottom.cols()) throw ValidationError("vstack: column count mismatch");
    std::vector<double> data(top.values());
    data.insert(data.end(), bottom.values().begin(), bottom.values().end());
    return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

Svd svd(const Matrix& a) {
    // One-sided Jacobi on the columns of a (or of aᵀ when wide).
    const bool wide = a.cols() > a.rows();
    Matrix u = wide ? transpose(a) : a;
    const std::size_t m = u.rows();
    const std::size_t n = u.cols();
    Matrix v = Matrix::identity(n);

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += u(i, p) * u(i, p);
                    beta += u(i, q) * u(i, q);
                    gamma += u(i, p) * u(i, q);
                }
                if (gamma == 0.0) continue;
                const double scale_pq = std::sqrt(alpha * beta);
                if (scale_pq == 0.0) continue;
                off = std::max(off, std::abs(gamma) / scale_pq);
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double up = u(i, p), uq = u(i, q);
                    u(i, p) = c * up - s * uq;
                    u(i, q) = s * up + c * uq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (off < 1e-15) break;
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += u(i, j) * u(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        out.s[k] = sigma[j];
        const double inv = sigma[j] > 0.0 ? 1.0 / sigma[j] : 0.0;
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = u(i, j) * inv;
        for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    }
    if (wide) std::swap(out.u, out.v);
    return out;
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).s; }

}  // namespace regcl
