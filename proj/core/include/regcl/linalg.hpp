#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace regcl {

/// Dense row-major matrix of doubles. Entries must be finite.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    /// Bitwise equality of shape and contents.
    friend bool operator==(const Matrix& a, const Matrix& b);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Gram matrix XᵀX of a layer's inputs, plus the number of rows summed into it.
struct GramMatrix {
    Matrix values;
    std::size_t sample_count = 0;

    std::size_t dim() const noexcept { return values.rows(); }
    static GramMatrix zeros(std::size_t dim) { return {Matrix::zeros(dim, dim), 0}; }

    friend bool operator==(const GramMatrix&, const GramMatrix&) = default;
};

// Gram computation

GramMatrix gram(const Matrix& x);
GramMatrix gram_accumulate(GramMatrix acc, const Matrix& batch);
/// Scales off-diagonal entries by `scale` in [0, 1]; 1 leaves the matrix untouched.
GramMatrix scale_offdiagonal(GramMatrix g, double scale);

// SPD solve

/// Solves A·W = B by Cholesky. When A is not numerically positive definite,
/// retries on (A + λI) with λ = ridge_scale·trace(A)/m (ridge_scale alone when
/// the trace is zero), multiplying λ by 10 up to six times. Well-conditioned
/// systems are therefore solved without any ridge bias.
Matrix solve_spd(const Matrix& a, const Matrix& b, double ridge_scale);

// Elementwise and product helpers

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_inplace(Matrix& a, const Matrix& b);
/// a += s·b
void axpy_inplace(Matrix& a, double s, const Matrix& b);

double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ‖a − b‖_F / max(‖b‖_F, tiny)
double relative_frobenius(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a) noexcept;

/// Rows `first..first+count` as a new matrix.
Matrix slice_rows(const Matrix& a, std::size_t first, std::size_t count);
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);
Matrix vstack(const Matrix& top, const Matrix& bottom);

/// Singular values in descending order (one-sided Jacobi).
std::vector<double> singular_values(const Matrix& a);

/// Thin SVD a = U·diag(s)·Vᵀ, singular values descending.
struct Svd {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};
Svd svd(const Matrix& a);

}  // namespace regcl
