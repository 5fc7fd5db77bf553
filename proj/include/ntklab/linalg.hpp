#pragma once

// Dense row-major matrices and the handful of spectral primitives the kernel and
// bound code is built on. Everything here is a pure function of its inputs.

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "ntklab/errors.hpp"

namespace ntklab {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Takes ownership of row-major entries; throws NonFiniteEntry on NaN/Inf and
    // DimensionMismatch when entries.size() != rows * cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);
    static Matrix column(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    Vector col(std::size_t j) const;

    Matrix transpose() const;
    double frobenius_norm() const;
    double trace() const;
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

// a * b^T without materializing the transpose (Gram-style products).
Matrix multiply_transposed(const Matrix& a, const Matrix& b);
// a^T * b
Matrix transposed_multiply(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

struct Spectrum {
    Vector eigenvalues;                 // descending
    std::optional<Matrix> eigenvectors; // column k pairs with eigenvalues[k]
    double residual = 0.0;              // max_k ||M v_k - lambda_k v_k||_2

    double max() const { return eigenvalues.front(); }
    double min() const { return eigenvalues.back(); }
    std::size_t size() const noexcept { return eigenvalues.size(); }
};

struct EigOptions {
    double symmetry_tol = 1e-10;   // relative Frobenius asymmetry accepted (and symmetrized away)
    double offdiag_tol = 1e-12;    // sweep stops once off(A) <= offdiag_tol * ||M||_F
    int max_sweeps = 100;
    bool vectors = true;
};

// Cyclic Jacobi eigensolver for real symmetric matrices.
Spectrum sym_eig(const Matrix& m, const EigOptions& opts = {});
Spectrum sym_eig(const Matrix& m, double tol);

inline constexpr std::size_t kDefaultKronElementCap = 4'000'000;

Matrix kron(const Matrix& a, const Matrix& b, std::size_t element_cap = kDefaultKronElementCap);

// (k + sigma I)^{-1} rhs for symmetric PSD k. Factorizes in extended precision
// and applies one round of iterative refinement.
Matrix ridge_solve(const Matrix& k, const Matrix& rhs, double sigma);

struct PsdResult {
    bool is_psd = false;
    double min_eig = 0.0;
};

PsdResult psd_check(const Matrix& m, double tol);

double abs_entry_sum(const Matrix& m);

// CSV with one matrix row per line, no header, 17 significant digits.
void write_csv(std::ostream& out, const Matrix& m);
Matrix read_csv(std::istream& in);

}  // namespace ntklab
