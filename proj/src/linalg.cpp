#include "ntklab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace ntklab {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonFiniteEntry: return "NonFiniteEntry";
        case ErrorCode::NonSquare: return "NonSquare";
        case ErrorCode::AsymmetricBeyondTol: return "AsymmetricBeyondTol";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::SizeOverflow: return "SizeOverflow";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::SolveFailure: return "SolveFailure";
        case ErrorCode::FeatureMapNotDifferentiable: return "FeatureMapNotDifferentiable";
        case ErrorCode::NegativeEigenvalueBeyondTol: return "NegativeEigenvalueBeyondTol";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

namespace {

void require_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteEntry, "matrix entry is not finite");
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw Error(ErrorCode::NonFiniteEntry, "fill value is not finite");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows * cols) {
        throw Error(ErrorCode::DimensionMismatch, "entry count does not equal rows*cols");
    }
    require_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    require_finite(m.data());
    return m;
}

Matrix Matrix::column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vector Matrix::col(std::size_t j) const {
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::frobenius_norm() const { return norm2(data_); }

double Matrix::trace() const {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
    return s;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "matrix product inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Vector operator*(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw Error(ErrorCode::DimensionMismatch, "matrix-vector dimensions differ");
    Vector out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

Matrix multiply_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw Error(ErrorCode::DimensionMismatch, "a*b^T column counts differ");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

Matrix transposed_multiply(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw Error(ErrorCode::DimensionMismatch, "a^T*b row counts differ");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            if (arow[i] == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += arow[i] * brow[j];
        }
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "dot: length mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) {
    // Scaled accumulation; kernel entries can reach 1e12 at deep widths.
    double scale = 0.0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : a) {
        const double r = x / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

Matrix symmetrized(const Matrix& m, double symmetry_tol) {
    if (!m.is_square()) {
        throw Error(ErrorCode::NonSquare,
                    "expected a square matrix, got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    const double norm = m.frobenius_norm();
    const Matrix mt = m.transpose();
    const double asym = (m - mt).frobenius_norm();
    if (asym > symmetry_tol * norm) {
        throw Error(ErrorCode::AsymmetricBeyondTol,
                    "||M - M^T||_F = " + std::to_string(asym) + " exceeds tolerance");
    }
    Matrix s = m + mt;
    s *= 0.5;
    return s;
}

}  // namespace

Spectrum sym_eig(const Matrix& m, const EigOptions& opts) {
    Matrix a = symmetrized(m, opts.symmetry_tol);
    const std::size_t n = a.rows();
    const double norm = a.frobenius_norm();
    Matrix v = opts.vectors ? Matrix::identity(n) : Matrix();

    const double threshold = opts.offdiag_tol * norm;
    int sweep = 0;
    for (;; ++sweep) {
        if (off_diagonal_norm(a) <= threshold) break;
        if (sweep >= opts.max_sweeps) {
            throw Error(ErrorCode::NoConvergence,
                        "Jacobi did not converge within " + std::to_string(opts.max_sweeps) + " sweeps");
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
                const double c = 1.0 / std::hypot(t, 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                if (opts.vectors) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const double vkp = v(k, p);
                        const double vkq = v(k, q);
                        v(k, p) = c * vkp - s * vkq;
                        v(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    Spectrum out;
    out.eigenvalues.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.eigenvalues[k] = a(order[k], order[k]);

    if (opts.vectors) {
        Matrix sorted(n, n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) sorted(i, k) = v(i, order[k]);
        const Matrix sym = symmetrized(m, opts.symmetry_tol);
        double worst = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const Vector vk = sorted.col(k);
            Vector r = sym * vk;
            for (std::size_t i = 0; i < n; ++i) r[i] -= out.eigenvalues[k] * vk[i];
            worst = std::max(worst, norm2(r));
        }
        out.residual = worst;
        out.eigenvectors = std::move(sorted);
    } else {
        // Without vectors the remaining off-diagonal mass bounds the eigenvalue error.
        out.residual = off_diagonal_norm(a);
    }
    return out;
}

Spectrum sym_eig(const Matrix& m, double tol) {
    EigOptions opts;
    opts.symmetry_tol = tol;
    return sym_eig(m, opts);
}

Matrix kron(const Matrix& a, const Matrix& b, std::size_t element_cap) {
    const std::size_t rows = a.rows() * b.rows();
    const std::size_t cols = a.cols() * b.cols();
    if (rows != 0 && cols > element_cap / rows) {
        throw Error(ErrorCode::SizeOverflow, "Kronecker product of " + std::to_string(rows) + "x" +
                                                 std::to_string(cols) + " exceeds the element cap");
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::size_t k = 0; k < b.rows(); ++k)
                for (std::size_t l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
        }
    return out;
}

Matrix ridge_solve(const Matrix& k, const Matrix& rhs, double sigma) {
    if (!k.is_square()) throw Error(ErrorCode::NonSquare, "ridge_solve: kernel matrix is not square");
    if (rhs.rows() != k.rows()) throw Error(ErrorCode::DimensionMismatch, "ridge_solve: rhs rows != kernel rows");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw Error(ErrorCode::InvalidArgument, "ridge_solve: sigma must be positive");
    }
    using ld = long double;
    const std::size_t n = k.rows();
    const std::size_t m = rhs.cols();

    auto system = [&](std::size_t i, std::size_t j) -> ld {
        return static_cast<ld>(0.5) * (static_cast<ld>(k(i, j)) + static_cast<ld>(k(j, i))) +
               (i == j ? static_cast<ld>(sigma) : 0.0L);
    };

    // Lower Cholesky factor, row-major.
    std::vector<ld> chol(n * n, 0.0L);
    for (std::size_t j = 0; j < n; ++j) {
        ld d = system(j, j);
        for (std::size_t p = 0; p < j; ++p) d -= chol[j * n + p] * chol[j * n + p];
        if (!(d > 0.0L)) {
            throw Error(ErrorCode::SolveFailure,
                        "ridge system is not numerically positive definite; sigma too small for conditioning");
        }
        const ld ljj = std::sqrt(d);
        chol[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            ld s = system(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= chol[i * n + p] * chol[j * n + p];
            chol[i * n + j] = s / ljj;
        }
    }

    auto solve_in_place = [&](std::vector<ld>& col) {
        for (std::size_t i = 0; i < n; ++i) {
            ld s = col[i];
            for (std::size_t p = 0; p < i; ++p) s -= chol[i * n + p] * col[p];
            col[i] = s / chol[i * n + i];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            ld s = col[ii];
            for (std::size_t p = ii + 1; p < n; ++p) s -= chol[p * n + ii] * col[p];
            col[ii] = s / chol[ii * n + ii];
        }
    };

    Matrix out(n, m);
    std::vector<ld> x(n), r(n);
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t i = 0; i < n; ++i) x[i] = rhs(i, c);
        solve_in_place(x);
        for (std::size_t i = 0; i < n; ++i) {
            ld s = rhs(i, c);
            for (std::size_t j = 0; j < n; ++j) s -= system(i, j) * x[j];
            r[i] = s;
        }
        solve_in_place(r);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = static_cast<double>(x[i] + r[i]);
            if (!std::isfinite(v)) throw Error(ErrorCode::SolveFailure, "ridge solution is not finite");
            out(i, c) = v;
        }
    }
    return out;
}

PsdResult psd_check(const Matrix& m, double tol) {
    EigOptions opts;
    opts.symmetry_tol = std::max(tol, 1e-12);
    opts.vectors = false;
    const Spectrum s = sym_eig(m, opts);
    if (s.size() == 0) return {true, 0.0};
    const double min_eig = s.min();
    return {min_eig >= -tol * std::max(1.0, s.max()), min_eig};
}

double abs_entry_sum(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data()) s += std::abs(x);
    return s;
}

void write_csv(std::ostream& out, const Matrix& m) {
    char buf[40];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

Matrix read_csv(std::istream& in) {
    std::vector<double> entries;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t count = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                entries.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw Error(ErrorCode::IoError, "unparseable CSV cell '" + cell + "'");
            }
            ++count;
        }
        if (rows == 0) cols = count;
        if (count != cols) throw Error(ErrorCode::IoError, "ragged CSV row " + std::to_string(rows + 1));
        ++rows;
    }
    return Matrix(rows, cols, std::move(entries));
}

}  // namespace ntklab
