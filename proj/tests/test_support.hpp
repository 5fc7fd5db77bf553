#pragma once

// Shared fixtures and brute-force oracles for the unit tests. Nothing here calls
// into the library's numerical routines beyond constructing values.

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ntklab/experiments.hpp"

namespace testing_support {

using ntklab::Matrix;
using ntklab::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = n(rng);
    return m;
}

inline Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    return random_matrix(rng, r, c, scale);
}

// Naive triple loop, independent of Matrix::operator*.
inline Matrix naive_mul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double s = 0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
            out(i, j) = static_cast<double>(s);
        }
    return out;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// Symmetric PSD: G G^T with G n x rank.
inline Matrix random_psd(std::uint64_t seed, std::size_t n, std::size_t rank = 0) {
    const Matrix g = random_matrix(seed, n, rank == 0 ? n : rank);
    Matrix k = naive_mul(g, naive_transpose(g));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i);
    return k;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline double frob(const Matrix& a) {
    long double s = 0;
    for (double v : a.data()) s += static_cast<long double>(v) * v;
    return static_cast<double>(std::sqrt(s));
}

inline double rel_frob_diff(const Matrix& a, const Matrix& b) {
    Matrix d(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) d.data()[i] = a.data()[i] - b.data()[i];
    return frob(d) / std::max(1e-300, std::max(frob(a), frob(b)));
}

// Gauss-Jordan inverse with partial pivoting in long double.
inline Matrix explicit_inverse(const Matrix& m) {
    const std::size_t n = m.rows();
    std::vector<long double> a(n * 2 * n, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a[i * 2 * n + j] = m(i, j);
        a[i * 2 * n + n + i] = 1.0L;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r * 2 * n + c]) > std::abs(a[p * 2 * n + c])) p = r;
        for (std::size_t j = 0; j < 2 * n; ++j) std::swap(a[c * 2 * n + j], a[p * 2 * n + j]);
        const long double piv = a[c * 2 * n + c];
        for (std::size_t j = 0; j < 2 * n; ++j) a[c * 2 * n + j] /= piv;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const long double f = a[r * 2 * n + c];
            for (std::size_t j = 0; j < 2 * n; ++j) a[r * 2 * n + j] -= f * a[c * 2 * n + j];
        }
    }
    Matrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) inv(i, j) = static_cast<double>(a[i * 2 * n + n + j]);
    return inv;
}

// det(M - t I) by LU with partial pivoting.
inline long double char_poly(const Matrix& m, long double t) {
    const std::size_t n = m.rows();
    std::vector<long double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] = m(i, j) - (i == j ? t : 0.0L);
    long double det = 1.0L;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
        if (a[p * n + c] == 0.0L) return 0.0L;
        if (p != c) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[p * n + j]);
            det = -det;
        }
        det *= a[c * n + c];
        for (std::size_t r = c + 1; r < n; ++r) {
            const long double f = a[r * n + c] / a[c * n + c];
            for (std::size_t j = c; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
        }
    }
    return det;
}

// Roots of the characteristic polynomial by sign-change scan plus bisection,
// descending. Only suitable for small matrices with simple eigenvalues.
inline std::vector<double> charpoly_eigenvalues(const Matrix& m, std::size_t grid = 40000) {
    double bound = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += std::abs(m(i, j));
        bound = std::max(bound, s);
    }
    bound += 1.0;
    std::vector<double> roots;
    long double prev_t = -bound;
    long double prev_v = char_poly(m, prev_t);
    for (std::size_t g = 1; g <= grid; ++g) {
        const long double t = -bound + 2.0L * bound * g / grid;
        const long double v = char_poly(m, t);
        if ((prev_v < 0) != (v < 0)) {
            long double lo = prev_t, hi = t, vlo = prev_v;
            for (int it = 0; it < 200; ++it) {
                const long double mid = 0.5L * (lo + hi);
                const long double vm = char_poly(m, mid);
                if ((vm < 0) == (vlo < 0)) {
                    lo = mid;
                    vlo = vm;
                } else {
                    hi = mid;
                }
            }
            roots.push_back(static_cast<double>(0.5L * (lo + hi)));
        }
        prev_t = t;
        prev_v = v;
    }
    std::sort(roots.rbegin(), roots.rend());
    return roots;
}

// ---- complex-step oracle for the composed reprogrammed model ---------------

using cd = std::complex<double>;

// Forward pass of a dense network on complex inputs, reading the same flat
// parameter layout the library documents (weights row-major then bias).
inline std::vector<cd> complex_hidden(const ntklab::NetworkSpec& spec, const std::vector<double>& flat,
                                      std::vector<cd> h) {
    std::size_t off = 0;
    const std::size_t hidden = spec.layer_widths.size() - 2;
    for (std::size_t l = 0; l < hidden; ++l) {
        const std::size_t fi = spec.layer_widths[l], fo = spec.layer_widths[l + 1];
        std::vector<cd> z(fo);
        for (std::size_t o = 0; o < fo; ++o) {
            cd s = flat[off + fi * fo + o];
            for (std::size_t i = 0; i < fi; ++i) s += flat[off + o * fi + i] * h[i];
            switch (spec.activations[l]) {
                case ntklab::Activation::relu: z[o] = s.real() > 0 ? s : cd(0.0); break;
                case ntklab::Activation::tanh: z[o] = std::tanh(s); break;
                case ntklab::Activation::identity: z[o] = s; break;
            }
        }
        off += fi * fo + fo;
        h = std::move(z);
    }
    return h;
}

inline std::vector<cd> complex_phi(const ntklab::FeatureMap& phi, const std::vector<cd>& z) {
    if (phi.kind() == ntklab::FeatureKind::linear) return z;
    return complex_hidden(phi.network_spec(), phi.network_params().flat, z);
}

// f_T(x) with parameters theta = (theta_A, vec(b)) as complex numbers.
inline std::vector<cd> complex_target(const ntklab::ReprogrammedModel& m, const std::vector<cd>& theta_a,
                                      const std::vector<cd>& b_flat, std::span<const double> x) {
    const auto& src = *m.source;
    const std::size_t d_S = src.input_dim();
    std::vector<cd> a(d_S);
    if (m.transform.is_fc()) {
        const std::size_t d_T = m.transform.target_dim();
        const auto& fc = m.transform.as_fc();
        for (std::size_t s = 0; s < d_S; ++s) {
            cd v = fc.bias ? cd((*fc.bias)[s]) : cd(0.0);
            for (std::size_t t = 0; t < d_T; ++t) v += theta_a[s * d_T + t] * x[t];
            a[s] = v;
        }
    } else {
        const auto& vp = m.transform.as_vp();
        for (std::size_t s = 0; s < d_S; ++s) a[s] = vp.mask[s] * theta_a[s];
        for (std::size_t t = 0; t < vp.embed_index.size(); ++t) a[vp.embed_index[t]] += x[t];
    }
    const std::vector<cd> pz = complex_phi(src.feature_map, a);
    // f_S(z) = sum_i <Phi(z), Phi(x_i)> alpha_i, with Phi(x_i) recomputed here.
    const std::size_t c_S = src.output_dim();
    std::vector<cd> fs(c_S, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
        std::vector<cd> xi(src.X_S.row(i).begin(), src.X_S.row(i).end());
        const std::vector<cd> pxi = complex_phi(src.feature_map, xi);
        cd k = 0.0;
        for (std::size_t p = 0; p < pz.size(); ++p) k += pz[p] * pxi[p];
        for (std::size_t c = 0; c < c_S; ++c) fs[c] += k * src.alpha(i, c);
    }
    const std::size_t c_T = m.mapping.b.rows();
    std::vector<cd> out(c_T, 0.0);
    for (std::size_t r = 0; r < c_T; ++r)
        for (std::size_t c = 0; c < c_S; ++c) out[r] += b_flat[r * c_S + c] * fs[c];
    return out;
}

struct SplitJacobian {
    Matrix A;  // c_T x P_A
    Matrix B;  // c_T x c_T c_S
};

// Complex-step derivative of every output w.r.t. every parameter (step 1e-30).
inline SplitJacobian complex_step_jacobian(const ntklab::ReprogrammedModel& m, std::span<const double> x) {
    const Vector ta = m.transform.params();
    std::vector<cd> theta_a(ta.begin(), ta.end());
    std::vector<cd> b_flat(m.mapping.b.data().begin(), m.mapping.b.data().end());
    const std::size_t c_T = m.mapping.b.rows();
    const double h = 1e-30;
    SplitJacobian j{Matrix(c_T, theta_a.size()), Matrix(c_T, b_flat.size())};
    for (std::size_t p = 0; p < theta_a.size(); ++p) {
        theta_a[p] += cd(0.0, h);
        const auto f = complex_target(m, theta_a, b_flat, x);
        for (std::size_t r = 0; r < c_T; ++r) j.A(r, p) = f[r].imag() / h;
        theta_a[p] -= cd(0.0, h);
    }
    for (std::size_t p = 0; p < b_flat.size(); ++p) {
        b_flat[p] += cd(0.0, h);
        const auto f = complex_target(m, theta_a, b_flat, x);
        for (std::size_t r = 0; r < c_T; ++r) j.B(r, p) = f[r].imag() / h;
        b_flat[p] -= cd(0.0, h);
    }
    return j;
}

// Block Gram of per-point Jacobians: block (i, j) = J_i J_j^T.
inline Matrix block_gram(const std::vector<Matrix>& js) {
    const std::size_t c = js.front().rows();
    Matrix k(js.size() * c, js.size() * c);
    for (std::size_t i = 0; i < js.size(); ++i)
        for (std::size_t j = 0; j < js.size(); ++j) {
            const Matrix g = naive_mul(js[i], naive_transpose(js[j]));
            for (std::size_t r = 0; r < c; ++r)
                for (std::size_t s = 0; s < c; ++s) k(i * c + r, j * c + s) = g(r, s);
        }
    return k;
}

}  // namespace testing_support
