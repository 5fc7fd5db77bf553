#include "ntklab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace ntklab {

std::string to_string(BoundMode m) {
    switch (m) {
        case BoundMode::as_printed: return "as_printed";
        case BoundMode::squared: return "squared";
        case BoundMode::not_applicable: return "n/a";
    }
    return "n/a";
}

nlohmann::json to_json(const BoundReport& r) {
    nlohmann::json j;
    j["name"] = r.name;
    j["mode"] = to_string(r.mode);
    j["lambda_observed"] = r.lambda_observed;
    j["lower"] = r.lower;
    j["upper"] = r.upper;
    j["satisfied_lower"] = r.satisfied_lower;
    j["satisfied_upper"] = r.satisfied_upper;
    j["slack_lower"] = r.slack_lower;
    j["slack_upper"] = r.slack_upper;
    j["one_sided"] = r.one_sided;
    if (r.max_deviation) j["max_deviation"] = *r.max_deviation;
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

namespace {

bool within(double value, double bound, double tol) {
    return std::abs(value - bound) <= tol * std::max({1.0, std::abs(value), std::abs(bound)});
}

double psd_floor(double v) { return std::max(v, 0.0); }

Spectrum eigenvalues_only(const Matrix& m) {
    EigOptions opts;
    opts.vectors = false;
    return sym_eig(m, opts);
}

// lambda(Theta_S^A(x, x)) extremes over target points, Theta_S^A = dPhi dPhi^T.
std::pair<double, double> feature_jacobian_extremes(const ReprogrammedModel& m, const Matrix& X_T) {
    if (!m.source->feature_map.differentiable()) {
        throw Error(ErrorCode::FeatureMapNotDifferentiable, "bound needs a feature map with an input Jacobian");
    }
    double sup_max = 0.0;
    double inf_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < X_T.rows(); ++i) {
        const Matrix jac = m.source->feature_map.input_jacobian(m.transform.apply(X_T.row(i)));
        const Spectrum s = eigenvalues_only(multiply_transposed(jac, jac));
        sup_max = std::max(sup_max, s.max());
        inf_min = std::min(inf_min, psd_floor(s.min()));
    }
    return {sup_max, inf_min};
}

void require_target(const ReprogrammedModel& m, const Dataset& target) {
    m.validate();
    if (target.input_dim() != m.target_dim()) throw Error(ErrorCode::DimensionMismatch, "target dimension mismatch");
}

struct KernelExtremes {
    double min = 0.0;
    double max = 0.0;
};

KernelExtremes source_kernel_extremes(const KernelSourceModel& s) {
    const Spectrum sp = eigenvalues_only(s.K_S);
    return {psd_floor(sp.min()), psd_floor(sp.max())};
}

}  // namespace

void evaluate_sandwich(BoundReport& r, double tol) {
    if (r.lambda_observed.empty()) {
        r.satisfied_lower = r.satisfied_upper = true;
        return;
    }
    const auto [lo, hi] = std::minmax_element(r.lambda_observed.begin(), r.lambda_observed.end());
    r.slack_lower = *lo - r.lower;
    r.slack_upper = r.upper - *hi;
    r.satisfied_lower = r.one_sided || r.slack_lower >= 0.0 || within(*lo, r.lower, tol);
    r.satisfied_upper = r.slack_upper >= 0.0 || within(*hi, r.upper, tol);
}

double spectral_risk(const Spectrum& spectrum, const Matrix& Y, double sigma, std::size_t n) {
    if (!spectrum.eigenvectors) throw Error(ErrorCode::InvalidArgument, "spectral risk needs eigenvectors");
    const Matrix& U = *spectrum.eigenvectors;
    if (U.rows() != Y.rows()) throw Error(ErrorCode::DimensionMismatch, "spectrum and labels disagree on N");
    const Matrix proj = transposed_multiply(U, Y);  // U^T Y
    double risk = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double f = sigma / (sigma + spectrum.eigenvalues[i]);
        const double row = norm2(proj.row(i));
        risk += f * f * row * row;
    }
    return risk / static_cast<double>(n);
}

BoundReport thm1_bounds(const Spectrum& spectrum, const Matrix& Y, double sigma, std::size_t n, BoundMode mode,
                        double tol) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
    if (spectrum.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty spectrum");
    if (spectrum.min() < -tol * std::max(1.0, spectrum.max())) {
        throw Error(ErrorCode::NegativeEigenvalueBeyondTol, "kernel spectrum has a negative eigenvalue");
    }
    const double y_norm = Y.frobenius_norm();
    const double y2 = y_norm * y_norm / static_cast<double>(n);
    auto factor = [&](double lambda) {
        const double f = sigma / (sigma + psd_floor(lambda));
        return mode == BoundMode::squared ? f * f : f;
    };
    BoundReport r;
    r.name = "theorem1_empirical_risk";
    r.mode = mode;
    r.lower = factor(spectrum.max()) * y2;
    r.upper = factor(spectrum.min()) * y2;
    r.lambda_observed = {spectral_risk(spectrum, Y, sigma, n)};
    r.note = "observed value is the empirical risk";
    evaluate_sandwich(r, tol);
    return r;
}

BoundReport prop1_check(const Matrix& theta, std::size_t c, double tol) {
    if (c == 0) throw Error(ErrorCode::InvalidArgument, "block size must be positive");
    const Spectrum base = eigenvalues_only(theta);
    const Spectrum lifted = eigenvalues_only(kron(theta, Matrix::identity(c)));
    std::vector<double> repeated;
    for (double l : base.eigenvalues) repeated.insert(repeated.end(), c, l);
    std::sort(repeated.begin(), repeated.end(), std::greater<>());
    double dev = 0.0;
    for (std::size_t i = 0; i < repeated.size(); ++i) dev = std::max(dev, std::abs(repeated[i] - lifted.eigenvalues[i]));

    BoundReport r;
    r.name = "proposition1_kronecker_spectrum";
    r.lambda_observed = lifted.eigenvalues;
    r.lower = base.min();
    r.upper = base.max();
    r.max_deviation = dev;
    evaluate_sandwich(r, tol);
    const bool matched = dev <= tol * std::max(1.0, std::abs(base.max()));
    r.satisfied_lower = r.satisfied_lower && matched;
    r.satisfied_upper = r.satisfied_upper && matched;
    return r;
}

Matrix theta_S_b(const KernelSourceModel& source, const Matrix& b) {
    if (b.cols() != source.output_dim()) throw Error(ErrorCode::DimensionMismatch, "b columns must equal c_S");
    const Matrix z = ridge_solve(source.K_S, source.Y_S, source.ridge);  // (K + s I)^{-1} Y_S
    const Matrix inner = transposed_multiply(z, source.K_S * z);          // c_S x c_S
    Matrix out = b * multiply_transposed(inner, b);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < i; ++j) out(i, j) = out(j, i) = 0.5 * (out(i, j) + out(j, i));
    return out;
}

BoundReport thm2_bounds(const ReprogrammedModel& m, const Dataset& target, double tol) {
    require_target(m, target);
    const Matrix gram_a = transform_gram(m.transform, target.X);
    const Spectrum observed = eigenvalues_only(ntk_A(m, target.X));
    const Spectrum sb = eigenvalues_only(theta_S_b(*m.source, m.mapping.b));
    const Spectrum sa = eigenvalues_only(gram_a);
    const auto [sup_max, inf_min] = feature_jacobian_extremes(m, target.X);

    BoundReport r;
    r.name = "theorem2_ntk_A";
    r.lambda_observed = observed.eigenvalues;
    r.upper = psd_floor(sb.max()) * sup_max * psd_floor(sa.max());
    r.lower = psd_floor(sb.min()) * inf_min * psd_floor(sa.min());
    evaluate_sandwich(r, tol);
    return r;
}

Matrix cross_kernel_product(const ReprogrammedModel& m, const Matrix& X_T) {
    const Matrix fa = m.source->feature_map.feature_rows(m.transform.apply_rows(X_T));
    const Matrix cross = multiply_transposed(fa, m.source->features);  // N_T x N_S
    Matrix out = multiply_transposed(cross, cross);
    return out;
}

BoundReport thm3_bounds(const ReprogrammedModel& m, const Dataset& target, double tol) {
    require_target(m, target);
    const KernelSourceModel& s = *m.source;
    const Spectrum observed = eigenvalues_only(ntk_B(m, target.X).scalar);
    const Spectrum cross = eigenvalues_only(cross_kernel_product(m, target.X));
    const Spectrum yy = eigenvalues_only(multiply_transposed(s.Y_S, s.Y_S));
    const KernelExtremes k = source_kernel_extremes(s);
    const double inv2_max = 1.0 / ((k.min + s.ridge) * (k.min + s.ridge));
    const double inv2_min = 1.0 / ((k.max + s.ridge) * (k.max + s.ridge));

    BoundReport r;
    r.name = "theorem3_ntk_B";
    r.lambda_observed = observed.eigenvalues;
    r.upper = psd_floor(cross.max()) * inv2_max * psd_floor(yy.max());
    const double cross_min = psd_floor(cross.min());
    if (target.size() > s.size()) {
        r.one_sided = true;
        r.note = "N_T > N_S: cross-kernel product is rank deficient, lower bound one-sided";
        r.lower = 0.0;
    } else if (cross_min <= tol * std::max(1.0, cross.max())) {
        r.one_sided = true;
        r.note = "rank-deficient cross kernel, lower bound one-sided";
        r.lower = 0.0;
    } else {
        r.lower = cross_min * inv2_min * psd_floor(yy.min());
    }
    evaluate_sandwich(r, tol);
    return r;
}

double estimate_cA(const ReprogrammedModel& m, const Dataset& target) {
    require_target(m, target);
    const auto [sup_max, inf_min] = feature_jacobian_extremes(m, target.X);
    (void)sup_max;
    const KernelExtremes k = source_kernel_extremes(*m.source);
    return inf_min / (k.max + m.source->ridge);
}

double estimate_cB(const ReprogrammedModel& m, const Dataset& target) {
    require_target(m, target);
    const KernelExtremes k = source_kernel_extremes(*m.source);
    if (k.max == 0.0) return 0.0;
    const Spectrum cross = eigenvalues_only(cross_kernel_product(m, target.X));
    return psd_floor(cross.min()) / (k.max * k.max);
}

double cor1_lower(const ReprogrammedModel& m, const Dataset& target, double c_A) {
    require_target(m, target);
    if (c_A <= 0.0) return 0.0;
    const KernelSourceModel& s = *m.source;
    const Matrix byb = m.mapping.b * multiply_transposed(transposed_multiply(s.Y_S, s.Y_S), m.mapping.b);
    const double lam_b = psd_floor(eigenvalues_only(byb).min());
    if (lam_b == 0.0) return 0.0;
    const KernelExtremes k = source_kernel_extremes(s);
    const double lam_a = psd_floor(eigenvalues_only(transform_gram(m.transform, target.X)).min());
    return lam_b * c_A * (k.min / (k.min + s.ridge)) * lam_a;
}

double cor2_lower(const ReprogrammedModel& m, const Dataset& target, double c_B) {
    require_target(m, target);
    if (c_B <= 0.0) return 0.0;
    const KernelSourceModel& s = *m.source;
    const double lam_y = psd_floor(eigenvalues_only(multiply_transposed(s.Y_S, s.Y_S)).min());
    const KernelExtremes k = source_kernel_extremes(s);
    const double ratio = k.min / (k.min + s.ridge);
    return c_B * ratio * ratio * lam_y;
}

BoundReport cor1_report(const ReprogrammedModel& m, const Dataset& target, double tol) {
    const double c_A = estimate_cA(m, target);
    BoundReport r;
    r.name = "corollary1_ntk_A_lower";
    r.lambda_observed = eigenvalues_only(ntk_A(m, target.X)).eigenvalues;
    r.lower = cor1_lower(m, target, c_A);
    r.upper = r.lambda_observed.empty() ? 0.0 : r.lambda_observed.front();
    r.note = "c_A = " + std::to_string(c_A) + "; lower-bound check only";
    evaluate_sandwich(r, tol);
    return r;
}

BoundReport cor2_report(const ReprogrammedModel& m, const Dataset& target, double tol) {
    const double c_B = estimate_cB(m, target);
    BoundReport r;
    r.name = "corollary2_ntk_B_lower";
    r.lambda_observed = eigenvalues_only(ntk_B(m, target.X).scalar).eigenvalues;
    r.lower = cor2_lower(m, target, c_B);
    r.upper = r.lambda_observed.empty() ? 0.0 : r.lambda_observed.front();
    r.note = "c_B = " + std::to_string(c_B) + "; lower-bound check only";
    evaluate_sandwich(r, tol);
    return r;
}

BoundReport combined_bounds(const ReprogrammedModel& m, const Dataset& target, double tol) {
    require_target(m, target);
    BoundReport r;
    r.name = "combined_ntk_T";
    r.lambda_observed = eigenvalues_only(ntk_T(m, target.X)).eigenvalues;
    if (m.transform_trainable) {
        const Spectrum a = eigenvalues_only(ntk_A(m, target.X));
        r.lower += a.min();
        r.upper += a.max();
    }
    if (m.mapping.trainable) {
        const Spectrum b = eigenvalues_only(ntk_B(m, target.X).block);
        r.lower += b.min();
        r.upper += b.max();
    }
    evaluate_sandwich(r, tol);
    return r;
}

void GapBoundInputs::validate() const {
    for (double v : {rho, B, T, L_D, Gamma_D, ntk_abs_sum}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "gap-bound inputs must be finite and >= 0");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
    if (N_T == 0) throw Error(ErrorCode::InvalidArgument, "N_T must be positive");
}

double gap_bound(const GapBoundInputs& in) {
    in.validate();
    const double n = static_cast<double>(in.N_T);
    const double kernel_term = 2.0 * in.rho * in.B * std::sqrt(in.T) / n * in.ntk_abs_sum;
    const double concentration = 3.0 * in.L_D * in.Gamma_D * std::sqrt(std::log(2.0 / in.delta) / (2.0 * n));
    return kernel_term + concentration;
}

GapBoundInputs estimate_gap_constants(const Dataset& target, const ReprogrammedModel& m, double T, double B,
                                      double delta, double fd_step) {
    require_target(m, target);
    GapBoundInputs in;
    in.T = T;
    in.B = B;
    in.delta = delta;
    in.N_T = target.size();

    const std::size_t n = target.size();
    const std::size_t dx = target.input_dim();
    const std::size_t dy = target.label_dim();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dx; ++k) s += std::pow(target.X(i, k) - target.X(j, k), 2);
            for (std::size_t k = 0; k < dy; ++k) s += std::pow(target.Y(i, k) - target.Y(j, k), 2);
            in.Gamma_D = std::max(in.Gamma_D, std::sqrt(s));
        }

    auto sample_loss = [&](std::span<const double> x, std::span<const double> y) {
        const Vector f = target_forward(m, x);
        double s = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) s += (f[k] - y[k]) * (f[k] - y[k]);
        return s;
    };

    for (std::size_t i = 0; i < n; ++i) {
        Vector x(target.X.row(i).begin(), target.X.row(i).end());
        Vector y(target.Y.row(i).begin(), target.Y.row(i).end());
        const Vector f = target_forward(m, x);
        double res = 0.0;
        for (std::size_t k = 0; k < dy; ++k) res += (f[k] - y[k]) * (f[k] - y[k]);
        in.rho = std::max(in.rho, 2.0 * std::sqrt(res));

        double g2 = 0.0;
        for (std::size_t k = 0; k < dx; ++k) {
            const double orig = x[k];
            x[k] = orig + fd_step;
            const double fp = sample_loss(x, y);
            x[k] = orig - fd_step;
            const double fm = sample_loss(x, y);
            x[k] = orig;
            g2 += std::pow((fp - fm) / (2.0 * fd_step), 2);
        }
        for (std::size_t k = 0; k < dy; ++k) {
            const double orig = y[k];
            y[k] = orig + fd_step;
            const double fp = sample_loss(x, y);
            y[k] = orig - fd_step;
            const double fm = sample_loss(x, y);
            y[k] = orig;
            g2 += std::pow((fp - fm) / (2.0 * fd_step), 2);
        }
        in.L_D = std::max(in.L_D, std::sqrt(g2));
    }

    in.ntk_abs_sum = abs_entry_sum(block_trace_reduce(ntk_T(m, target.X), m.label_dim()));
    return in;
}

}  // namespace ntklab
