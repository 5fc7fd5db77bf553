#include "ntklab/kernels.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace ntklab {

Dataset::Dataset(Matrix x, Matrix y, std::string n) : X(std::move(x)), Y(std::move(y)), name(std::move(n)) {
    if (X.rows() != Y.rows()) throw Error(ErrorCode::DimensionMismatch, "dataset X and Y row counts differ");
    if (X.rows() == 0) throw Error(ErrorCode::InvalidArgument, "dataset must contain at least one sample");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Matrix x(rows.size(), X.cols());
    Matrix y(rows.size(), Y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(X.row(rows[i]).begin(), X.row(rows[i]).end(), x.row(i).begin());
        std::copy(Y.row(rows[i]).begin(), Y.row(rows[i]).end(), y.row(i).begin());
    }
    return Dataset(std::move(x), std::move(y), name);
}

void write_dataset_csv(std::ostream& out, const Dataset& d) {
    for (std::size_t j = 0; j < d.label_dim(); ++j) out << (j ? "," : "") << 'y' << j;
    for (std::size_t j = 0; j < d.input_dim(); ++j) out << ",x" << j;
    out << '\n';
    Matrix joined(d.size(), d.label_dim() + d.input_dim());
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.label_dim(); ++j) joined(i, j) = d.Y(i, j);
        for (std::size_t j = 0; j < d.input_dim(); ++j) joined(i, d.label_dim() + j) = d.X(i, j);
    }
    write_csv(out, joined);
}

Dataset read_dataset_csv(std::istream& in, std::string name) {
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorCode::IoError, "dataset CSV is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::size_t c = 0;
    std::size_t d = 0;
    std::stringstream ss(header);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const std::size_t idx_y = c;
        const std::size_t idx_x = d;
        if (d == 0 && cell == "y" + std::to_string(idx_y)) {
            ++c;
        } else if (cell == "x" + std::to_string(idx_x)) {
            ++d;
        } else {
            throw Error(ErrorCode::IoError, "unexpected dataset header column '" + cell + "'");
        }
    }
    const Matrix joined = read_csv(in);
    if (joined.cols() != c + d) throw Error(ErrorCode::IoError, "dataset rows do not match header width");
    Matrix x(joined.rows(), d);
    Matrix y(joined.rows(), c);
    for (std::size_t i = 0; i < joined.rows(); ++i) {
        for (std::size_t j = 0; j < c; ++j) y(i, j) = joined(i, j);
        for (std::size_t j = 0; j < d; ++j) x(i, j) = joined(i, c + j);
    }
    return Dataset(std::move(x), std::move(y), std::move(name));
}

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::linear: return "linear";
        case FeatureKind::net_features: return "net_features";
        case FeatureKind::ntk_features: return "ntk_features";
    }
    return "linear";
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "linear") return FeatureKind::linear;
    if (name == "net_features") return FeatureKind::net_features;
    if (name == "ntk_features") return FeatureKind::ntk_features;
    throw Error(ErrorCode::InvalidArgument, "unknown feature map kind '" + name + "'");
}

FeatureMap FeatureMap::linear(std::size_t dim) {
    FeatureMap f;
    f.kind_ = FeatureKind::linear;
    f.input_dim_ = dim;
    f.output_dim_ = dim;
    return f;
}

FeatureMap FeatureMap::net_features(NetworkSpec spec, NetworkParams params) {
    spec.validate();
    FeatureMap f;
    f.kind_ = FeatureKind::net_features;
    f.input_dim_ = spec.input_dim();
    f.output_dim_ = spec.layer_widths[spec.layer_widths.size() - 2];
    f.spec_ = std::move(spec);
    f.params_ = std::move(params);
    return f;
}

FeatureMap FeatureMap::ntk_features(NetworkSpec spec, NetworkParams params) {
    spec.validate();
    FeatureMap f;
    f.kind_ = FeatureKind::ntk_features;
    f.input_dim_ = spec.input_dim();
    f.output_dim_ = spec.output_dim() * spec.param_count();
    f.spec_ = std::move(spec);
    f.params_ = std::move(params);
    return f;
}

FeatureMap FeatureMap::scaled(double factor) const {
    FeatureMap f = *this;
    f.scale_ *= factor;
    return f;
}

Vector FeatureMap::features(std::span<const double> x) const {
    if (x.size() != input_dim_) throw Error(ErrorCode::DimensionMismatch, "feature map input dimension mismatch");
    Vector out;
    switch (kind_) {
        case FeatureKind::linear:
            out.assign(x.begin(), x.end());
            break;
        case FeatureKind::net_features:
            out = hidden_features(spec_, params_, x);
            break;
        case FeatureKind::ntk_features: {
            const Matrix j = jacobian_params(spec_, params_, x);
            const double norm = 1.0 / std::sqrt(static_cast<double>(spec_.output_dim()));
            out.assign(j.data().begin(), j.data().end());
            for (double& v : out) v *= norm;
            break;
        }
    }
    if (scale_ != 1.0)
        for (double& v : out) v *= scale_;
    return out;
}

Matrix FeatureMap::feature_rows(const Matrix& points) const {
    if (points.cols() != input_dim_) throw Error(ErrorCode::DimensionMismatch, "feature map input dimension mismatch");
    Matrix out(points.rows(), output_dim_);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const Vector f = features(points.row(i));
        std::copy(f.begin(), f.end(), out.row(i).begin());
    }
    return out;
}

Matrix FeatureMap::input_jacobian(std::span<const double> x) const {
    if (x.size() != input_dim_) throw Error(ErrorCode::DimensionMismatch, "feature map input dimension mismatch");
    Matrix j;
    switch (kind_) {
        case FeatureKind::linear:
            j = Matrix::identity(input_dim_);
            break;
        case FeatureKind::net_features:
            j = hidden_features_jacobian(spec_, params_, x);
            break;
        case FeatureKind::ntk_features:
            throw Error(ErrorCode::FeatureMapNotDifferentiable,
                        "ntk_features exposes no input Jacobian (would need second derivatives)");
    }
    if (scale_ != 1.0) j *= scale_;
    return j;
}

Vector FeatureMap::input_vjp(std::span<const double> x, std::span<const double> seed) const {
    if (x.size() != input_dim_) throw Error(ErrorCode::DimensionMismatch, "feature map input dimension mismatch");
    if (seed.size() != output_dim_) throw Error(ErrorCode::DimensionMismatch, "vjp seed length mismatch");
    Vector out;
    switch (kind_) {
        case FeatureKind::linear:
            out.assign(seed.begin(), seed.end());
            break;
        case FeatureKind::net_features:
            out = hidden_features_vjp(spec_, params_, x, seed);
            break;
        case FeatureKind::ntk_features:
            throw Error(ErrorCode::FeatureMapNotDifferentiable,
                        "ntk_features exposes no input Jacobian (would need second derivatives)");
    }
    if (scale_ != 1.0)
        for (double& v : out) v *= scale_;
    return out;
}

Matrix kernel_matrix(const FeatureMap& phi, const Matrix& a, const Matrix& b) {
    if (a.cols() != phi.input_dim() || b.cols() != phi.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "kernel_matrix: point dimension does not match feature map");
    }
    const Matrix fa = phi.feature_rows(a);
    if (&a == &b) {
        Matrix k = multiply_transposed(fa, fa);
        for (std::size_t i = 0; i < k.rows(); ++i)
            for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i);
        return k;
    }
    return multiply_transposed(fa, phi.feature_rows(b));
}

Matrix empirical_ntk(const NetworkSpec& spec, const NetworkParams& params, const Matrix& a, const Matrix& b) {
    if (a.cols() != spec.input_dim() || b.cols() != spec.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "empirical_ntk: point dimension does not match network input");
    }
    const std::size_t c = spec.output_dim();
    std::vector<Matrix> ja;
    std::vector<Matrix> jb;
    for (std::size_t i = 0; i < a.rows(); ++i) ja.push_back(jacobian_params(spec, params, a.row(i)));
    for (std::size_t i = 0; i < b.rows(); ++i) jb.push_back(jacobian_params(spec, params, b.row(i)));
    Matrix out(a.rows() * c, b.rows() * c);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const Matrix blk = multiply_transposed(ja[i], jb[j]);
            for (std::size_t r = 0; r < c; ++r)
                for (std::size_t s = 0; s < c; ++s) out(i * c + r, j * c + s) = blk(r, s);
        }
    return out;
}

Matrix block_trace_reduce(const Matrix& block_kernel, std::size_t c) {
    if (c == 0 || block_kernel.rows() % c != 0 || block_kernel.cols() % c != 0) {
        throw Error(ErrorCode::DimensionMismatch, "block kernel dimensions are not multiples of the block size");
    }
    Matrix out(block_kernel.rows() / c, block_kernel.cols() / c);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < c; ++r) s += block_kernel(i * c + r, j * c + r);
            out(i, j) = s / static_cast<double>(c);
        }
    return out;
}

std::string to_string(RidgeScaling s) { return s == RidgeScaling::plain ? "plain" : "dataset_scaled"; }

RidgeScaling parse_ridge_scaling(const std::string& name) {
    if (name == "plain") return RidgeScaling::plain;
    if (name == "dataset_scaled") return RidgeScaling::dataset_scaled;
    throw Error(ErrorCode::InvalidArgument, "unknown ridge scaling '" + name + "'");
}

double effective_ridge(double sigma, RidgeScaling scaling, std::size_t n) {
    return scaling == RidgeScaling::plain ? sigma : sigma * static_cast<double>(n);
}

KernelSourceModel fit_source(const FeatureMap& phi, const Dataset& source, double sigma, RidgeScaling scaling) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "fit_source: sigma must be positive");
    KernelSourceModel m;
    m.feature_map = phi;
    m.X_S = source.X;
    m.Y_S = source.Y;
    m.sigma = sigma;
    m.scaling = scaling;
    m.ridge = effective_ridge(sigma, scaling, source.size());
    m.features = phi.feature_rows(source.X);
    m.K_S = kernel_matrix(phi, source.X, source.X);
    m.alpha = ridge_solve(m.K_S, m.Y_S, m.ridge);
    m.readout = transposed_multiply(m.alpha, m.features);
    return m;
}

Matrix predict(const KernelSourceModel& model, const Matrix& a) {
    if (a.cols() != model.input_dim()) throw Error(ErrorCode::DimensionMismatch, "predict: input dimension mismatch");
    return multiply_transposed(model.feature_map.feature_rows(a), model.features) * model.alpha;
}

Vector predict_one(const KernelSourceModel& model, std::span<const double> z) {
    Matrix row(1, z.size(), std::vector<double>(z.begin(), z.end()));
    const Matrix p = predict(model, row);
    return Vector(p.data().begin(), p.data().end());
}

double empirical_risk(const Matrix& k, const Matrix& y, double sigma, std::size_t n) {
    if (!k.is_square()) throw Error(ErrorCode::NonSquare, "empirical_risk: kernel matrix is not square");
    if (k.rows() != y.rows() || k.rows() != n) throw Error(ErrorCode::DimensionMismatch, "empirical_risk: N mismatch");
    // I - K (K + sigma I)^{-1} = sigma (K + sigma I)^{-1}
    const Matrix residual = sigma * ridge_solve(k, y, sigma);
    const double f = residual.frobenius_norm();
    return f * f / static_cast<double>(n);
}

}  // namespace ntklab
