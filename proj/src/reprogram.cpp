#include "ntklab/reprogram.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace ntklab {

InputTransform InputTransform::fc(Matrix W, std::optional<Vector> bias) {
    if (bias && bias->size() != W.rows()) throw Error(ErrorCode::DimensionMismatch, "FC bias length must equal d_S");
    InputTransform t;
    t.impl_ = FcTransform{std::move(W), std::move(bias)};
    return t;
}

InputTransform InputTransform::vp(std::size_t source_dim, std::vector<std::size_t> embed_index, Vector theta) {
    if (embed_index.size() > source_dim) throw Error(ErrorCode::DimensionMismatch, "VP needs d_T <= d_S");
    if (theta.size() != source_dim) throw Error(ErrorCode::DimensionMismatch, "VP theta must have length d_S");
    Vector mask(source_dim, 1.0);
    for (std::size_t slot : embed_index) {
        if (slot >= source_dim) throw Error(ErrorCode::DimensionMismatch, "VP embed slot out of range");
        if (mask[slot] == 0.0) throw Error(ErrorCode::InvalidArgument, "VP embed index must be injective");
        mask[slot] = 0.0;
    }
    InputTransform t;
    t.impl_ = VpTransform{std::move(embed_index), std::move(theta), std::move(mask)};
    return t;
}

std::size_t InputTransform::target_dim() const {
    return is_fc() ? as_fc().W.cols() : as_vp().embed_index.size();
}

std::size_t InputTransform::source_dim() const {
    return is_fc() ? as_fc().W.rows() : as_vp().theta.size();
}

std::size_t InputTransform::param_count() const {
    return is_fc() ? as_fc().W.size() : as_vp().theta.size();
}

Vector InputTransform::params() const {
    if (is_fc()) return Vector(as_fc().W.data().begin(), as_fc().W.data().end());
    return as_vp().theta;
}

InputTransform InputTransform::with_params(std::span<const double> p) const {
    if (p.size() != param_count()) throw Error(ErrorCode::DimensionMismatch, "transform parameter count mismatch");
    InputTransform t = *this;
    if (auto* fc = std::get_if<FcTransform>(&t.impl_)) {
        fc->W = Matrix(fc->W.rows(), fc->W.cols(), std::vector<double>(p.begin(), p.end()));
    } else {
        auto& vp = std::get<VpTransform>(t.impl_);
        vp.theta.assign(p.begin(), p.end());
        for (double v : vp.theta)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteEntry, "VP theta is not finite");
    }
    return t;
}

Vector InputTransform::apply(std::span<const double> x) const {
    if (x.size() != target_dim()) throw Error(ErrorCode::DimensionMismatch, "transform input has wrong length");
    if (is_fc()) {
        const FcTransform& fc = as_fc();
        Vector out = fc.W * x;
        if (fc.bias)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*fc.bias)[i];
        return out;
    }
    const VpTransform& vp = as_vp();
    Vector out(vp.theta.size());
    for (std::size_t s = 0; s < out.size(); ++s) out[s] = vp.mask[s] * vp.theta[s];
    for (std::size_t t = 0; t < x.size(); ++t) out[vp.embed_index[t]] = x[t];
    return out;
}

Matrix InputTransform::apply_rows(const Matrix& xs) const {
    Matrix out(xs.rows(), source_dim());
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        const Vector a = apply(xs.row(i));
        std::copy(a.begin(), a.end(), out.row(i).begin());
    }
    return out;
}

Matrix InputTransform::jacobian(std::span<const double> x) const {
    if (x.size() != target_dim()) throw Error(ErrorCode::DimensionMismatch, "transform input has wrong length");
    const std::size_t ds = source_dim();
    if (is_fc()) {
        const std::size_t dt = target_dim();
        Matrix j(ds, ds * dt);
        for (std::size_t s = 0; s < ds; ++s)
            for (std::size_t t = 0; t < dt; ++t) j(s, s * dt + t) = x[t];
        return j;
    }
    return Matrix::diagonal(as_vp().mask);
}

void ReprogrammedModel::validate() const {
    if (!source) throw Error(ErrorCode::InvalidArgument, "reprogrammed model has no source model");
    if (transform.source_dim() != source->input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "transform output dim does not match source input dim");
    }
    if (mapping.b.cols() != source->output_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "output mapping columns do not match source label dim");
    }
}

Matrix default_output_mapping(std::size_t c_T, std::size_t c_S, bool trainable) {
    Matrix b(c_T, c_S);
    if (!trainable)
        for (std::size_t i = 0; i < std::min(c_T, c_S); ++i) b(i, i) = 1.0;
    return b;
}

Vector apply_transform(const InputTransform& t, std::span<const double> x) { return t.apply(x); }

Matrix transform_jacobian(const InputTransform& t, std::span<const double> x) { return t.jacobian(x); }

Vector target_forward(const ReprogrammedModel& m, std::span<const double> x) {
    m.validate();
    return m.mapping.b * predict_one(*m.source, m.transform.apply(x));
}

Matrix target_forward_rows(const ReprogrammedModel& m, const Matrix& xs) {
    m.validate();
    if (xs.cols() != m.target_dim()) throw Error(ErrorCode::DimensionMismatch, "target input has wrong length");
    const Matrix fs = predict(*m.source, m.transform.apply_rows(xs));
    return multiply_transposed(fs, m.mapping.b);
}

namespace {

void require_differentiable(const ReprogrammedModel& m) {
    if (!m.source->feature_map.differentiable()) {
        throw Error(ErrorCode::FeatureMapNotDifferentiable,
                    "theta_A quantities need a feature map with an input Jacobian");
    }
}

Matrix gram_blocks(const std::vector<Matrix>& jac, std::size_t c) {
    const std::size_t n = jac.size();
    Matrix out(n * c, n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const Matrix blk = multiply_transposed(jac[i], jac[j]);
            for (std::size_t r = 0; r < c; ++r)
                for (std::size_t s = 0; s < c; ++s) {
                    out(i * c + r, j * c + s) = blk(r, s);
                    out(j * c + s, i * c + r) = blk(r, s);
                }
        }
    return out;
}

}  // namespace

Matrix theta_A_jacobian(const ReprogrammedModel& m, std::span<const double> x) {
    m.validate();
    require_differentiable(m);
    const Vector a = m.transform.apply(x);
    const Matrix head = m.mapping.b * m.source->readout;                   // c_T x p
    const Matrix h = head * m.source->feature_map.input_jacobian(a);       // c_T x d_S
    if (m.transform.is_fc()) {
        const std::size_t dt = m.transform.target_dim();
        Matrix g(h.rows(), h.cols() * dt);
        for (std::size_t r = 0; r < h.rows(); ++r)
            for (std::size_t s = 0; s < h.cols(); ++s)
                for (std::size_t t = 0; t < dt; ++t) g(r, s * dt + t) = h(r, s) * x[t];
        return g;
    }
    Matrix g = h;
    const Vector& mask = m.transform.as_vp().mask;
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t s = 0; s < g.cols(); ++s) g(r, s) *= mask[s];
    return g;
}

Matrix theta_B_jacobian(const ReprogrammedModel& m, std::span<const double> x) {
    m.validate();
    const Vector fs = predict_one(*m.source, m.transform.apply(x));
    const std::size_t ct = m.mapping.b.rows();
    const std::size_t cs = fs.size();
    Matrix g(ct, ct * cs);
    for (std::size_t i = 0; i < ct; ++i)
        for (std::size_t l = 0; l < cs; ++l) g(i, i * cs + l) = fs[l];
    return g;
}

Matrix trainable_jacobian(const ReprogrammedModel& m, std::span<const double> x) {
    m.validate();
    const std::size_t ct = m.mapping.b.rows();
    const std::size_t pa = m.transform_trainable ? m.transform.param_count() : 0;
    const std::size_t pb = m.mapping.trainable ? m.mapping.b.size() : 0;
    Matrix j(ct, pa + pb);
    if (pa > 0) {
        const Matrix ga = theta_A_jacobian(m, x);
        for (std::size_t r = 0; r < ct; ++r) std::copy(ga.row(r).begin(), ga.row(r).end(), j.row(r).begin());
    }
    if (pb > 0) {
        const Matrix gb = theta_B_jacobian(m, x);
        for (std::size_t r = 0; r < ct; ++r) std::copy(gb.row(r).begin(), gb.row(r).end(), j.row(r).begin() + pa);
    }
    return j;
}

Matrix ntk_A(const ReprogrammedModel& m, const Matrix& X_T) {
    std::vector<Matrix> jac;
    for (std::size_t i = 0; i < X_T.rows(); ++i) jac.push_back(theta_A_jacobian(m, X_T.row(i)));
    return gram_blocks(jac, m.label_dim());
}

NtkB ntk_B(const ReprogrammedModel& m, const Matrix& X_T) {
    m.validate();
    const Matrix fs = predict(*m.source, m.transform.apply_rows(X_T));
    Matrix scalar = multiply_transposed(fs, fs);
    Matrix block = kron(scalar, Matrix::identity(m.label_dim()));
    return {std::move(scalar), std::move(block)};
}

Matrix ntk_T(const ReprogrammedModel& m, const Matrix& X_T) {
    std::vector<Matrix> jac;
    for (std::size_t i = 0; i < X_T.rows(); ++i) jac.push_back(trainable_jacobian(m, X_T.row(i)));
    return gram_blocks(jac, m.label_dim());
}

Matrix transform_gram(const InputTransform& t, const Matrix& X_T, std::size_t element_cap) {
    const std::size_t ds = t.source_dim();
    const std::size_t n = X_T.rows();
    if (n * ds != 0 && n * ds > element_cap / (n * ds)) {
        throw Error(ErrorCode::SizeOverflow, "transform Gram exceeds the element cap");
    }
    std::vector<Matrix> jac;
    for (std::size_t i = 0; i < n; ++i) jac.push_back(t.jacobian(X_T.row(i)));
    return gram_blocks(jac, ds);
}

double mean_squared_loss(const ReprogrammedModel& m, const Dataset& d) {
    const Matrix pred = target_forward_rows(m, d.X);
    if (pred.cols() != d.label_dim()) throw Error(ErrorCode::DimensionMismatch, "target label dimension mismatch");
    const double f = (pred - d.Y).frobenius_norm();
    return f * f / static_cast<double>(d.size());
}

Vector loss_gradient(const ReprogrammedModel& m, const Dataset& d) {
    m.validate();
    const std::size_t ct = m.label_dim();
    const std::size_t cs = m.source->output_dim();
    const std::size_t pa = m.transform_trainable ? m.transform.param_count() : 0;
    const std::size_t pb = m.mapping.trainable ? m.mapping.b.size() : 0;
    if (pa > 0) require_differentiable(m);
    Vector grad(pa + pb, 0.0);
    const Matrix a_rows = m.transform.apply_rows(d.X);
    const Matrix fs = predict(*m.source, a_rows);
    const Matrix pred = multiply_transposed(fs, m.mapping.b);
    const double scale = 2.0 / static_cast<double>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        Vector r(ct);
        for (std::size_t k = 0; k < ct; ++k) r[k] = scale * (pred(i, k) - d.Y(i, k));
        if (pa > 0) {
            const Vector bt_r = m.mapping.b.transpose() * r;                          // c_S
            const Vector seed = m.source->readout.transpose() * bt_r;                 // p
            const Vector g = m.source->feature_map.input_vjp(a_rows.row(i), seed);    // d_S
            if (m.transform.is_fc()) {
                const std::size_t dt = m.transform.target_dim();
                for (std::size_t s = 0; s < g.size(); ++s)
                    for (std::size_t t = 0; t < dt; ++t) grad[s * dt + t] += g[s] * d.X(i, t);
            } else {
                const Vector& mask = m.transform.as_vp().mask;
                for (std::size_t s = 0; s < g.size(); ++s) grad[s] += mask[s] * g[s];
            }
        }
        if (pb > 0) {
            for (std::size_t k = 0; k < ct; ++k)
                for (std::size_t l = 0; l < cs; ++l) grad[pa + k * cs + l] += r[k] * fs(i, l);
        }
    }
    return grad;
}

Vector trainable_params(const ReprogrammedModel& m) {
    Vector p;
    if (m.transform_trainable) p = m.transform.params();
    if (m.mapping.trainable) p.insert(p.end(), m.mapping.b.data().begin(), m.mapping.b.data().end());
    return p;
}

ReprogrammedModel with_trainable_params(const ReprogrammedModel& m, std::span<const double> p) {
    const std::size_t pa = m.transform_trainable ? m.transform.param_count() : 0;
    const std::size_t pb = m.mapping.trainable ? m.mapping.b.size() : 0;
    if (p.size() != pa + pb) throw Error(ErrorCode::DimensionMismatch, "trainable parameter count mismatch");
    ReprogrammedModel out = m;
    if (pa > 0) out.transform = m.transform.with_params(p.subspan(0, pa));
    if (pb > 0) {
        auto tail = p.subspan(pa);
        out.mapping.b = Matrix(m.mapping.b.rows(), m.mapping.b.cols(), std::vector<double>(tail.begin(), tail.end()));
    }
    return out;
}

TrainResult train_reprogram(const ReprogrammedModel& m, const Dataset& target, double lr, std::size_t steps) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::InvalidArgument, "learning rate must be >= 0");
    if (steps == 0) throw Error(ErrorCode::InvalidArgument, "training needs at least one step");
    m.validate();
    if (target.input_dim() != m.target_dim() || target.label_dim() != m.label_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "target dataset does not match the reprogrammed model");
    }
    TrainResult result{m, {}, false, false};
    Vector params = trainable_params(m);
    const double initial = mean_squared_loss(m, target);
    result.loss_trace.push_back(initial);
    if (!std::isfinite(initial)) {
        result.aborted_non_finite = true;
        return result;
    }
    for (std::size_t step = 0; step < steps; ++step) {
        const Vector grad = loss_gradient(result.model, target);
        Vector next = params;
        bool finite = true;
        for (std::size_t k = 0; k < next.size(); ++k) {
            next[k] -= lr * grad[k];
            finite = finite && std::isfinite(next[k]);
        }
        if (!finite) {
            result.aborted_non_finite = true;
            break;
        }
        ReprogrammedModel candidate = with_trainable_params(result.model, next);
        const double loss = mean_squared_loss(candidate, target);
        if (!std::isfinite(loss)) {
            result.aborted_non_finite = true;
            break;
        }
        params = std::move(next);
        result.model = std::move(candidate);
        result.loss_trace.push_back(loss);
    }
    result.divergence_warning = result.aborted_non_finite || result.loss_trace.back() > initial;
    return result;
}

void write_loss_trace_csv(std::ostream& out, std::span<const double> trace) {
    out << "step,loss\n";
    char buf[40];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", trace[i]);
        out << i << ',' << buf << '\n';
    }
}

}  // namespace ntklab
