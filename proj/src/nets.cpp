#include "ntklab/nets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ntklab {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw Error(ErrorCode::InvalidArgument, "unknown activation '" + name + "'");
}

void NetworkSpec::validate() const {
    if (layer_widths.size() < 2) throw Error(ErrorCode::InvalidArgument, "network needs at least two widths");
    for (std::size_t w : layer_widths) {
        if (w == 0) throw Error(ErrorCode::InvalidArgument, "network widths must be >= 1");
    }
    if (activations.size() != layer_widths.size() - 2) {
        throw Error(ErrorCode::InvalidArgument, "activations must list one entry per hidden layer");
    }
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
        throw Error(ErrorCode::InvalidArgument, "init_scale must be finite and non-negative");
    }
}

std::size_t NetworkSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) n += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
    return n;
}

NetworkSpec NetworkSpec::dense_family(std::size_t input_dim, std::size_t width, std::size_t depth,
                                      std::size_t output_dim, Activation act, double init_scale,
                                      std::uint64_t seed) {
    NetworkSpec spec;
    spec.layer_widths.push_back(input_dim);
    for (std::size_t i = 0; i < depth; ++i) spec.layer_widths.push_back(width);
    spec.layer_widths.push_back(output_dim);
    spec.activations.assign(depth, act);
    spec.init_scale = init_scale;
    spec.seed = seed;
    return spec;
}

std::vector<LayerLayout> make_layout(const NetworkSpec& spec) {
    std::vector<LayerLayout> layout;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        LayerLayout ll;
        ll.fan_in = spec.layer_widths[l];
        ll.fan_out = spec.layer_widths[l + 1];
        ll.weight_offset = offset;
        offset += ll.fan_in * ll.fan_out;
        ll.bias_offset = offset;
        offset += ll.fan_out;
        layout.push_back(ll);
    }
    return layout;
}

NetworkParams init_network(const NetworkSpec& spec) {
    spec.validate();
    NetworkParams p;
    p.layout = make_layout(spec);
    p.flat.assign(spec.param_count(), 0.0);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const LayerLayout& ll : p.layout) {
        const double stddev = spec.init_scale / std::sqrt(static_cast<double>(ll.fan_in));
        for (std::size_t k = 0; k < ll.fan_in * ll.fan_out; ++k) p.flat[ll.weight_offset + k] = stddev * normal(rng);
    }
    return p;
}

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::identity: return z;
    }
    return z;
}

double activate_derivative(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

void check_params(const NetworkSpec& spec, const NetworkParams& params) {
    if (params.flat.size() != spec.param_count() || params.layout.size() != spec.num_layers()) {
        throw Error(ErrorCode::DimensionMismatch, "parameter vector does not match network spec");
    }
}

// Record of one forward evaluation through the first `layers` layers.
struct Pass {
    std::vector<Vector> inputs;        // h_l fed into layer l
    std::vector<Vector> pre;           // z_l = W_l h_l + b_l
    std::vector<Activation> acts;      // activation applied after layer l
    Vector out;
};

Pass run(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x, std::size_t layers,
         bool activate_last) {
    spec.validate();
    check_params(spec, params);
    if (x.size() != spec.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "input has length " + std::to_string(x.size()) + ", network expects " +
                                                      std::to_string(spec.input_dim()));
    }
    Pass pass;
    Vector h(x.begin(), x.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const LayerLayout& ll = params.layout[l];
        Vector z(ll.fan_out);
        for (std::size_t o = 0; o < ll.fan_out; ++o) {
            const double* w = params.flat.data() + ll.weight_offset + o * ll.fan_in;
            double s = params.flat[ll.bias_offset + o];
            for (std::size_t i = 0; i < ll.fan_in; ++i) s += w[i] * h[i];
            z[o] = s;
        }
        const bool last = l + 1 == layers;
        const Activation act = l < spec.activations.size() ? spec.activations[l] : Activation::identity;
        const Activation applied = (last && !activate_last) ? Activation::identity : act;
        Vector next(ll.fan_out);
        for (std::size_t o = 0; o < ll.fan_out; ++o) next[o] = activate(applied, z[o]);
        pass.inputs.push_back(std::move(h));
        pass.pre.push_back(std::move(z));
        pass.acts.push_back(applied);
        h = std::move(next);
    }
    pass.out = std::move(h);
    return pass;
}

// Pulls `seed` (d out) back through the pass. Writes d/dtheta into `param_grad`
// (when non-null) and returns d/dx.
Vector backprop(const NetworkParams& params, const Pass& pass, Vector seed, double* param_grad) {
    for (std::size_t l = pass.pre.size(); l-- > 0;) {
        const LayerLayout& ll = params.layout[l];
        Vector delta(ll.fan_out);
        for (std::size_t o = 0; o < ll.fan_out; ++o) delta[o] = seed[o] * activate_derivative(pass.acts[l], pass.pre[l][o]);
        const Vector& h = pass.inputs[l];
        if (param_grad != nullptr) {
            for (std::size_t o = 0; o < ll.fan_out; ++o) {
                double* gw = param_grad + ll.weight_offset + o * ll.fan_in;
                for (std::size_t i = 0; i < ll.fan_in; ++i) gw[i] = delta[o] * h[i];
                param_grad[ll.bias_offset + o] = delta[o];
            }
        }
        Vector back(ll.fan_in, 0.0);
        for (std::size_t o = 0; o < ll.fan_out; ++o) {
            if (delta[o] == 0.0) continue;
            const double* w = params.flat.data() + ll.weight_offset + o * ll.fan_in;
            for (std::size_t i = 0; i < ll.fan_in; ++i) back[i] += w[i] * delta[o];
        }
        seed = std::move(back);
    }
    return seed;
}

Matrix input_jacobian_of(const NetworkParams& params, const Pass& pass, std::size_t input_dim) {
    const std::size_t outs = pass.out.size();
    Matrix jac(outs, input_dim);
    for (std::size_t r = 0; r < outs; ++r) {
        Vector seed(outs, 0.0);
        seed[r] = 1.0;
        const Vector g = backprop(params, pass, std::move(seed), nullptr);
        std::copy(g.begin(), g.end(), jac.row(r).begin());
    }
    return jac;
}

}  // namespace

Vector forward(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    return run(spec, params, x, spec.num_layers(), false).out;
}

Matrix jacobian_params(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    const Pass pass = run(spec, params, x, spec.num_layers(), false);
    const std::size_t outs = spec.output_dim();
    Matrix jac(outs, spec.param_count());
    for (std::size_t r = 0; r < outs; ++r) {
        Vector seed(outs, 0.0);
        seed[r] = 1.0;
        backprop(params, pass, std::move(seed), jac.row(r).data());
    }
    return jac;
}

Matrix jacobian_input(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    const Pass pass = run(spec, params, x, spec.num_layers(), false);
    return input_jacobian_of(params, pass, spec.input_dim());
}

Vector hidden_features(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    return run(spec, params, x, spec.num_layers() - 1, true).out;
}

Matrix hidden_features_jacobian(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    const Pass pass = run(spec, params, x, spec.num_layers() - 1, true);
    if (pass.pre.empty()) return Matrix::identity(spec.input_dim());
    return input_jacobian_of(params, pass, spec.input_dim());
}

Vector hidden_features_vjp(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x,
                           std::span<const double> seed) {
    const Pass pass = run(spec, params, x, spec.num_layers() - 1, true);
    if (seed.size() != pass.out.size()) throw Error(ErrorCode::DimensionMismatch, "vjp seed length mismatch");
    return backprop(params, pass, Vector(seed.begin(), seed.end()), nullptr);
}

double min_abs_preactivation(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x) {
    const Pass pass = run(spec, params, x, spec.num_layers(), false);
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l + 1 < pass.pre.size(); ++l)
        for (double z : pass.pre[l]) m = std::min(m, std::abs(z));
    return m;
}

Matrix fd_jacobian(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x,
                   JacobianWrt wrt, double h) {
    if (!(h >= 1e-8 && h <= 1e-2)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must lie in [1e-8, 1e-2]");
    const std::size_t outs = spec.output_dim();
    if (wrt == JacobianWrt::input) {
        Vector xp(x.begin(), x.end());
        Matrix jac(outs, xp.size());
        for (std::size_t k = 0; k < xp.size(); ++k) {
            const double orig = xp[k];
            xp[k] = orig + h;
            const Vector fp = forward(spec, params, xp);
            xp[k] = orig - h;
            const Vector fm = forward(spec, params, xp);
            xp[k] = orig;
            for (std::size_t r = 0; r < outs; ++r) jac(r, k) = (fp[r] - fm[r]) / (2.0 * h);
        }
        return jac;
    }
    NetworkParams p = params;
    Matrix jac(outs, p.flat.size());
    for (std::size_t k = 0; k < p.flat.size(); ++k) {
        const double orig = p.flat[k];
        p.flat[k] = orig + h;
        const Vector fp = forward(spec, p, x);
        p.flat[k] = orig - h;
        const Vector fm = forward(spec, p, x);
        p.flat[k] = orig;
        for (std::size_t r = 0; r < outs; ++r) jac(r, k) = (fp[r] - fm[r]) / (2.0 * h);
    }
    return jac;
}

}  // namespace ntklab
