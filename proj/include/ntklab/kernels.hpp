#pragma once

// Explicit feature maps, empirical NTKs and the kernel ridge regression source
// model f_S(z)^T = k(z, X_S) (K_S + ridge I)^{-1} Y_S.

#include <iosfwd>
#include <memory>
#include <string>

#include "ntklab/linalg.hpp"
#include "ntklab/nets.hpp"

namespace ntklab {

struct Dataset {
    Matrix X;  // N x d
    Matrix Y;  // N x c
    std::string name;

    Dataset() = default;
    Dataset(Matrix x, Matrix y, std::string name = {});

    std::size_t size() const { return X.rows(); }
    std::size_t input_dim() const { return X.cols(); }
    std::size_t label_dim() const { return Y.cols(); }

    Dataset subset(std::span<const std::size_t> rows) const;
};

// Header `y0..y{c-1},x0..x{d-1}`; labels first.
void write_dataset_csv(std::ostream& out, const Dataset& d);
Dataset read_dataset_csv(std::istream& in, std::string name = {});

enum class FeatureKind { linear, net_features, ntk_features };

std::string to_string(FeatureKind k);
FeatureKind parse_feature_kind(const std::string& name);

class FeatureMap {
public:
    static FeatureMap linear(std::size_t dim);
    // Last-hidden-layer activations of a pinned network.
    static FeatureMap net_features(NetworkSpec spec, NetworkParams params);
    // vec(J_theta f(x)) / sqrt(c): <Phi(x), Phi(x')> = trace(J(x) J(x')^T) / c.
    static FeatureMap ntk_features(NetworkSpec spec, NetworkParams params);

    // Multiplies Phi by `factor`; the induced kernel scales by factor^2.
    FeatureMap scaled(double factor) const;

    FeatureKind kind() const { return kind_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    bool differentiable() const { return kind_ != FeatureKind::ntk_features; }
    const NetworkSpec& network_spec() const { return spec_; }
    const NetworkParams& network_params() const { return params_; }

    Vector features(std::span<const double> x) const;
    // Rows Phi(a_i) for every row a_i of `points`.
    Matrix feature_rows(const Matrix& points) const;
    // p x d Jacobian of Phi at x; FeatureMapNotDifferentiable for ntk_features.
    Matrix input_jacobian(std::span<const double> x) const;
    // seed^T dPhi/dx without forming the Jacobian.
    Vector input_vjp(std::span<const double> x, std::span<const double> seed) const;

private:
    FeatureKind kind_ = FeatureKind::linear;
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
    double scale_ = 1.0;
    NetworkSpec spec_;
    NetworkParams params_;
};

// (i, j) = <Phi(a_i), Phi(b_j)>
Matrix kernel_matrix(const FeatureMap& phi, const Matrix& a, const Matrix& b);

// Block kernel (N_a c x N_b c); block (i, j) = J(a_i) J(b_j)^T.
Matrix empirical_ntk(const NetworkSpec& spec, const NetworkParams& params, const Matrix& a, const Matrix& b);

// Reduce a block kernel with c x c blocks to the scalar kernel (1/c) trace(block).
Matrix block_trace_reduce(const Matrix& block_kernel, std::size_t c);

enum class RidgeScaling { plain, dataset_scaled };

std::string to_string(RidgeScaling s);
RidgeScaling parse_ridge_scaling(const std::string& name);

// sigma for the plain convention, sigma * N for the dataset-size-scaled one.
double effective_ridge(double sigma, RidgeScaling scaling, std::size_t n);

struct KernelSourceModel {
    FeatureMap feature_map;
    Matrix X_S;
    Matrix Y_S;
    double sigma = 0.0;         // as configured
    RidgeScaling scaling = RidgeScaling::plain;
    double ridge = 0.0;         // effective value used everywhere downstream
    Matrix features;            // Phi(X_S), N_S x p
    Matrix K_S;                 // N_S x N_S
    Matrix alpha;               // (K_S + ridge I)^{-1} Y_S, N_S x c_S
    Matrix readout;             // alpha^T Phi(X_S), c_S x p; f_S(z) = readout * Phi(z)

    std::size_t input_dim() const { return X_S.cols(); }
    std::size_t output_dim() const { return Y_S.cols(); }
    std::size_t size() const { return X_S.rows(); }
};

KernelSourceModel fit_source(const FeatureMap& phi, const Dataset& source, double sigma,
                             RidgeScaling scaling = RidgeScaling::plain);

// k(A, X_S) alpha, with k(A, X_S) = Phi(A) Phi(X_S)^T from the cached features
Matrix predict(const KernelSourceModel& model, const Matrix& a);
Vector predict_one(const KernelSourceModel& model, std::span<const double> z);

// (1/N) || (I - K (K + sigma I)^{-1}) Y ||_F^2
double empirical_risk(const Matrix& k, const Matrix& y, double sigma, std::size_t n);

}  // namespace ntklab
