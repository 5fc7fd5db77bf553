#pragma once

// The reprogrammed target model f_T = b . f_S . a, its parameter Jacobians and
// the NTK blocks attributable to the input transformation (theta_A) and the
// output mapping (theta_B).

#include <iosfwd>
#include <memory>
#include <optional>
#include <variant>

#include "ntklab/kernels.hpp"

namespace ntklab {

// a(x) = W x (+ bias). Only W is trainable.
struct FcTransform {
    Matrix W;  // d_S x d_T
    std::optional<Vector> bias;
};

// a(x) = Scatter(x) + mask (.) theta. The mask is zero exactly on embedded slots.
struct VpTransform {
    std::vector<std::size_t> embed_index;  // target coordinate t -> source slot
    Vector theta;                          // d_S, trainable
    Vector mask;                           // d_S, 0/1
};

class InputTransform {
public:
    static InputTransform fc(Matrix W, std::optional<Vector> bias = std::nullopt);
    static InputTransform vp(std::size_t source_dim, std::vector<std::size_t> embed_index, Vector theta);

    bool is_fc() const { return std::holds_alternative<FcTransform>(impl_); }
    const FcTransform& as_fc() const { return std::get<FcTransform>(impl_); }
    const VpTransform& as_vp() const { return std::get<VpTransform>(impl_); }

    std::size_t target_dim() const;
    std::size_t source_dim() const;
    std::size_t param_count() const;  // d_S d_T for FC, d_S for VP

    Vector params() const;
    InputTransform with_params(std::span<const double> p) const;

    Vector apply(std::span<const double> x) const;
    Matrix apply_rows(const Matrix& xs) const;
    // d_S x P_A
    Matrix jacobian(std::span<const double> x) const;

private:
    std::variant<FcTransform, VpTransform> impl_;
};

struct OutputMapping {
    Matrix b;  // c_T x c_S
    bool trainable = true;
};

struct ReprogrammedModel {
    InputTransform transform;
    bool transform_trainable = true;
    std::shared_ptr<const KernelSourceModel> source;
    OutputMapping mapping;

    void validate() const;
    std::size_t target_dim() const { return transform.target_dim(); }
    std::size_t label_dim() const { return mapping.b.rows(); }
};

// Zero when trainable, identity-padded (b_ij = [i == j]) when frozen.
Matrix default_output_mapping(std::size_t c_T, std::size_t c_S, bool trainable);

Vector apply_transform(const InputTransform& t, std::span<const double> x);
Matrix transform_jacobian(const InputTransform& t, std::span<const double> x);

Vector target_forward(const ReprogrammedModel& m, std::span<const double> x);
Matrix target_forward_rows(const ReprogrammedModel& m, const Matrix& xs);

// c_T x P_A: b readout dPhi/da da/dtheta_A
Matrix theta_A_jacobian(const ReprogrammedModel& m, std::span<const double> x);
// c_T x (c_T c_S), b row-major: d f_i / d b_kl = [i == k] f_S(a(x))_l
Matrix theta_B_jacobian(const ReprogrammedModel& m, std::span<const double> x);
// Jacobian over the trainable parameters, theta_A (if trainable) first.
Matrix trainable_jacobian(const ReprogrammedModel& m, std::span<const double> x);

Matrix ntk_A(const ReprogrammedModel& m, const Matrix& X_T);

struct NtkB {
    Matrix scalar;  // N_T x N_T, <f_S(a(x_i)), f_S(a(x_j))>
    Matrix block;   // scalar (x) I_{c_T}
};

NtkB ntk_B(const ReprogrammedModel& m, const Matrix& X_T);

Matrix ntk_T(const ReprogrammedModel& m, const Matrix& X_T);

// Block Gram of transform_jacobian: (i, j) block = da(x_i) da(x_j)^T, d_S x d_S.
Matrix transform_gram(const InputTransform& t, const Matrix& X_T,
                      std::size_t element_cap = kDefaultKronElementCap);

double mean_squared_loss(const ReprogrammedModel& m, const Dataset& d);
// Gradient of mean_squared_loss over trainable_jacobian's parameter ordering.
Vector loss_gradient(const ReprogrammedModel& m, const Dataset& d);
Vector trainable_params(const ReprogrammedModel& m);
ReprogrammedModel with_trainable_params(const ReprogrammedModel& m, std::span<const double> p);

struct TrainResult {
    ReprogrammedModel model;
    std::vector<double> loss_trace;  // steps + 1 entries, initial loss first
    bool divergence_warning = false;
    bool aborted_non_finite = false;
};

// Full-batch gradient descent on (1/N) sum ||f_T(x) - y||^2.
TrainResult train_reprogram(const ReprogrammedModel& m, const Dataset& target, double lr, std::size_t steps);

void write_loss_trace_csv(std::ostream& out, std::span<const double> trace);

}  // namespace ntklab
