#pragma once

// Small dense feed-forward networks with exact reverse-mode Jacobians.
//
// Layer l maps h_{l} -> act_l(W_l h_l + b_l). Hidden layers use the activation
// listed in NetworkSpec::activations; the final layer is always the identity.
// Parameters live in one flat vector: for each layer the fan_out x fan_in weight
// block (row-major) followed by the fan_out bias entries.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ntklab/linalg.hpp"

namespace ntklab {

enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct NetworkSpec {
    std::vector<std::size_t> layer_widths;  // input dim first, output dim last
    std::vector<Activation> activations;    // one per hidden layer
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t input_dim() const { return layer_widths.front(); }
    std::size_t output_dim() const { return layer_widths.back(); }
    std::size_t num_layers() const { return layer_widths.size() - 1; }
    std::size_t param_count() const;

    // Dense depth family: `depth` hidden layers of constant `width`.
    static NetworkSpec dense_family(std::size_t input_dim, std::size_t width, std::size_t depth,
                                    std::size_t output_dim, Activation act, double init_scale,
                                    std::uint64_t seed);
};

struct LayerLayout {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

struct NetworkParams {
    std::vector<double> flat;
    std::vector<LayerLayout> layout;
};

std::vector<LayerLayout> make_layout(const NetworkSpec& spec);

// Weights ~ N(0, (init_scale / sqrt(fan_in))^2), biases zero; deterministic in spec.seed.
NetworkParams init_network(const NetworkSpec& spec);

Vector forward(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);
// c x P, row i = d f_i / d theta
Matrix jacobian_params(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);
// c x d
Matrix jacobian_input(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);

// Activations of the last hidden layer and their input Jacobian (width x d).
// Used as the explicit feature map of a pinned network; a network without hidden
// layers exposes its input unchanged.
Vector hidden_features(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);
Matrix hidden_features_jacobian(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);
// seed^T dPhi/dx in one reverse pass (seed has the hidden width).
Vector hidden_features_vjp(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x,
                           std::span<const double> seed);

// Smallest |pre-activation| over all hidden units; tests use it to stay away
// from relu kinks.
double min_abs_preactivation(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x);

enum class JacobianWrt { params, input };

// Central differences, one column per perturbed coordinate; h in [1e-8, 1e-2].
Matrix fd_jacobian(const NetworkSpec& spec, const NetworkParams& params, std::span<const double> x,
                   JacobianWrt wrt, double h);

}  // namespace ntklab
