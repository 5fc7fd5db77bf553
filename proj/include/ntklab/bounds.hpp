#pragma once

// Numeric instantiation of the eigenvalue-spectrum bounds for reprogrammed
// models: empirical-risk sandwich, Kronecker spectrum equivalence, the theta_A /
// theta_B kernel sandwiches, their corollaries and the generalization-gap bound.

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "ntklab/reprogram.hpp"

namespace ntklab {

enum class BoundMode { as_printed, squared, not_applicable };

std::string to_string(BoundMode m);

struct BoundReport {
    std::string name;
    BoundMode mode = BoundMode::not_applicable;
    std::vector<double> lambda_observed;
    double lower = 0.0;
    double upper = 0.0;
    bool satisfied_lower = false;
    bool satisfied_upper = false;
    double slack_lower = 0.0;  // min(observed) - lower
    double slack_upper = 0.0;  // upper - max(observed)
    bool one_sided = false;    // lower side vacuous (reported as 0)
    std::optional<double> max_deviation;  // equality-type checks
    std::string note;

    bool holds() const { return satisfied_lower && satisfied_upper; }
};

nlohmann::json to_json(const BoundReport& r);

inline constexpr double kDefaultBoundTol = 1e-9;

// Fills satisfied_* and slack_* for `observed` against [lower, upper] with
// tolerance tol * max(1, |value|).
void evaluate_sandwich(BoundReport& r, double tol);

// Empirical risk computed in the eigenbasis: (1/N) sum_i (sigma/(sigma+l_i))^2 |u_i^T Y|^2.
double spectral_risk(const Spectrum& spectrum, const Matrix& Y, double sigma, std::size_t n);

BoundReport thm1_bounds(const Spectrum& spectrum, const Matrix& Y, double sigma, std::size_t n, BoundMode mode,
                        double tol = kDefaultBoundTol);

BoundReport prop1_check(const Matrix& theta, std::size_t c, double tol = kDefaultBoundTol);

// b Y_S^T (K_S + s I)^{-1} K_S (K_S + s I)^{-1} Y_S b^T, s = source.ridge
Matrix theta_S_b(const KernelSourceModel& source, const Matrix& b);

BoundReport thm2_bounds(const ReprogrammedModel& m, const Dataset& target, double tol = kDefaultBoundTol);
BoundReport thm3_bounds(const ReprogrammedModel& m, const Dataset& target, double tol = kDefaultBoundTol);

// k(a(X_T), X_S) k(X_S, a(X_T))
Matrix cross_kernel_product(const ReprogrammedModel& m, const Matrix& X_T);

double estimate_cA(const ReprogrammedModel& m, const Dataset& target);
double estimate_cB(const ReprogrammedModel& m, const Dataset& target);
double cor1_lower(const ReprogrammedModel& m, const Dataset& target, double c_A);
double cor2_lower(const ReprogrammedModel& m, const Dataset& target, double c_B);

// Checks the corollary bound against lambda_min of ntk_A / scalar ntk_B.
BoundReport cor1_report(const ReprogrammedModel& m, const Dataset& target, double tol = kDefaultBoundTol);
BoundReport cor2_report(const ReprogrammedModel& m, const Dataset& target, double tol = kDefaultBoundTol);

BoundReport combined_bounds(const ReprogrammedModel& m, const Dataset& target, double tol = kDefaultBoundTol);

struct GapBoundInputs {
    double rho = 0.0;
    double B = 0.0;
    double T = 0.0;
    double L_D = 0.0;
    double Gamma_D = 0.0;
    double delta = 0.05;
    double ntk_abs_sum = 0.0;
    std::size_t N_T = 1;

    void validate() const;
};

double gap_bound(const GapBoundInputs& in);

// Sample-based (hence "empirical estimate") values of the distributional
// constants; L_D uses central differences with step fd_step.
GapBoundInputs estimate_gap_constants(const Dataset& target, const ReprogrammedModel& m, double T, double B,
                                      double delta = 0.05, double fd_step = 1e-5);

}  // namespace ntklab
