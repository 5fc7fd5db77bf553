#pragma once

// Synthetic tasks, the source-depth sweep, the cross-kernel assumption
// diagnostic and the randomized bound-verification sweep.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ntklab/bounds.hpp"

namespace ntklab {

// Gaussian blobs around orthogonal class centres separation * e_k, unit noise,
// one-hot labels. Class of sample i is i mod n_classes.
Dataset make_synthetic_task(std::uint64_t seed, std::size_t n_samples, std::size_t dim, std::size_t n_classes,
                            double class_separation);

struct Split {
    Dataset train;
    Dataset test;
};

Split train_test_split(const Dataset& d, double train_fraction, std::uint64_t seed);

double argmax_accuracy(const Matrix& predictions, const Matrix& one_hot);
double mean_squared_error(const Matrix& predictions, const Matrix& targets);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

enum class TransformKind { fc, vp };

std::string to_string(TransformKind k);
TransformKind parse_transform_kind(const std::string& name);

struct SweepConfig {
    std::vector<std::size_t> depths{1, 2, 3};
    std::size_t hidden_width = 32;
    Activation activation = Activation::relu;
    double init_scale = 1.0;
    FeatureKind feature_kind = FeatureKind::net_features;
    std::uint64_t net_seed = 0;

    std::uint64_t source_seed = 1;
    std::size_t source_samples = 60;
    std::size_t source_dim = 8;
    std::size_t source_classes = 4;
    double source_separation = 3.0;

    std::uint64_t target_seed = 2;
    std::size_t target_samples = 40;
    std::size_t target_dim = 6;
    std::size_t target_classes = 3;
    double target_separation = 3.0;

    TransformKind transform_kind = TransformKind::fc;
    bool train_transform = true;
    bool train_mapping = true;
    double sigma_S = 1.0;
    RidgeScaling ridge_scaling = RidgeScaling::plain;
    double lr = 0.05;
    std::size_t steps = 200;
    std::size_t replicates = 3;
    double train_fraction = 0.8;
    std::filesystem::path output_dir = "sweep_out";
    std::size_t jobs = 1;

    void validate() const;
};

struct ReplicateRecord {
    std::size_t depth = 0;
    std::size_t replicate = 0;
    double lambda_min_KS = 0.0;
    double lambda_max_KS = 0.0;
    double source_loss = 0.0;
    double source_acc = 0.0;
    double target_loss = 0.0;
    double target_acc = 0.0;
    double c_B_estimate = 0.0;
    double cross_kernel_sqrt_min = 0.0;
    double initial_target_loss = 0.0;
    std::optional<std::string> error;
};

// Per-depth mean over replicates; std_* carry the spread.
struct SweepRecord {
    std::size_t depth = 0;
    double lambda_min_KS = 0.0;
    double lambda_max_KS = 0.0;
    double source_loss = 0.0;
    double source_acc = 0.0;
    double target_loss = 0.0;
    double target_acc = 0.0;
    double c_B_estimate = 0.0;
    double cross_kernel_sqrt_min = 0.0;
    double std_source_loss = 0.0;
    double std_target_loss = 0.0;
    double std_source_acc = 0.0;
    double std_target_acc = 0.0;
    std::optional<std::string> error;
};

struct DiagnosticPoint {
    std::size_t depth = 0;
    double x = 0.0;  // lambda_max[K_S]
    double y = 0.0;  // sqrt(lambda_min[k(a(X_T), X_S) k(X_S, a(X_T))])
    double c_B = 0.0;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    std::vector<ReplicateRecord> replicates;
    std::vector<DiagnosticPoint> diagnostic;  // replicate 0 of every depth
};

// Builds the reprogrammed model used by the sweep for one (depth, replicate) cell,
// before training.
struct SweepCell {
    std::shared_ptr<const KernelSourceModel> source;
    Split source_split;
    Split target_split;
    ReprogrammedModel model;
};

SweepCell build_sweep_cell(const SweepConfig& cfg, std::size_t depth, std::size_t replicate);
ReplicateRecord run_sweep_cell(const SweepConfig& cfg, std::size_t depth, std::size_t replicate);

SweepResult run_depth_sweep(const SweepConfig& cfg);

DiagnosticPoint diagnostic_point(const ReprogrammedModel& m, const Matrix& X_T);
std::vector<DiagnosticPoint> assumption_diagnostic(const SweepConfig& cfg);

inline constexpr const char* kSweepCsvHeader =
    "depth,lambda_min_KS,lambda_max_KS,source_loss,source_acc,target_loss,target_acc,c_B_estimate,"
    "cross_kernel_sqrt_min";

// sweep.csv, sweep.json, diagnostic.csv and sweep_replicates.csv under dir.
void write_reports(const SweepResult& result, const std::filesystem::path& dir);
std::string sweep_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_sweep_csv(const std::string& text);

// ---- randomized verification ------------------------------------------------

struct VerificationOptions {
    std::size_t max_target_samples = 8;
    std::size_t max_source_samples = 12;
    std::size_t max_source_dim = 6;
    double tolerance = kDefaultBoundTol;
    double additivity_tolerance = 1e-10;
    double kron_tolerance = 1e-9;
    // Non-zero values pin the sample counts instead of drawing them.
    std::size_t target_samples = 0;
    std::size_t source_samples = 0;
    bool zero_mapping = false;  // b = 0
};

struct VerificationInstance {
    ReprogrammedModel model;
    Dataset target;
    std::string variant;  // e.g. "fc/linear"
};

// Seed mod 4 picks FC/VP x linear/net feature map; both theta_A and theta_B trainable.
VerificationInstance make_verification_instance(std::uint64_t seed, const VerificationOptions& opts = {});

// Isotropic instance: a(X_T) = X_S with orthonormal X_S rows, linear Phi, ridge 1, Y_S = I.
VerificationInstance make_isotropic_instance(std::size_t n = 3);

double ntk_additivity_error(const ReprogrammedModel& m, const Matrix& X_T);

struct VerificationSummary {
    bool passed = true;
    nlohmann::json details;
    std::vector<std::string> violations;
};

VerificationSummary run_verification(std::uint64_t seed_begin, std::uint64_t seed_end, const VerificationOptions& opts,
                                     std::size_t jobs = 1);

}  // namespace ntklab
