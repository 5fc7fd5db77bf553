#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "test_support.hpp"

using namespace ntklab;
using namespace testing_support;

namespace {

std::vector<double> eigenvalues(const Matrix& m) { return charpoly_eigenvalues(m); }

// (1/N) ||Y - K (K + sigma I)^{-1} Y||^2 through an explicit inverse.
double direct_risk(const Matrix& k, const Matrix& y, double sigma) {
    Matrix shifted = k;
    for (std::size_t i = 0; i < k.rows(); ++i) shifted(i, i) += sigma;
    const Matrix fit = naive_mul(k, naive_mul(explicit_inverse(shifted), y));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::pow(y.data()[i] - fit.data()[i], 2);
    return s / static_cast<double>(y.rows());
}

std::shared_ptr<const KernelSourceModel> linear_source(const Matrix& x, const Matrix& y, double sigma) {
    return std::make_shared<const KernelSourceModel>(fit_source(FeatureMap::linear(x.cols()), Dataset(x, y), sigma));
}

}  // namespace

TEST(Thm1Test, IsotropicKernelGivesEquality) {
    const Matrix y{{1}, {1}};
    const Spectrum s = sym_eig(Matrix::identity(2));
    const BoundReport r = thm1_bounds(s, y, 1.0, 2, BoundMode::squared);
    EXPECT_NEAR(r.lambda_observed.at(0), 0.25, 1e-15);
    EXPECT_NEAR(r.lower, 0.25, 1e-15);
    EXPECT_NEAR(r.upper, 0.25, 1e-15);
    EXPECT_TRUE(r.holds());
    EXPECT_EQ(r.mode, BoundMode::squared);
}

TEST(Thm1Test, PrintedLowerBoundIsViolatedOnIsotropicInstance) {
    const BoundReport r = thm1_bounds(sym_eig(Matrix::identity(2)), Matrix{{1}, {1}}, 1.0, 2, BoundMode::as_printed);
    EXPECT_NEAR(r.lower, 0.5, 1e-15);
    EXPECT_NEAR(r.lambda_observed.at(0), 0.25, 1e-15);
    EXPECT_FALSE(r.satisfied_lower);
    EXPECT_TRUE(r.satisfied_upper);
    EXPECT_LT(r.slack_lower, 0.0);
}

TEST(Thm1Test, LargeRidgeLimit) {
    const Matrix k = random_psd(3, 5);
    const Matrix y = random_matrix(4, 5, 2);
    const double y2 = frob(y) * frob(y) / 5.0;
    const BoundReport r = thm1_bounds(sym_eig(k), y, 1e12, 5, BoundMode::squared);
    EXPECT_NEAR(r.lambda_observed[0], y2, 1e-9 * y2);
    EXPECT_NEAR(r.lower, y2, 1e-9 * y2);
    EXPECT_NEAR(r.upper, y2, 1e-9 * y2);
}

TEST(Thm1Test, RandomInstancesSandwichRisk) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 2 + rng() % 9;
        const std::size_t c = 1 + rng() % 3;
        const Matrix k = random_psd(rng(), n, 1 + rng() % n);
        const Matrix y = random_matrix(rng(), n, c);
        const double sigma = std::exp(std::uniform_real_distribution<double>(-4.0, 4.0)(rng));
        const Spectrum s = sym_eig(k);
        const BoundReport sq = thm1_bounds(s, y, sigma, n, BoundMode::squared);
        EXPECT_TRUE(sq.holds()) << t;
        EXPECT_NEAR(sq.lambda_observed[0], direct_risk(k, y, sigma), 1e-8 * std::max(1.0, sq.lambda_observed[0])) << t;
        const BoundReport printed = thm1_bounds(s, y, sigma, n, BoundMode::as_printed);
        EXPECT_TRUE(printed.satisfied_upper) << t;
        EXPECT_GE(printed.upper, sq.upper);
    }
}

TEST(Thm1Test, ConstantSpectrumIsTight) {
    for (double level : {0.1, 1.0, 7.5}) {
        Matrix k = Matrix::identity(4);
        k *= level;
        const BoundReport r = thm1_bounds(sym_eig(k), random_matrix(9, 4, 3), 0.7, 4, BoundMode::squared);
        EXPECT_NEAR(r.lower, r.upper, 1e-12);
        EXPECT_NEAR(r.lambda_observed[0], r.lower, 1e-12);
    }
}

TEST(Thm1Test, SquaredUpperNonIncreasingInSmallestEigenvalue) {
    const Matrix y = random_matrix(5, 3, 2);
    double prev = std::numeric_limits<double>::infinity();
    for (double lmin = 0.0; lmin <= 2.0; lmin += 0.25) {
        const double d[] = {3.0, 2.0, lmin};
        const double up = thm1_bounds(sym_eig(Matrix::diagonal(d)), y, 0.8, 3, BoundMode::squared).upper;
        EXPECT_LE(up, prev);
        prev = up;
    }
}

TEST(Thm1Test, RejectsNegativeSpectrumAndBadSigma) {
    const double d[] = {1.0, -0.5};
    EXPECT_THROW(thm1_bounds(sym_eig(Matrix::diagonal(d)), Matrix(2, 1), 1.0, 2, BoundMode::squared), Error);
    EXPECT_THROW(thm1_bounds(sym_eig(Matrix::identity(2)), Matrix(2, 1), 0.0, 2, BoundMode::squared), Error);
}

TEST(Prop1Test, Examples) {
    const double d[] = {3.0, 1.0};
    const BoundReport r = prop1_check(Matrix::diagonal(d), 2);
    EXPECT_EQ(r.lambda_observed.size(), 4u);
    const double expect[] = {3, 3, 1, 1};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.lambda_observed[i], expect[i], 1e-14);
    EXPECT_TRUE(r.holds());
    const Matrix k = random_psd(2, 4);
    const BoundReport one = prop1_check(k, 1);
    const Spectrum base = sym_eig(k);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(one.lambda_observed[i], base.eigenvalues[i], 1e-12);
}

TEST(Prop1Test, RandomPsdAllMultiplicities) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix k = random_psd(seed + 40, 5);
        for (std::size_t c = 1; c <= 3; ++c) {
            const BoundReport r = prop1_check(k, c);
            EXPECT_TRUE(r.holds()) << seed << " c=" << c;
            EXPECT_LE(*r.max_deviation, 1e-9 * std::max(1.0, r.upper));
        }
    }
    // Power traces of the 15x15 lift pin down its spectrum: tr(L^p) = sum lambda^p.
    const Matrix k = random_psd(77, 5);
    const Matrix lift = kron(k, Matrix::identity(3));
    const BoundReport r = prop1_check(k, 3);
    Matrix power = lift;
    for (int p = 1; p <= 4; ++p) {
        double tr = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < 15; ++i) tr += power(i, i);
        for (double l : r.lambda_observed) sum += std::pow(l, p);
        EXPECT_NEAR(sum, tr, 1e-10 * std::abs(tr)) << p;
        power = naive_mul(power, lift);
    }
}

TEST(ThetaSbTest, ZeroMappingIsZero) {
    const auto src = linear_source(random_matrix(1, 5, 3), random_matrix(2, 5, 2), 0.4);
    EXPECT_EQ(theta_S_b(*src, Matrix(3, 2)), Matrix(3, 3));
}

TEST(ThetaSbTest, IsotropicQuarterIdentity) {
    const auto src = linear_source(Matrix::identity(3), Matrix::identity(3), 1.0);
    EXPECT_LE(max_abs_diff(theta_S_b(*src, Matrix::identity(3)), [] {
                  Matrix q = Matrix::identity(3);
                  q *= 0.25;
                  return q;
              }()),
              1e-15);
}

TEST(ThetaSbTest, MatchesAlphaConjugation) {
    const auto src = linear_source(random_matrix(3, 7, 4), random_matrix(4, 7, 3), 0.6);
    const Matrix b = random_matrix(5, 2, 3);
    Matrix shifted = src->K_S;
    for (std::size_t i = 0; i < 7; ++i) shifted(i, i) += 0.6;
    const Matrix alpha = naive_mul(explicit_inverse(shifted), src->Y_S);
    const Matrix inner = naive_mul(naive_transpose(alpha), naive_mul(src->K_S, alpha));
    const Matrix oracle = naive_mul(b, naive_mul(inner, naive_transpose(b)));
    const Matrix got = theta_S_b(*src, b);
    EXPECT_LE(max_abs_diff(got, oracle), 1e-10 * std::max(1.0, frob(oracle)));
    EXPECT_EQ(got, got.transpose());
    EXPECT_TRUE(psd_check(got, 1e-10).is_psd);
}

TEST(Thm2Test, ZeroMappingCollapsesEverything) {
    VerificationOptions opts;
    opts.zero_mapping = true;
    const VerificationInstance inst = make_verification_instance(2, opts);
    const BoundReport r = thm2_bounds(inst.model, inst.target);
    for (double l : r.lambda_observed) EXPECT_NEAR(l, 0.0, 1e-14);
    EXPECT_EQ(r.lower, 0.0);
    EXPECT_EQ(r.upper, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(Thm2Test, VpWithFullEmbeddingHasNoTrainableDirections) {
    const auto src = linear_source(random_matrix(6, 6, 4), random_matrix(7, 6, 2), 0.5);
    const ReprogrammedModel m{InputTransform::vp(4, {2, 0, 3, 1}, Vector{1, 2, 3, 4}), true, src,
                              OutputMapping{random_matrix(8, 2, 2), true}};
    const Dataset target(random_matrix(9, 5, 4), random_matrix(10, 5, 2));
    const BoundReport r = thm2_bounds(m, target);
    EXPECT_EQ(r.upper, 0.0);
    for (double l : r.lambda_observed) EXPECT_EQ(l, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(Thm2Test, RandomInstancesSandwich) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const VerificationInstance inst = make_verification_instance(seed);
        const BoundReport r = thm2_bounds(inst.model, inst.target);
        EXPECT_TRUE(r.holds()) << seed << " " << inst.variant << " slack " << r.slack_lower << " " << r.slack_upper;
        EXPECT_LE(r.lower, r.upper);
    }
}

TEST(Thm2Test, UpperMatchesIndependentFactors) {
    // fc/linear: dPhi = I so the middle factor is 1 and theta_A = theta_S^b (x) (x_i . x_j) blocks.
    const VerificationInstance inst = make_verification_instance(0);
    ASSERT_EQ(inst.variant, "fc/linear");
    const BoundReport r = thm2_bounds(inst.model, inst.target);
    const Matrix& w = inst.model.transform.as_fc().W;
    // Theta_A block (i, j) = (x_i . x_j) I, so its top eigenvalue is that of the input Gram.
    const double ga = sym_eig(naive_mul(inst.target.X, naive_transpose(inst.target.X))).max();
    const double sb = sym_eig(theta_S_b(*inst.model.source, inst.model.mapping.b)).max();
    EXPECT_EQ(w.rows(), inst.model.source->input_dim());
    EXPECT_NEAR(r.upper, sb * ga, 1e-10 * std::max(1.0, r.upper));
}

TEST(Thm3Test, ZeroSourceLabels) {
    const auto src = linear_source(random_matrix(1, 6, 3), Matrix(6, 2), 0.5);
    const ReprogrammedModel m{InputTransform::fc(random_matrix(2, 3, 2)), true, src,
                              OutputMapping{random_matrix(3, 2, 2), true}};
    const BoundReport r = thm3_bounds(m, Dataset(random_matrix(4, 4, 2), random_matrix(5, 4, 2)));
    for (double l : r.lambda_observed) EXPECT_EQ(l, 0.0);
    EXPECT_EQ(r.lower, 0.0);
    EXPECT_EQ(r.upper, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(Thm3Test, IsotropicInstanceCollapsesToQuarter) {
    const VerificationInstance inst = make_isotropic_instance(3);
    const BoundReport r = thm3_bounds(inst.model, inst.target);
    for (double l : r.lambda_observed) EXPECT_NEAR(l, 0.25, 1e-14);
    EXPECT_NEAR(r.lower, 0.25, 1e-14);
    EXPECT_NEAR(r.upper, 0.25, 1e-14);
    EXPECT_FALSE(r.one_sided);
    EXPECT_TRUE(r.holds());
}

TEST(Thm3Test, RandomInstancesWithFewerTargetPoints) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const VerificationInstance inst = make_verification_instance(seed);
        ASSERT_LE(inst.target.size(), inst.model.source->size());
        const BoundReport r = thm3_bounds(inst.model, inst.target);
        EXPECT_TRUE(r.holds()) << seed << " " << inst.variant;
    }
}

TEST(Thm3Test, MoreTargetThanSourcePointsIsOneSided) {
    VerificationOptions opts;
    opts.target_samples = 9;
    opts.source_samples = 4;
    const VerificationInstance inst = make_verification_instance(1, opts);
    const BoundReport r = thm3_bounds(inst.model, inst.target);
    EXPECT_TRUE(r.one_sided);
    EXPECT_EQ(r.lower, 0.0);
    EXPECT_TRUE(r.holds());
    EXPECT_FALSE(r.note.empty());
}

TEST(EstimateCATest, LinearFullRankIsPositive) {
    const auto src = linear_source(random_matrix(1, 5, 3), random_matrix(2, 5, 2), 0.5);
    const ReprogrammedModel m{InputTransform::fc(random_matrix(3, 3, 2)), true, src, OutputMapping{Matrix::identity(2), true}};
    const Dataset target(random_matrix(4, 4, 2), random_matrix(5, 4, 2));
    // dPhi = I, so c_A = 1 / (lmax(K_S) + ridge).
    const double expect = 1.0 / (eigenvalues(src->K_S).front() + 0.5);
    EXPECT_NEAR(estimate_cA(m, target), expect, 1e-9 * expect);
}

TEST(EstimateCATest, WideFeatureJacobianIsRankDeficient) {
    const NetworkSpec s = NetworkSpec::dense_family(3, 8, 1, 2, Activation::tanh, 1.0, 4);
    const auto src = std::make_shared<const KernelSourceModel>(
        fit_source(FeatureMap::net_features(s, init_network(s)), Dataset(random_matrix(1, 5, 3), random_matrix(2, 5, 2)), 0.5));
    const ReprogrammedModel m{InputTransform::fc(random_matrix(3, 3, 2)), true, src, OutputMapping{Matrix::identity(2), true}};
    EXPECT_EQ(estimate_cA(m, Dataset(random_matrix(4, 4, 2), random_matrix(5, 4, 2))), 0.0);
}

TEST(EstimateCATest, InvariantUnderFeatureScalingWithMatchedRidge) {
    // Scaling Phi by 2 multiplies dPhi dPhi^T and K_S by 4; the ridge has to scale
    // with them for the ratio to be unchanged.
    const NetworkSpec s = NetworkSpec::dense_family(4, 3, 1, 2, Activation::tanh, 1.0, 6);
    const FeatureMap phi = FeatureMap::net_features(s, init_network(s));
    const Dataset d(random_matrix(1, 6, 4), random_matrix(2, 6, 2));
    auto make = [&](const FeatureMap& f, double sigma) {
        return ReprogrammedModel{InputTransform::fc(random_matrix(3, 4, 3)), true,
                                 std::make_shared<const KernelSourceModel>(fit_source(f, d, sigma)),
                                 OutputMapping{Matrix::identity(2), true}};
    };
    const Dataset target(random_matrix(4, 5, 3), random_matrix(5, 5, 2));
    const double base = estimate_cA(make(phi, 0.3), target);
    ASSERT_GT(base, 0.0);
    EXPECT_NEAR(estimate_cA(make(phi.scaled(2.0), 1.2), target), base, 1e-12 * base);
    EXPECT_LT(estimate_cA(make(phi.scaled(2.0), 0.3), target), base * 4.0 + 1e-15);
}

TEST(EstimateCBTest, IdentityCrossKernel) {
    const VerificationInstance inst = make_isotropic_instance(4);
    EXPECT_NEAR(estimate_cB(inst.model, inst.target), 1.0, 1e-14);
}

TEST(EstimateCBTest, OrthogonalTargetImagesGiveZero) {
    const Matrix xs{{1, 0, 0, 0}, {0, 1, 0, 0}};
    const auto src = linear_source(xs, Matrix::identity(2), 1.0);
    Matrix w(4, 2);
    w(2, 0) = 1.0;
    w(3, 1) = 1.0;
    const ReprogrammedModel m{InputTransform::fc(w), true, src, OutputMapping{Matrix::identity(2), true}};
    EXPECT_EQ(estimate_cB(m, Dataset(random_matrix(3, 2, 2), random_matrix(4, 2, 2))), 0.0);
}

TEST(EstimateCBTest, MatchesTwoStepOracle) {
    for (std::uint64_t seed : {0u, 3u, 5u, 6u}) {
        const VerificationInstance inst = make_verification_instance(seed);
        const KernelSourceModel& s = *inst.model.source;
        const Matrix cross = kernel_matrix(s.feature_map, inst.model.transform.apply_rows(inst.target.X), s.X_S);
        const double num = std::max(0.0, eigenvalues(naive_mul(cross, naive_transpose(cross))).back());
        const double kmax = eigenvalues(s.K_S).front();
        const double expect = num / (kmax * kmax);
        EXPECT_NEAR(estimate_cB(inst.model, inst.target), expect, 1e-7 * std::max(1e-6, expect)) << seed;
    }
}

TEST(CorollaryTest, ZeroConstantsAndZeroMapping) {
    const VerificationInstance inst = make_verification_instance(4);
    EXPECT_EQ(cor1_lower(inst.model, inst.target, 0.0), 0.0);
    EXPECT_EQ(cor2_lower(inst.model, inst.target, 0.0), 0.0);
    VerificationOptions opts;
    opts.zero_mapping = true;
    const VerificationInstance zero = make_verification_instance(4, opts);
    EXPECT_EQ(cor1_lower(zero.model, zero.target, 1.0), 0.0);
}

TEST(CorollaryTest, PinnedSeedFourLowerBoundHolds) {
    const VerificationInstance inst = make_verification_instance(4);
    const BoundReport r = cor1_report(inst.model, inst.target);
    EXPECT_TRUE(r.holds());
    EXPECT_LE(r.lower, *std::min_element(r.lambda_observed.begin(), r.lambda_observed.end()) * (1 + 1e-9) + 1e-12);
    EXPECT_TRUE(cor2_report(inst.model, inst.target).holds());
}

TEST(CorollaryTest, IsotropicCor2EqualsQuarter) {
    const VerificationInstance inst = make_isotropic_instance(3);
    const double c_B = estimate_cB(inst.model, inst.target);
    EXPECT_NEAR(cor2_lower(inst.model, inst.target, c_B), 0.25, 1e-12);
    const BoundReport r = cor2_report(inst.model, inst.target);
    EXPECT_NEAR(r.lower, r.lambda_observed.back(), 1e-12);
    EXPECT_TRUE(r.holds());
}

TEST(CorollaryTest, MoreSourcePointsThanClassesDegenerates) {
    const auto src = linear_source(random_matrix(1, 5, 3), random_matrix(2, 5, 2), 0.5);
    const ReprogrammedModel m{InputTransform::fc(random_matrix(3, 3, 2)), true, src, OutputMapping{Matrix::identity(2), true}};
    EXPECT_EQ(cor2_lower(m, Dataset(random_matrix(4, 3, 2), random_matrix(5, 3, 2)), 1.0), 0.0);
}

TEST(CorollaryTest, HonoredWheneverEstimatorsArePositive) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const VerificationInstance inst = make_verification_instance(seed);
        EXPECT_TRUE(cor1_report(inst.model, inst.target).holds()) << seed;
        EXPECT_TRUE(cor2_report(inst.model, inst.target).holds()) << seed;
    }
}

TEST(CombinedTest, FrozenMappingReducesToThetaA) {
    VerificationInstance inst = make_verification_instance(3);
    inst.model.mapping.trainable = false;
    const BoundReport r = combined_bounds(inst.model, inst.target);
    const Spectrum a = sym_eig(ntk_A(inst.model, inst.target.X));
    EXPECT_NEAR(r.lower, a.min(), 1e-12 * std::max(1.0, a.max()));
    EXPECT_NEAR(r.upper, a.max(), 1e-12 * std::max(1.0, a.max()));
    EXPECT_TRUE(r.holds());
}

TEST(CombinedTest, FrozenTransformReducesToThetaB) {
    VerificationInstance inst = make_verification_instance(6);
    inst.model.transform_trainable = false;
    const BoundReport r = combined_bounds(inst.model, inst.target);
    const Spectrum b = sym_eig(ntk_B(inst.model, inst.target.X).block);
    EXPECT_NEAR(r.lower, b.min(), 1e-12 * std::max(1.0, b.max()));
    EXPECT_NEAR(r.upper, b.max(), 1e-12 * std::max(1.0, b.max()));
    EXPECT_TRUE(r.holds());
}

TEST(CombinedTest, RandomBothTrainable) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const VerificationInstance inst = make_verification_instance(seed + 100);
        EXPECT_TRUE(combined_bounds(inst.model, inst.target).holds()) << seed;
    }
}

TEST(GapBoundTest, HandInstance) {
    GapBoundInputs in;
    in.rho = in.B = in.T = in.L_D = in.Gamma_D = 1.0;
    in.N_T = 4;
    in.ntk_abs_sum = 8.0;
    in.delta = 2.0 * std::exp(-2.0);
    EXPECT_NEAR(gap_bound(in), 5.5, 1e-12);
}

TEST(GapBoundTest, ZeroTerms) {
    GapBoundInputs in;
    in.rho = in.B = in.T = in.Gamma_D = 1.0;
    in.N_T = 10;
    EXPECT_EQ(gap_bound(in), 0.0);
}

TEST(GapBoundTest, ScalingInSampleCount) {
    GapBoundInputs kernel;
    kernel.rho = 0.7;
    kernel.B = 2.0;
    kernel.T = 3.0;
    kernel.ntk_abs_sum = 5.0;
    kernel.N_T = 6;
    GapBoundInputs conc;
    conc.L_D = 1.3;
    conc.Gamma_D = 0.4;
    conc.N_T = 6;
    const double k1 = gap_bound(kernel), c1 = gap_bound(conc);
    kernel.N_T = conc.N_T = 12;
    EXPECT_NEAR(gap_bound(kernel), k1 / 2.0, 1e-14);
    EXPECT_NEAR(gap_bound(conc), c1 / std::sqrt(2.0), 1e-14);
}

TEST(GapBoundTest, RejectsInvalidInputs) {
    GapBoundInputs in;
    in.delta = 1.0;
    EXPECT_THROW(gap_bound(in), Error);
    in.delta = 0.1;
    in.rho = -1.0;
    EXPECT_THROW(gap_bound(in), Error);
    in.rho = 0.0;
    in.N_T = 0;
    EXPECT_THROW(gap_bound(in), Error);
}

TEST(GapConstantsTest, SinglePointHasZeroDiameter) {
    const VerificationInstance inst = make_verification_instance(0);
    const std::size_t row[] = {0};
    const GapBoundInputs in = estimate_gap_constants(inst.target.subset(row), inst.model, 2.0, 3.0);
    EXPECT_EQ(in.Gamma_D, 0.0);
    EXPECT_EQ(in.T, 2.0);
    EXPECT_EQ(in.B, 3.0);
    EXPECT_EQ(in.N_T, 1u);
}

TEST(GapConstantsTest, PerfectFitHasZeroRho) {
    VerificationInstance inst = make_isotropic_instance(3);
    Matrix half = Matrix::identity(3);
    half *= 0.5;  // f_T(e_i) = e_i / 2 on the isotropic instance
    const GapBoundInputs in = estimate_gap_constants(Dataset(inst.target.X, half), inst.model, 1.0, 1.0);
    EXPECT_NEAR(in.rho, 0.0, 1e-15);
}

TEST(GapConstantsTest, MatchesLoopOracle) {
    // fc/linear: f_T(x) = M x with M = b readout W, so the loss gradient is closed form.
    const VerificationInstance inst = make_verification_instance(0);
    ASSERT_EQ(inst.variant, "fc/linear");
    const ReprogrammedModel& m = inst.model;
    const Dataset& d = inst.target;
    const Matrix mm = naive_mul(m.mapping.b, naive_mul(m.source->readout, m.transform.as_fc().W));
    double gamma = 0.0, rho = 0.0, lip = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d.input_dim(); ++k) s += std::pow(d.X(i, k) - d.X(j, k), 2);
            for (std::size_t k = 0; k < d.label_dim(); ++k) s += std::pow(d.Y(i, k) - d.Y(j, k), 2);
            gamma = std::max(gamma, std::sqrt(s));
        }
        Vector r(d.label_dim());
        double rn = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            for (std::size_t l = 0; l < d.input_dim(); ++l) r[k] += mm(k, l) * d.X(i, l);
            r[k] -= d.Y(i, k);
            rn += r[k] * r[k];
        }
        rho = std::max(rho, 2.0 * std::sqrt(rn));
        double g2 = 4.0 * rn;  // d/dy
        for (std::size_t l = 0; l < d.input_dim(); ++l) {
            double gx = 0.0;
            for (std::size_t k = 0; k < r.size(); ++k) gx += 2.0 * mm(k, l) * r[k];
            g2 += gx * gx;
        }
        lip = std::max(lip, std::sqrt(g2));
    }
    const GapBoundInputs in = estimate_gap_constants(d, m, 1.0, 1.0);
    EXPECT_NEAR(in.Gamma_D, gamma, 1e-12 * gamma);
    EXPECT_NEAR(in.rho, rho, 1e-10 * rho);
    EXPECT_NEAR(in.L_D, lip, 1e-6 * lip);

    // Scalar NTK through explicit Jacobian products.
    const std::size_t c = m.label_dim();
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) {
            const Matrix ji = trainable_jacobian(m, d.X.row(i));
            const Matrix jj = trainable_jacobian(m, d.X.row(j));
            const Matrix blk = naive_mul(ji, naive_transpose(jj));
            double tr = 0.0;
            for (std::size_t k = 0; k < c; ++k) tr += blk(k, k);
            abs_sum += std::abs(tr / static_cast<double>(c));
        }
    EXPECT_NEAR(in.ntk_abs_sum, abs_sum, 1e-10 * abs_sum);
}

TEST(BoundReportTest, JsonCarriesContractFields) {
    const BoundReport r = thm1_bounds(sym_eig(Matrix::identity(2)), Matrix{{1}, {1}}, 1.0, 2, BoundMode::as_printed);
    const nlohmann::json j = to_json(r);
    for (const char* key : {"name", "mode", "lambda_observed", "lower", "upper", "satisfied_lower", "satisfied_upper",
                            "slack_lower", "slack_upper"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["mode"], "as_printed");
    EXPECT_EQ(j["satisfied_lower"], false);
    EXPECT_DOUBLE_EQ(j["lower"].get<double>(), 0.5);
}

TEST(BoundReportTest, SatisfiedFlagsUseRelativeTolerance) {
    BoundReport r;
    r.lambda_observed = {1.0, 2.0};
    r.lower = 1.0 + 5e-10;
    r.upper = 2.0 - 1e-9;
    evaluate_sandwich(r, 1e-9);
    EXPECT_TRUE(r.satisfied_lower);
    EXPECT_TRUE(r.satisfied_upper);
    r.lower = 1.0 + 1e-8;
    evaluate_sandwich(r, 1e-9);
    EXPECT_FALSE(r.satisfied_lower);
    EXPECT_LT(r.slack_lower, 0.0);
}
