#include "ntklab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ntklab {

namespace {

// Runs body(i) for i in [0, n) on up to `jobs` threads. Each index writes its own slot.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Matrix gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = normal(rng);
    return m;
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

Dataset make_synthetic_task(std::uint64_t seed, std::size_t n_samples, std::size_t dim, std::size_t n_classes,
                            double class_separation) {
    if (n_classes == 0 || n_classes > n_samples) throw Error(ErrorCode::InvalidArgument, "need 1 <= n_classes <= n_samples");
    if (dim < n_classes) throw Error(ErrorCode::InvalidArgument, "need dim >= n_classes for orthogonal centres");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix x(n_samples, dim);
    Matrix y(n_samples, n_classes);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const std::size_t k = i % n_classes;
        for (std::size_t j = 0; j < dim; ++j) x(i, j) = normal(rng) + (j == k ? class_separation : 0.0);
        y(i, k) = 1.0;
    }
    return Dataset(std::move(x), std::move(y), "synthetic-" + std::to_string(seed));
}

Split train_test_split(const Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error(ErrorCode::InvalidArgument, "train fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    // Fisher-Yates with an explicit draw so the permutation is library-independent.
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(d.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, d.size() - 1);
    std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    return {d.subset(tr), d.subset(te)};
}

double argmax_accuracy(const Matrix& predictions, const Matrix& one_hot) {
    if (predictions.rows() != one_hot.rows() || predictions.cols() != one_hot.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "prediction and label shapes differ");
    }
    if (predictions.rows() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.rows(); ++i) {
        auto p = predictions.row(i);
        auto y = one_hot.row(i);
        const auto pi = std::max_element(p.begin(), p.end()) - p.begin();
        const auto yi = std::max_element(y.begin(), y.end()) - y.begin();
        hits += pi == yi;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.rows());
}

double mean_squared_error(const Matrix& predictions, const Matrix& targets) {
    const double f = (predictions - targets).frobenius_norm();
    return f * f / static_cast<double>(predictions.rows());
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw Error(ErrorCode::InvalidArgument, "spearman needs two equal series of length >= 2");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::string to_string(TransformKind k) { return k == TransformKind::fc ? "fc" : "vp"; }

TransformKind parse_transform_kind(const std::string& name) {
    if (name == "fc") return TransformKind::fc;
    if (name == "vp") return TransformKind::vp;
    throw Error(ErrorCode::InvalidArgument, "unknown transform kind '" + name + "'");
}

void SweepConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    if (depths.empty()) fail("depths must be non-empty");
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (depths[i] == 0) fail("depths must be >= 1");
        if (i > 0 && depths[i] <= depths[i - 1]) fail("depths must be strictly ascending");
    }
    if (hidden_width == 0) fail("hidden_width must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (!(sigma_S > 0.0)) fail("sigma_S must be > 0");
    if (replicates == 0) fail("replicates must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
    if (source_classes > source_dim) fail("source_classes must not exceed source_dim");
    if (target_classes > target_dim) fail("target_classes must not exceed target_dim");
    if (source_classes > source_samples || target_classes > target_samples) fail("more classes than samples");
    if (transform_kind == TransformKind::vp && target_dim > source_dim) fail("vp transform needs target_dim <= source_dim");
    if (jobs == 0) fail("jobs must be >= 1");
}

SweepCell build_sweep_cell(const SweepConfig& cfg, std::size_t depth, std::size_t replicate) {
    const std::uint64_t r = replicate;
    const Dataset source = make_synthetic_task(cfg.source_seed + 7919 * r, cfg.source_samples, cfg.source_dim,
                                               cfg.source_classes, cfg.source_separation);
    const Dataset target = make_synthetic_task(cfg.target_seed + 7919 * r, cfg.target_samples, cfg.target_dim,
                                               cfg.target_classes, cfg.target_separation);
    SweepCell cell;
    cell.source_split = train_test_split(source, cfg.train_fraction, cfg.source_seed + 104729 * (r + 1));
    cell.target_split = train_test_split(target, cfg.train_fraction, cfg.target_seed + 104729 * (r + 1));

    FeatureMap phi = FeatureMap::linear(cfg.source_dim);
    if (cfg.feature_kind != FeatureKind::linear) {
        const NetworkSpec spec = NetworkSpec::dense_family(cfg.source_dim, cfg.hidden_width, depth, cfg.source_classes,
                                                           cfg.activation, cfg.init_scale, cfg.net_seed + r);
        NetworkParams params = init_network(spec);
        phi = cfg.feature_kind == FeatureKind::net_features ? FeatureMap::net_features(spec, std::move(params))
                                                            : FeatureMap::ntk_features(spec, std::move(params));
    }
    cell.source = std::make_shared<const KernelSourceModel>(
        fit_source(phi, cell.source_split.train, cfg.sigma_S, cfg.ridge_scaling));

    InputTransform transform = InputTransform::fc(Matrix(cfg.source_dim, cfg.target_dim));
    if (cfg.transform_kind == TransformKind::fc) {
        Matrix w(cfg.source_dim, cfg.target_dim);
        for (std::size_t i = 0; i < std::min(cfg.source_dim, cfg.target_dim); ++i) w(i, i) = 1.0;
        transform = InputTransform::fc(std::move(w));
    } else {
        std::vector<std::size_t> slots(cfg.target_dim);
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        transform = InputTransform::vp(cfg.source_dim, std::move(slots), Vector(cfg.source_dim, 0.0));
    }
    cell.model = ReprogrammedModel{std::move(transform), cfg.train_transform, cell.source,
                                   OutputMapping{default_output_mapping(cfg.target_classes, cfg.source_classes,
                                                                        cfg.train_mapping),
                                                 cfg.train_mapping}};
    return cell;
}

DiagnosticPoint diagnostic_point(const ReprogrammedModel& m, const Matrix& X_T) {
    m.validate();
    if (X_T.rows() > m.source->size()) {
        throw Error(ErrorCode::InvalidArgument, "assumption diagnostic needs N_T <= N_S");
    }
    EigOptions opts;
    opts.vectors = false;
    DiagnosticPoint p;
    p.x = std::max(0.0, sym_eig(m.source->K_S, opts).max());
    p.y = std::sqrt(std::max(0.0, sym_eig(cross_kernel_product(m, X_T), opts).min()));
    p.c_B = p.x > 0.0 ? (p.y * p.y) / (p.x * p.x) : 0.0;
    return p;
}

ReplicateRecord run_sweep_cell(const SweepConfig& cfg, std::size_t depth, std::size_t replicate) {
    ReplicateRecord rec;
    rec.depth = depth;
    rec.replicate = replicate;
    try {
        SweepCell cell = build_sweep_cell(cfg, depth, replicate);
        const KernelSourceModel& src = *cell.source;
        EigOptions opts;
        opts.vectors = false;
        const Spectrum ks = sym_eig(src.K_S, opts);
        rec.lambda_min_KS = ks.min();
        rec.lambda_max_KS = ks.max();

        const Matrix source_pred = predict(src, cell.source_split.test.X);
        rec.source_loss = mean_squared_error(source_pred, cell.source_split.test.Y);
        rec.source_acc = argmax_accuracy(source_pred, cell.source_split.test.Y);

        const Dataset& test = cell.target_split.test;
        rec.initial_target_loss = mean_squared_error(target_forward_rows(cell.model, test.X), test.Y);
        ReprogrammedModel trained = cell.model;
        if (cfg.steps > 0) {
            TrainResult tr = train_reprogram(cell.model, cell.target_split.train, cfg.lr, cfg.steps);
            if (tr.aborted_non_finite) throw Error(ErrorCode::NonFiniteLoss, "reprogramming loss became non-finite");
            trained = std::move(tr.model);
        }
        const Matrix target_pred = target_forward_rows(trained, test.X);
        rec.target_loss = mean_squared_error(target_pred, test.Y);
        rec.target_acc = argmax_accuracy(target_pred, test.Y);

        if (cell.target_split.train.size() <= src.size()) {
            const DiagnosticPoint p = diagnostic_point(trained, cell.target_split.train.X);
            rec.c_B_estimate = p.c_B;
            rec.cross_kernel_sqrt_min = p.y;
        } else {
            rec.c_B_estimate = std::nan("");
            rec.cross_kernel_sqrt_min = std::nan("");
        }
    } catch (const Error& e) {
        rec.error = e.what();
    }
    return rec;
}

SweepResult run_depth_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const std::size_t per_depth = cfg.replicates;
    const std::size_t cells = cfg.depths.size() * per_depth;
    std::vector<ReplicateRecord> reps(cells);
    parallel_for(cells, cfg.jobs, [&](std::size_t i) {
        reps[i] = run_sweep_cell(cfg, cfg.depths[i / per_depth], i % per_depth);
    });

    SweepResult result;
    for (std::size_t d = 0; d < cfg.depths.size(); ++d) {
        SweepRecord rec;
        rec.depth = cfg.depths[d];
        std::vector<const ReplicateRecord*> ok;
        for (std::size_t r = 0; r < per_depth; ++r) {
            const ReplicateRecord& rr = reps[d * per_depth + r];
            if (rr.error) {
                if (!rec.error) rec.error = "replicate " + std::to_string(r) + ": " + *rr.error;
            } else {
                ok.push_back(&rr);
            }
        }
        auto mean = [&](double ReplicateRecord::*field) {
            double s = 0.0;
            for (const auto* rr : ok) s += rr->*field;
            return ok.empty() ? std::nan("") : s / static_cast<double>(ok.size());
        };
        auto stddev = [&](double ReplicateRecord::*field) {
            if (ok.size() < 2) return 0.0;
            const double m = mean(field);
            double s = 0.0;
            for (const auto* rr : ok) s += (rr->*field - m) * (rr->*field - m);
            return std::sqrt(s / static_cast<double>(ok.size() - 1));
        };
        rec.lambda_min_KS = mean(&ReplicateRecord::lambda_min_KS);
        rec.lambda_max_KS = mean(&ReplicateRecord::lambda_max_KS);
        rec.source_loss = mean(&ReplicateRecord::source_loss);
        rec.source_acc = mean(&ReplicateRecord::source_acc);
        rec.target_loss = mean(&ReplicateRecord::target_loss);
        rec.target_acc = mean(&ReplicateRecord::target_acc);
        rec.c_B_estimate = mean(&ReplicateRecord::c_B_estimate);
        rec.cross_kernel_sqrt_min = mean(&ReplicateRecord::cross_kernel_sqrt_min);
        rec.std_source_loss = stddev(&ReplicateRecord::source_loss);
        rec.std_target_loss = stddev(&ReplicateRecord::target_loss);
        rec.std_source_acc = stddev(&ReplicateRecord::source_acc);
        rec.std_target_acc = stddev(&ReplicateRecord::target_acc);
        if (!ok.empty()) rec.error.reset();
        result.records.push_back(rec);

        const ReplicateRecord& first = reps[d * per_depth];
        if (!first.error && std::isfinite(first.cross_kernel_sqrt_min)) {
            result.diagnostic.push_back(
                {first.depth, first.lambda_max_KS, first.cross_kernel_sqrt_min, first.c_B_estimate});
        }
    }
    result.replicates = std::move(reps);
    return result;
}

std::vector<DiagnosticPoint> assumption_diagnostic(const SweepConfig& cfg) {
    const std::size_t n_train_target = static_cast<std::size_t>(
        std::llround(cfg.train_fraction * static_cast<double>(cfg.target_samples)));
    const std::size_t n_train_source = static_cast<std::size_t>(
        std::llround(cfg.train_fraction * static_cast<double>(cfg.source_samples)));
    if (n_train_target > n_train_source) throw Error(ErrorCode::ConfigError, "assumption diagnostic needs N_T <= N_S");
    return run_depth_sweep(cfg).diagnostic;
}

std::string sweep_csv(const std::vector<SweepRecord>& records) {
    std::ostringstream out;
    out << kSweepCsvHeader << '\n';
    for (const SweepRecord& r : records) {
        out << r.depth << ',' << fmt(r.lambda_min_KS) << ',' << fmt(r.lambda_max_KS) << ',' << fmt(r.source_loss)
            << ',' << fmt(r.source_acc) << ',' << fmt(r.target_loss) << ',' << fmt(r.target_acc) << ','
            << fmt(r.c_B_estimate) << ',' << fmt(r.cross_kernel_sqrt_min) << '\n';
    }
    return out.str();
}

std::vector<SweepRecord> parse_sweep_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kSweepCsvHeader) throw Error(ErrorCode::IoError, "sweep.csv header mismatch");
    std::vector<SweepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9) throw Error(ErrorCode::IoError, "sweep.csv row has " + std::to_string(cells.size()) + " fields");
        SweepRecord r;
        try {
            r.depth = std::stoul(cells[0]);
            double* fields[] = {&r.lambda_min_KS, &r.lambda_max_KS, &r.source_loss, &r.source_acc,
                                &r.target_loss,   &r.target_acc,    &r.c_B_estimate, &r.cross_kernel_sqrt_min};
            for (std::size_t k = 0; k < 8; ++k) *fields[k] = std::stod(cells[k + 1]);
        } catch (const std::exception&) {
            throw Error(ErrorCode::IoError, "unparseable sweep.csv row '" + line + "'");
        }
        out.push_back(r);
    }
    return out;
}

void write_reports(const SweepResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string() + ": " + ec.message());
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::IoError, "cannot open " + (dir / name).string() + " for writing");
        f << body;
        if (!f) throw Error(ErrorCode::IoError, "write to " + (dir / name).string() + " failed");
    };

    write("sweep.csv", sweep_csv(result.records));

    nlohmann::json arr = nlohmann::json::array();
    for (const SweepRecord& r : result.records) {
        nlohmann::json j;
        j["depth"] = r.depth;
        j["lambda_min_KS"] = r.lambda_min_KS;
        j["lambda_max_KS"] = r.lambda_max_KS;
        j["source_loss"] = r.source_loss;
        j["source_acc"] = r.source_acc;
        j["target_loss"] = r.target_loss;
        j["target_acc"] = r.target_acc;
        j["c_B_estimate"] = r.c_B_estimate;
        j["cross_kernel_sqrt_min"] = r.cross_kernel_sqrt_min;
        if (r.error) j["error"] = *r.error;
        arr.push_back(std::move(j));
    }
    write("sweep.json", arr.dump(2) + "\n");

    std::ostringstream diag;
    diag << "x,y\n";
    for (const DiagnosticPoint& p : result.diagnostic) diag << fmt(p.x) << ',' << fmt(p.y) << '\n';
    write("diagnostic.csv", diag.str());

    std::ostringstream reps;
    reps << "depth,replicate,lambda_min_KS,lambda_max_KS,source_loss,source_acc,target_loss,target_acc,"
            "c_B_estimate,cross_kernel_sqrt_min,initial_target_loss,error\n";
    for (const ReplicateRecord& r : result.replicates) {
        reps << r.depth << ',' << r.replicate << ',' << fmt(r.lambda_min_KS) << ',' << fmt(r.lambda_max_KS) << ','
             << fmt(r.source_loss) << ',' << fmt(r.source_acc) << ',' << fmt(r.target_loss) << ','
             << fmt(r.target_acc) << ',' << fmt(r.c_B_estimate) << ',' << fmt(r.cross_kernel_sqrt_min) << ','
             << fmt(r.initial_target_loss) << ',' << (r.error ? "error" : "") << '\n';
    }
    write("sweep_replicates.csv", reps.str());
}

// ---- randomized verification ------------------------------------------------

VerificationInstance make_verification_instance(std::uint64_t seed, const VerificationOptions& opts) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ (seed * 0x2545f4914f6cdd1dULL));
    const bool use_vp = (seed % 2) == 1;
    const bool use_net = ((seed / 2) % 2) == 1;

    const std::size_t d_S = uniform_int(rng, 2, opts.max_source_dim);
    const std::size_t d_T = use_vp ? uniform_int(rng, 1, d_S - 1) : uniform_int(rng, 1, d_S);
    std::size_t n_T = uniform_int(rng, 2, opts.max_target_samples);
    std::size_t n_S = uniform_int(rng, n_T, opts.max_source_samples);
    if (opts.target_samples) n_T = opts.target_samples;
    if (opts.source_samples) n_S = opts.source_samples;
    const std::size_t c_S = uniform_int(rng, 1, 4);
    const std::size_t c_T = uniform_int(rng, 1, c_S);
    const double sigma = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(2.0))(rng));

    FeatureMap phi = FeatureMap::linear(d_S);
    if (use_net) {
        const std::size_t width = uniform_int(rng, 2, 8);
        const std::size_t depth = uniform_int(rng, 1, 2);
        const NetworkSpec spec = NetworkSpec::dense_family(d_S, width, depth, c_S, Activation::tanh, 1.0, rng());
        phi = FeatureMap::net_features(spec, init_network(spec));
    }
    const Dataset source(gaussian_matrix(rng, n_S, d_S), gaussian_matrix(rng, n_S, c_S), "verify-source");
    Matrix b = opts.zero_mapping ? Matrix(c_T, c_S) : gaussian_matrix(rng, c_T, c_S);
    auto src = std::make_shared<const KernelSourceModel>(fit_source(phi, source, sigma));

    InputTransform t = InputTransform::fc(gaussian_matrix(rng, d_S, d_T, 1.0 / std::sqrt(static_cast<double>(d_T))));
    if (use_vp) {
        std::vector<std::size_t> slots(d_S);
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        std::shuffle(slots.begin(), slots.end(), rng);
        slots.resize(d_T);
        const Matrix theta = gaussian_matrix(rng, 1, d_S);
        t = InputTransform::vp(d_S, std::move(slots), Vector(theta.data().begin(), theta.data().end()));
    }
    VerificationInstance inst;
    inst.model = ReprogrammedModel{std::move(t), true, src, OutputMapping{std::move(b), true}};
    inst.target = Dataset(gaussian_matrix(rng, n_T, d_T), gaussian_matrix(rng, n_T, c_T), "verify-target");
    inst.variant = std::string(use_vp ? "vp" : "fc") + "/" + (use_net ? "net" : "linear");
    return inst;
}

VerificationInstance make_isotropic_instance(std::size_t n) {
    const Dataset source(Matrix::identity(n), Matrix::identity(n), "isotropic-source");
    auto src = std::make_shared<const KernelSourceModel>(fit_source(FeatureMap::linear(n), source, 1.0));
    VerificationInstance inst;
    inst.model = ReprogrammedModel{InputTransform::fc(Matrix::identity(n)), true, src,
                                   OutputMapping{Matrix::identity(n), true}};
    inst.target = Dataset(Matrix::identity(n), Matrix::identity(n), "isotropic-target");
    inst.variant = "fc/linear/isotropic";
    return inst;
}

double ntk_additivity_error(const ReprogrammedModel& m, const Matrix& X_T) {
    const Matrix full = ntk_T(m, X_T);
    Matrix parts = ntk_A(m, X_T);
    parts += ntk_B(m, X_T).block;
    const double denom = full.frobenius_norm();
    const double diff = (full - parts).frobenius_norm();
    return denom == 0.0 ? diff : diff / denom;
}

namespace {

struct SeedOutcome {
    nlohmann::json detail;
    std::vector<std::string> violations;
};

// Random PSD matrix with a prescribed spectrum, via a random orthogonal basis.
Matrix random_psd(std::mt19937_64& rng, std::size_t n, bool constant_spectrum) {
    Matrix g = gaussian_matrix(rng, n, n);
    // Gram-Schmidt on the columns.
    Matrix q(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        Vector v = g.col(j);
        for (std::size_t k = 0; k < j; ++k) {
            const Vector qk = q.col(k);
            const double p = dot(v, qk);
            for (std::size_t i = 0; i < n; ++i) v[i] -= p * qk[i];
        }
        const double nv = norm2(v);
        for (std::size_t i = 0; i < n; ++i) q(i, j) = v[i] / nv;
    }
    std::uniform_real_distribution<double> uni(0.0, 5.0);
    Vector lambda(n, uni(rng));
    if (!constant_spectrum)
        for (double& l : lambda) l = uni(rng);
    Matrix ql = q;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ql(i, j) *= lambda[j];
    Matrix k = multiply_transposed(ql, q);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i);
    return k;
}

SeedOutcome verify_seed(std::uint64_t seed, const VerificationOptions& opts) {
    SeedOutcome out;
    out.detail["seed"] = seed;
    auto check = [&](const std::string& name, bool ok) {
        out.detail["checks"][name] = ok;
        if (!ok) out.violations.push_back("seed " + std::to_string(seed) + ": " + name);
    };
    try {
        const VerificationInstance inst = make_verification_instance(seed, opts);
        out.detail["variant"] = inst.variant;
        const double add = ntk_additivity_error(inst.model, inst.target.X);
        out.detail["additivity_error"] = add;
        check("ntk_additivity", add <= opts.additivity_tolerance);
        check("theorem2", thm2_bounds(inst.model, inst.target, opts.tolerance).holds());
        check("theorem3", thm3_bounds(inst.model, inst.target, opts.tolerance).holds());
        check("combined", combined_bounds(inst.model, inst.target, opts.tolerance).holds());
        check("corollary1", cor1_report(inst.model, inst.target, opts.tolerance).holds());
        check("corollary2", cor2_report(inst.model, inst.target, opts.tolerance).holds());

        std::mt19937_64 rng(seed + 0x5151);
        const std::size_t n = uniform_int(rng, 2, 8);
        const Matrix k = random_psd(rng, n, seed % 5 == 0);
        const Matrix y = gaussian_matrix(rng, n, uniform_int(rng, 1, 3));
        const double sigma = std::exp(std::uniform_real_distribution<double>(std::log(0.01), std::log(10.0))(rng));
        const Spectrum spec = sym_eig(k);
        check("theorem1_squared", thm1_bounds(spec, y, sigma, n, BoundMode::squared, opts.tolerance).holds());
        check("theorem1_printed_upper",
              thm1_bounds(spec, y, sigma, n, BoundMode::as_printed, opts.tolerance).satisfied_upper);

        const std::size_t c = 1 + seed % 3;
        check("proposition1", prop1_check(random_psd(rng, uniform_int(rng, 2, 6), false), c, opts.kron_tolerance).holds());
    } catch (const Error& e) {
        out.detail["error"] = e.what();
        out.violations.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
    return out;
}

}  // namespace

VerificationSummary run_verification(std::uint64_t seed_begin, std::uint64_t seed_end, const VerificationOptions& opts,
                                     std::size_t jobs) {
    if (seed_end < seed_begin) throw Error(ErrorCode::InvalidArgument, "seed range is empty");
    const std::size_t count = seed_end - seed_begin + 1;
    std::vector<SeedOutcome> outcomes(count);
    parallel_for(count, jobs, [&](std::size_t i) { outcomes[i] = verify_seed(seed_begin + i, opts); });

    VerificationSummary summary;
    summary.details["seed_begin"] = seed_begin;
    summary.details["seed_end"] = seed_end;
    summary.details["tolerance"] = opts.tolerance;
    summary.details["seeds"] = nlohmann::json::array();
    for (SeedOutcome& o : outcomes) {
        summary.details["seeds"].push_back(std::move(o.detail));
        for (auto& v : o.violations) summary.violations.push_back(std::move(v));
    }
    summary.passed = summary.violations.empty();
    summary.details["passed"] = summary.passed;
    summary.details["violations"] = summary.violations;
    return summary;
}

}  // namespace ntklab
