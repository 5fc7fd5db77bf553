#include "ntklab/cli.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

namespace ntklab::cli {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <class T>
T parse_integer(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
        config_error("key '" + key + "': expected a non-negative integer, got '" + raw + "'");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
        config_error("key '" + key + "': expected a finite real, got '" + raw + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    config_error("key '" + key + "': expected true/false, got '" + raw + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& raw) {
    std::vector<std::size_t> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_integer<std::size_t>(key, item));
    return out;
}

template <class F>
auto parse_enum(const std::string& key, const std::string& raw, F parse) {
    try {
        return parse(trim(raw));
    } catch (const Error& e) {
        config_error("key '" + key + "': " + e.what());
    }
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

template <class T>
Setter integer(T& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_integer<T>(k, v); };
}
Setter real(double& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_real(k, v); };
}
Setter boolean(bool& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
}
Setter text(std::string& field) {
    return [&field](const std::string&, const std::string& v) { field = trim(v); };
}

void add_instance_keys(std::map<std::string, Setter>& keys, VerificationOptions& o) {
    keys["max_target_samples"] = integer(o.max_target_samples);
    keys["max_source_samples"] = integer(o.max_source_samples);
    keys["max_source_dim"] = integer(o.max_source_dim);
    keys["target_samples"] = integer(o.target_samples);
    keys["source_samples"] = integer(o.source_samples);
    keys["zero_mapping"] = boolean(o.zero_mapping);
    keys["tolerance"] = real(o.tolerance);
    keys["additivity_tolerance"] = real(o.additivity_tolerance);
    keys["kron_tolerance"] = real(o.kron_tolerance);
}

std::map<std::string, std::map<std::string, Setter>> key_table(RunConfig& c, std::optional<std::uint64_t>& base_seed) {
    std::map<std::string, std::map<std::string, Setter>> t;
    t[""]["seed"] = [&base_seed](const std::string& k, const std::string& v) {
        base_seed = parse_integer<std::uint64_t>(k, v);
    };

    auto& s = t["sweep"];
    SweepConfig& w = c.sweep;
    s["depths"] = [&w](const std::string& k, const std::string& v) { w.depths = parse_list(k, v); };
    s["hidden_width"] = integer(w.hidden_width);
    s["activation"] = [&w](const std::string& k, const std::string& v) { w.activation = parse_enum(k, v, parse_activation); };
    s["init_scale"] = real(w.init_scale);
    s["feature_map_kind"] = [&w](const std::string& k, const std::string& v) {
        w.feature_kind = parse_enum(k, v, parse_feature_kind);
    };
    s["net_seed"] = integer(w.net_seed);
    s["source_seed"] = integer(w.source_seed);
    s["source_samples"] = integer(w.source_samples);
    s["source_dim"] = integer(w.source_dim);
    s["source_classes"] = integer(w.source_classes);
    s["source_separation"] = real(w.source_separation);
    s["target_seed"] = integer(w.target_seed);
    s["target_samples"] = integer(w.target_samples);
    s["target_dim"] = integer(w.target_dim);
    s["target_classes"] = integer(w.target_classes);
    s["target_separation"] = real(w.target_separation);
    s["transform_kind"] = [&w](const std::string& k, const std::string& v) {
        w.transform_kind = parse_enum(k, v, parse_transform_kind);
    };
    s["train_transform"] = boolean(w.train_transform);
    s["train_mapping"] = boolean(w.train_mapping);
    s["sigma_S"] = real(w.sigma_S);
    s["ridge_scaling"] = [&w](const std::string& k, const std::string& v) {
        w.ridge_scaling = parse_enum(k, v, parse_ridge_scaling);
    };
    s["lr"] = real(w.lr);
    s["steps"] = integer(w.steps);
    s["replicates"] = integer(w.replicates);
    s["train_fraction"] = real(w.train_fraction);
    s["output_dir"] = [&w](const std::string&, const std::string& v) { w.output_dir = trim(v); };
    s["jobs"] = integer(w.jobs);

    auto& v = t["verify"];
    v["seed_begin"] = integer(c.verify.seed_begin);
    v["seed_end"] = integer(c.verify.seed_end);
    v["output"] = text(c.verify.output);
    v["jobs"] = integer(c.verify.jobs);
    add_instance_keys(v, c.verify.options);

    auto& b = t["bounds"];
    b["instance"] = text(c.bounds.instance);
    b["seed"] = integer(c.bounds.seed);
    b["sigma_T"] = real(c.bounds.sigma_T);
    b["gap_T"] = real(c.bounds.gap_T);
    b["gap_B"] = real(c.bounds.gap_B);
    b["delta"] = real(c.bounds.delta);
    b["fd_step"] = real(c.bounds.fd_step);
    b["output"] = text(c.bounds.output);
    add_instance_keys(b, c.bounds.options);

    auto& n = t["ntk"];
    n["seed"] = integer(c.ntk.seed);
    n["kernel"] = text(c.ntk.kernel);
    n["output"] = text(c.ntk.output);
    add_instance_keys(n, c.ntk.options);

    auto& r = t["reprogram"];
    r["depth"] = integer(c.reprogram.depth);
    r["replicate"] = integer(c.reprogram.replicate);
    r["output"] = text(c.reprogram.output);
    return t;
}

void validate(const RunConfig& c) {
    c.sweep.validate();
    if (c.verify.seed_end < c.verify.seed_begin) config_error("verify: seed_end must be >= seed_begin");
    if (c.verify.jobs == 0) config_error("verify: jobs must be >= 1");
    for (const VerificationOptions* o : {&c.verify.options, &c.bounds.options, &c.ntk.options}) {
        if (o->max_target_samples < 2 || o->max_source_samples < o->max_target_samples || o->max_source_dim < 2) {
            config_error("instance sizes need 2 <= max_target_samples <= max_source_samples and max_source_dim >= 2");
        }
        if (o->tolerance < 0 || o->additivity_tolerance < 0 || o->kron_tolerance < 0) config_error("tolerances must be >= 0");
    }
    if (c.bounds.instance != "random" && c.bounds.instance != "isotropic") {
        config_error("key 'instance': expected random or isotropic, got '" + c.bounds.instance + "'");
    }
    if (!(c.bounds.sigma_T > 0)) config_error("key 'sigma_T' must be > 0");
    if (!(c.bounds.delta > 0 && c.bounds.delta < 1)) config_error("key 'delta' must lie in (0, 1)");
    static const std::set<std::string> kernels{"A", "B", "B_scalar", "T", "source"};
    if (!kernels.contains(c.ntk.kernel)) config_error("key 'kernel': expected A, B, B_scalar, T or source");
    if (c.reprogram.depth == 0) config_error("key 'depth' must be >= 1");
    if (c.reprogram.replicate >= c.sweep.replicates) config_error("key 'replicate' must be < sweep replicates");
}

int parse_seed_env(std::optional<std::uint64_t>& seed) {
    if (const char* env = std::getenv("NTKLAB_SEED"); env != nullptr && *env != '\0') {
        seed = parse_integer<std::uint64_t>("NTKLAB_SEED", env);
    }
    return 0;
}

// Writes `body` to `path` ("-" for stdout).
void emit(const std::string& path, const std::string& body, std::ostream& out) {
    if (path == "-") {
        out << body;
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << body;
    if (!f) throw Error(ErrorCode::IoError, "write to " + path + " failed");
}

void check_output(const std::string& path, bool as_file) {
    if (path != "-") check_output_path(path, as_file);
}

VerificationInstance bounds_instance(const BoundsConfig& b) {
    return b.instance == "isotropic" ? make_isotropic_instance() : make_verification_instance(b.seed, b.options);
}

int cmd_verify(const RunConfig& c, std::ostream& out, std::ostream& err) {
    err << "verify: seeds " << c.verify.seed_begin << "-" << c.verify.seed_end << ", tolerance "
        << c.verify.options.tolerance << "\n";
    VerificationSummary s = run_verification(c.verify.seed_begin, c.verify.seed_end, c.verify.options, c.verify.jobs);

    // The printed-form risk counterexample is reported alongside, never asserted.
    const Matrix y{{1.0}, {1.0}};
    const BoundReport printed = thm1_bounds(sym_eig(Matrix::identity(2)), y, 1.0, 2, BoundMode::as_printed);
    s.details["printed_form_counterexample"] = to_json(printed);

    emit(c.verify.output, s.details.dump(2) + "\n", out);
    for (const std::string& v : s.violations) err << "violation: " << v << "\n";
    err << "verify: " << (s.passed ? "all invariants hold" : std::to_string(s.violations.size()) + " violation(s)")
        << "\n";
    return s.passed ? kExitOk : kExitViolation;
}

int cmd_sweep(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const SweepResult result = run_depth_sweep(c.sweep);
    write_reports(result, c.sweep.output_dir);

    std::vector<double> lmin, src, tgt;
    bool failed = false;
    for (const SweepRecord& r : result.records) {
        err << "depth " << r.depth << ": lambda_min_KS " << r.lambda_min_KS << ", source_loss " << r.source_loss
            << ", target_loss " << r.target_loss << (r.error ? ", error: " + *r.error : std::string{}) << "\n";
        if (r.error) {
            failed = true;
            continue;
        }
        lmin.push_back(r.lambda_min_KS);
        src.push_back(r.source_loss);
        tgt.push_back(r.target_loss);
    }
    nlohmann::json summary;
    summary["output_dir"] = c.sweep.output_dir.string();
    summary["depths"] = result.records.size();
    summary["failed_cells"] = failed;
    if (lmin.size() >= 2) {
        summary["spearman_lambda_min_vs_source_loss"] = spearman(lmin, src);
        summary["spearman_lambda_min_vs_target_loss"] = spearman(lmin, tgt);
    }
    out << summary.dump(2) << "\n";
    return failed ? kExitViolation : kExitOk;
}

int cmd_bounds(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const BoundsConfig& b = c.bounds;
    const VerificationInstance inst = bounds_instance(b);
    const double tol = b.options.tolerance;
    const ReprogrammedModel& m = inst.model;
    const Dataset& target = inst.target;

    std::vector<std::pair<BoundReport, bool>> reports;  // (report, asserted)
    const Matrix reduced = block_trace_reduce(ntk_T(m, target.X), target.label_dim());
    const Spectrum spec = sym_eig(reduced);
    reports.emplace_back(thm1_bounds(spec, target.Y, b.sigma_T, target.size(), BoundMode::squared, tol), true);
    reports.emplace_back(thm1_bounds(spec, target.Y, b.sigma_T, target.size(), BoundMode::as_printed, tol), false);
    reports.emplace_back(prop1_check(ntk_B(m, target.X).scalar, target.label_dim(), b.options.kron_tolerance), true);
    reports.emplace_back(thm2_bounds(m, target, tol), true);
    reports.emplace_back(thm3_bounds(m, target, tol), true);
    reports.emplace_back(cor1_report(m, target, tol), true);
    reports.emplace_back(cor2_report(m, target, tol), true);
    reports.emplace_back(combined_bounds(m, target, tol), true);

    nlohmann::json doc;
    doc["instance"] = inst.variant;
    doc["seed"] = b.instance == "isotropic" ? nlohmann::json(nullptr) : nlohmann::json(b.seed);
    doc["N_T"] = target.size();
    doc["N_S"] = m.source->size();
    doc["ntk_additivity_error"] = ntk_additivity_error(m, target.X);
    doc["reports"] = nlohmann::json::array();
    bool ok = true;
    for (const auto& [r, asserted] : reports) {
        nlohmann::json j = to_json(r);
        j["asserted"] = asserted;
        doc["reports"].push_back(std::move(j));
        if (asserted && !r.holds()) {
            ok = false;
            err << "violation: " << r.name << " (seed " << b.seed << ")\n";
        }
    }
    const GapBoundInputs gi = estimate_gap_constants(target, m, b.gap_T, b.gap_B, b.delta, b.fd_step);
    doc["generalization_gap"] = {{"label", "empirical estimate"}, {"rho", gi.rho},         {"B", gi.B},
                                 {"T", gi.T},                     {"L_D", gi.L_D},         {"Gamma_D", gi.Gamma_D},
                                 {"delta", gi.delta},             {"ntk_abs_sum", gi.ntk_abs_sum},
                                 {"N_T", gi.N_T},                 {"bound", gap_bound(gi)}};
    emit(b.output, doc.dump(2) + "\n", out);
    return ok ? kExitOk : kExitViolation;
}

int cmd_ntk(const RunConfig& c, std::ostream& out, std::ostream&) {
    const VerificationInstance inst = make_verification_instance(c.ntk.seed, c.ntk.options);
    const Matrix& X = inst.target.X;
    Matrix k;
    if (c.ntk.kernel == "A") k = ntk_A(inst.model, X);
    else if (c.ntk.kernel == "B") k = ntk_B(inst.model, X).block;
    else if (c.ntk.kernel == "B_scalar") k = ntk_B(inst.model, X).scalar;
    else if (c.ntk.kernel == "T") k = ntk_T(inst.model, X);
    else k = inst.model.source->K_S;
    std::ostringstream body;
    write_csv(body, k);
    emit(c.ntk.output, body.str(), out);
    return kExitOk;
}

int cmd_reprogram(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const SweepCell cell = build_sweep_cell(c.sweep, c.reprogram.depth, c.reprogram.replicate);
    const TrainResult tr = train_reprogram(cell.model, cell.target_split.train, c.sweep.lr, c.sweep.steps);
    std::ostringstream body;
    write_loss_trace_csv(body, tr.loss_trace);
    emit(c.reprogram.output, body.str(), out);
    if (tr.divergence_warning) err << "warning: training loss increased; lr may be too large\n";
    if (tr.aborted_non_finite) {
        err << "error: loss became non-finite at step " << tr.loss_trace.size() << "\n";
        return kExitViolation;
    }
    err << "reprogram: final train loss " << tr.loss_trace.back() << "\n";
    return kExitOk;
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
    ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        config_error(std::string("malformed config: ") + e.what());
    }
    RunConfig cfg;
    std::optional<std::uint64_t> base_seed;
    auto table = key_table(cfg, base_seed);
    // Top-level seed first so explicit per-section seeds win over it.
    if (auto top = tree.get_child_optional("seed"); top && top->empty()) table[""]["seed"]("seed", top->data());
    if (base_seed) apply_seed(cfg, *base_seed);
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            if (name != "seed") config_error("unknown key '" + name + "'");
            continue;
        }
        auto section = table.find(name);
        if (section == table.end() || name.empty()) config_error("unknown section '[" + name + "]'");
        for (const auto& [key, value] : node) {
            auto setter = section->second.find(key);
            if (setter == section->second.end()) config_error("unknown key '" + key + "' in section [" + name + "]");
            setter->second(key, value.data());
        }
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) config_error("cannot read config file " + path.string());
    return parse_run_config(f);
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.sweep.net_seed = seed;
    cfg.sweep.source_seed = seed + 1;
    cfg.sweep.target_seed = seed + 2;
    const std::uint64_t span = cfg.verify.seed_end - cfg.verify.seed_begin;
    cfg.verify.seed_begin = seed;
    cfg.verify.seed_end = seed + span;
    cfg.bounds.seed = seed;
    cfg.ntk.seed = seed;
}

void check_output_path(const fs::path& path, bool as_file) {
    std::error_code ec;
    const fs::path p = fs::absolute(path, ec);
    if (ec || path.empty()) config_error("invalid output path '" + path.string() + "'");
    if (fs::exists(p, ec)) {
        if (as_file && fs::is_directory(p)) config_error("output path " + p.string() + " is a directory");
        if (!as_file && !fs::is_directory(p)) config_error("output directory " + p.string() + " exists and is not a directory");
        if (::access(p.c_str(), W_OK) != 0) config_error("output path " + p.string() + " is not writable");
        return;
    }
    fs::path ancestor = p.parent_path();
    while (!ancestor.empty() && !fs::exists(ancestor, ec)) {
        if (ancestor == ancestor.parent_path()) break;
        ancestor = ancestor.parent_path();
    }
    if (!fs::is_directory(ancestor, ec)) config_error("output path " + p.string() + " lies under a non-directory");
    if (::access(ancestor.c_str(), W_OK) != 0) config_error("output path " + p.string() + " is not writable");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"ntklab: eigenvalue-spectrum bounds for reprogrammed kernel models"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::string output;
    bool dry_run = false;
    std::string seed_range;

    struct Sub {
        const char* name;
        const char* help;
        bool output_is_dir;
    };
    const Sub subs[] = {
        {"verify", "randomized bound-verification sweep; JSON summary", false},
        {"sweep", "source-depth sweep with reports and the assumption diagnostic", true},
        {"bounds", "all bound reports for one instance as JSON", false},
        {"ntk", "dump a kernel matrix as CSV", false},
        {"reprogram", "train one reprogramming cell and dump the loss trace", false},
    };
    std::map<std::string, CLI::App*> commands;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("-c,--config", config_path, "INI config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "base seed for all randomness (overrides NTKLAB_SEED and the config)");
        sub->add_option("--jobs", jobs, "concurrent independent cells")->check(CLI::PositiveNumber);
        sub->add_option("-o,--output", output, s.output_is_dir ? "output directory" : "output file ('-' for stdout)");
        sub->add_flag("--dry-run", dry_run, "validate config and paths, write nothing");
        commands[s.name] = sub;
    }
    commands["verify"]->add_option("--seeds", seed_range, "inclusive seed range, e.g. 0-19");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    std::string name;
    for (const auto& [n, sub] : commands)
        if (sub->parsed()) name = n;

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = load_run_config(config_path);
        std::optional<std::uint64_t> env_seed;
        parse_seed_env(env_seed);
        if (seed) apply_seed(cfg, *seed);
        else if (env_seed) apply_seed(cfg, *env_seed);
        if (!seed_range.empty()) {
            const auto dash = seed_range.find('-');
            if (dash == std::string::npos) config_error("--seeds: expected A-B, got '" + seed_range + "'");
            cfg.verify.seed_begin = parse_integer<std::uint64_t>("--seeds", seed_range.substr(0, dash));
            cfg.verify.seed_end = parse_integer<std::uint64_t>("--seeds", seed_range.substr(dash + 1));
        }
        if (jobs) cfg.sweep.jobs = cfg.verify.jobs = *jobs;
        if (!output.empty()) {
            cfg.verify.output = cfg.bounds.output = cfg.ntk.output = cfg.reprogram.output = output;
            cfg.sweep.output_dir = output;
        }
        validate(cfg);
        if (name == "sweep") check_output_path(cfg.sweep.output_dir, false);
        if (name == "verify") check_output(cfg.verify.output, true);
        if (name == "bounds") check_output(cfg.bounds.output, true);
        if (name == "ntk") check_output(cfg.ntk.output, true);
        if (name == "reprogram") check_output(cfg.reprogram.output, true);
    } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (dry_run) {
        err << name << ": config ok (dry run, nothing written)\n";
        return kExitOk;
    }

    try {
        if (name == "verify") return cmd_verify(cfg, out, err);
        if (name == "sweep") return cmd_sweep(cfg, out, err);
        if (name == "bounds") return cmd_bounds(cfg, out, err);
        if (name == "ntk") return cmd_ntk(cfg, out, err);
        return cmd_reprogram(cfg, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitViolation;
    }
}

}  // namespace ntklab::cli
