#pragma once

// Command-line front end. Exit codes: 0 ok, 1 invariant violation or failed
// computation, 2 configuration error (nothing is written in that case).

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ntklab/experiments.hpp"

namespace ntklab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitViolation = 1;
inline constexpr int kExitConfig = 2;

struct VerifyConfig {
    std::uint64_t seed_begin = 0;
    std::uint64_t seed_end = 19;
    VerificationOptions options;
    std::string output = "-";  // "-" is stdout
    std::size_t jobs = 1;
};

struct BoundsConfig {
    std::string instance = "random";  // random | isotropic
    std::uint64_t seed = 0;
    VerificationOptions options;
    double sigma_T = 1.0;  // ridge for the target-kernel risk sandwich
    double gap_T = 1.0;
    double gap_B = 1.0;
    double delta = 0.05;
    double fd_step = 1e-5;
    std::string output = "-";
};

struct NtkConfig {
    std::uint64_t seed = 0;
    std::string kernel = "T";  // A | B | B_scalar | T | source
    VerificationOptions options;
    std::string output = "-";
};

struct ReprogramConfig {
    std::size_t depth = 1;
    std::size_t replicate = 0;
    std::string output = "-";
};

// Whole document; each subcommand reads its own section plus [sweep] where needed.
struct RunConfig {
    SweepConfig sweep;
    VerifyConfig verify;
    BoundsConfig bounds;
    NtkConfig ntk;
    ReprogramConfig reprogram;
};

// Parses an INI document. Unknown sections or keys throw ConfigError naming them.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

// Overrides every seed of the document from one base value.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

// Throws ConfigError when `path` cannot be created as a directory (or file when
// as_file is set). Does not touch the filesystem.
void check_output_path(const std::filesystem::path& path, bool as_file);

// Runs the program with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ntklab::cli
