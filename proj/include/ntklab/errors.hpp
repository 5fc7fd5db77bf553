#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ntklab {

enum class ErrorCode {
    InvalidArgument,
    NonFiniteEntry,
    NonSquare,
    AsymmetricBeyondTol,
    NoConvergence,
    SizeOverflow,
    DimensionMismatch,
    SolveFailure,
    FeatureMapNotDifferentiable,
    NegativeEigenvalueBeyondTol,
    NonFiniteLoss,
    IoError,
    ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so callers
// (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ntklab
