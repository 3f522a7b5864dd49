#ifndef SGLDVR_ERRORS_HPP
#define SGLDVR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sgldvr {

// Bad dimensions, spectra, batch sizes, horizons, etc. CLI maps this to exit 2.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN/Inf encountered while iterating; carries the step index for diagnosis.
struct DivergenceError : std::runtime_error {
  long long step;
  explicit DivergenceError(long long t, const std::string& what)
      : std::runtime_error(what), step(t) {}
};

// Malformed trace/dataset file; line and column are 1-based.
struct ParseError : std::runtime_error {
  int line;
  int column;
  ParseError(int l, int c, const std::string& what)
      : std::runtime_error(what + " (line " + std::to_string(l) + ", column " +
                           std::to_string(c) + ")"),
        line(l),
        column(c) {}
};

// Requested computation is outside the supported envelope (combinatorial
// blowup, infeasible hyperparameters, ...).
struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sgldvr

#endif
