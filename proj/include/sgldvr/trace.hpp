#ifndef SGLDVR_TRACE_HPP
#define SGLDVR_TRACE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgldvr/vec.hpp"

namespace sgldvr {

struct TraceRecord {
  long long t = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  std::optional<Vec> x;  // iterate snapshot, present only at snapshot rows
};

// One trajectory's record. First record at t = 0, last at the horizon, t
// strictly increasing, every real finite.
struct RunTrace {
  std::vector<TraceRecord> records;
  nlohmann::json config;  // echo of the generating configuration
  std::uint64_t seed = 0;
  std::string objective_id;
  std::string provenance;
};

// CSV `t,f,grad_norm[,x_0..x_{d-1}]` with 17-significant-digit decimals
// (lossless for binary64), plus a `<path>.meta.json` sidecar carrying config,
// seed, objective id and provenance.
void write_trace(const RunTrace& trace, const std::string& csv_path);
RunTrace read_trace(const std::string& csv_path);

struct FirstPassage {
  double level = 0.0;
  std::optional<long long> t;  // empty when censored
  bool stride_limited = false;
};

struct TraceSummary {
  double min_f = 0.0;
  double median_f = 0.0;
  double min_grad_norm = 0.0;
  std::vector<FirstPassage> first_passage;
};

// Aggregates over the recorded rows; first passage is the earliest recorded t
// with f <= level and is flagged stride-limited when rows are not dense.
TraceSummary summarize(const RunTrace& trace, std::span<const double> levels = {});

// Canonical decimal rendering used for every float this project persists.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view s);

}  // namespace sgldvr

#endif
