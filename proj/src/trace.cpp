#include "sgldvr/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgldvr/errors.hpp"

namespace sgldvr {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

namespace {

void validate_records(const std::vector<TraceRecord>& records) {
  if (records.empty()) throw ConfigError("trace must contain at least the t=0 record");
  long long prev = -1;
  for (const auto& rec : records) {
    if (rec.t <= prev)
      throw ConfigError("trace t values must be strictly increasing");
    if (!std::isfinite(rec.f) || !std::isfinite(rec.grad_norm))
      throw ConfigError("trace contains non-finite values");
    if (rec.x && !all_finite(*rec.x))
      throw ConfigError("trace iterate snapshot contains non-finite values");
    prev = rec.t;
  }
}

std::size_t snapshot_dim(const std::vector<TraceRecord>& records) {
  for (const auto& rec : records)
    if (rec.x) return rec.x->size();
  return 0;
}

}  // namespace

void write_trace(const RunTrace& trace, const std::string& csv_path) {
  validate_records(trace.records);
  std::ofstream out(csv_path);
  if (!out) throw ConfigError("cannot open trace file for writing: " + csv_path);

  const std::size_t dim = snapshot_dim(trace.records);
  out << "t,f,grad_norm";
  for (std::size_t j = 0; j < dim; ++j) out << ",x_" << j;
  out << '\n';
  for (const auto& rec : trace.records) {
    out << rec.t << ',' << format_double(rec.f) << ',' << format_double(rec.grad_norm);
    if (dim > 0) {
      if (rec.x) {
        if (rec.x->size() != dim)
          throw ConfigError("inconsistent snapshot dimension in trace");
        for (double v : *rec.x) out << ',' << format_double(v);
      } else {
        for (std::size_t j = 0; j < dim; ++j) out << ',';
      }
    }
    out << '\n';
  }
  out.close();

  nlohmann::json sidecar;
  sidecar["config"] = trace.config;
  sidecar["seed"] = trace.seed;
  sidecar["objective"] = trace.objective_id;
  sidecar["provenance"] = trace.provenance;
  std::ofstream meta(csv_path + ".meta.json");
  if (!meta) throw ConfigError("cannot open sidecar for writing: " + csv_path);
  meta << sidecar.dump(2) << '\n';
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

int field_column(const std::string& line, std::size_t field_index) {
  std::size_t pos = 0;
  for (std::size_t k = 0; k < field_index; ++k) pos = line.find(',', pos) + 1;
  return static_cast<int>(pos) + 1;
}

double parse_double_field(const std::string& line, int lineno,
                          const std::vector<std::string>& fields, std::size_t idx) {
  const std::string& tok = fields[idx];
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    if (!std::isfinite(v)) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(lineno, field_column(line, idx),
                     "bad numeric field '" + tok + "'");
  }
}

}  // namespace

RunTrace read_trace(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot open trace file: " + csv_path);

  RunTrace trace;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 1, "missing trace header");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "t" || header[1] != "f" ||
      header[2] != "grad_norm")
    throw ParseError(1, 1, "bad trace header, expected t,f,grad_norm[,x_0..]");
  const std::size_t dim = header.size() - 3;

  int lineno = 1;
  long long prev_t = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError(lineno, 1, "row has " + std::to_string(fields.size()) +
                                      " fields, header has " +
                                      std::to_string(header.size()));
    TraceRecord rec;
    try {
      std::size_t used = 0;
      rec.t = std::stoll(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument(fields[0]);
    } catch (const std::exception&) {
      throw ParseError(lineno, 1, "bad iteration index '" + fields[0] + "'");
    }
    if (rec.t <= prev_t)
      throw ParseError(lineno, 1, "non-monotone iteration index " +
                                      std::to_string(rec.t));
    prev_t = rec.t;
    rec.f = parse_double_field(line, lineno, fields, 1);
    rec.grad_norm = parse_double_field(line, lineno, fields, 2);
    if (dim > 0) {
      bool any = false;
      bool all = true;
      for (std::size_t j = 0; j < dim; ++j) {
        if (fields[3 + j].empty()) all = false;
        else any = true;
      }
      if (any && !all)
        throw ParseError(lineno, field_column(line, 3),
                         "partially filled iterate snapshot");
      if (all) {
        Vec x(dim);
        for (std::size_t j = 0; j < dim; ++j)
          x[j] = parse_double_field(line, lineno, fields, 3 + j);
        rec.x = std::move(x);
      }
    }
    trace.records.push_back(std::move(rec));
  }
  if (trace.records.empty()) throw ParseError(lineno, 1, "trace has no records");

  std::ifstream meta(csv_path + ".meta.json");
  if (!meta) throw ConfigError("missing trace sidecar: " + csv_path + ".meta.json");
  nlohmann::json sidecar;
  try {
    meta >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, 1, std::string("bad sidecar json: ") + e.what());
  }
  trace.config = sidecar.value("config", nlohmann::json::object());
  trace.seed = sidecar.value("seed", std::uint64_t{0});
  trace.objective_id = sidecar.value("objective", std::string{});
  trace.provenance = sidecar.value("provenance", std::string{});
  return trace;
}

TraceSummary summarize(const RunTrace& trace, std::span<const double> levels) {
  if (trace.records.empty()) throw ConfigError("cannot summarize an empty trace");

  TraceSummary summary;
  std::vector<double> fs;
  fs.reserve(trace.records.size());
  summary.min_f = trace.records.front().f;
  summary.min_grad_norm = trace.records.front().grad_norm;
  bool dense = true;
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& rec = trace.records[i];
    fs.push_back(rec.f);
    summary.min_f = std::min(summary.min_f, rec.f);
    summary.min_grad_norm = std::min(summary.min_grad_norm, rec.grad_norm);
    if (i > 0 && rec.t != trace.records[i - 1].t + 1) dense = false;
  }
  std::sort(fs.begin(), fs.end());
  const std::size_t m = fs.size();
  summary.median_f = (m % 2 == 1) ? fs[m / 2] : 0.5 * (fs[m / 2 - 1] + fs[m / 2]);

  for (double level : levels) {
    FirstPassage fp;
    fp.level = level;
    fp.stride_limited = !dense && trace.records.size() > 1;
    for (const auto& rec : trace.records) {
      if (rec.f <= level) {
        fp.t = rec.t;
        break;
      }
    }
    summary.first_passage.push_back(fp);
  }
  return summary;
}

}  // namespace sgldvr
