#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "medoe/algo/boosts.hpp"
#include "medoe/core/errors.hpp"
#include "medoe/core/rng.hpp"

namespace medoe::harness {

struct RunRow {
  std::string run_id;
  std::string baseline;
  std::string env;
  std::string team_id;
  std::int64_t seed = 0;
  std::int64_t total_step = 0;
  double mean_return = 0.0;
  double ci95 = 0.0;
  std::vector<double> doe_rate;                        // one per agent
  std::vector<std::optional<double>> source_return;    // one per sub-team; empty optional = blank cell
};

struct RunLog {
  int num_agents = 0;
  int num_subteams = 2;
  std::vector<RunRow> rows;

  std::vector<std::string> header() const {
    std::vector<std::string> h = {"run_id", "baseline", "env", "team_id", "seed", "total_step", "mean_return", "ci95"};
    for (int i = 1; i <= num_agents; ++i) h.push_back("doe_rate_agent_" + std::to_string(i));
    for (int m = 1; m <= num_subteams; ++m) h.push_back("source_return_subteam_" + std::to_string(m));
    return h;
  }
};

namespace detail {

// Shortest text that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& s, const std::string& column) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("run log: bad number '" + s + "' in column " + column);
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& column) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("run log: bad integer '" + s + "' in column " + column);
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline void write_run_log(std::ostream& out, const RunLog& log, bool with_header = true) {
  if (with_header) {
    const auto h = log.header();
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
    out << '\n';
  }
  for (const auto& r : log.rows) {
    if (static_cast<int>(r.doe_rate.size()) != log.num_agents ||
        static_cast<int>(r.source_return.size()) != log.num_subteams)
      throw std::invalid_argument("run log: row width does not match the header");
    out << r.run_id << ',' << r.baseline << ',' << r.env << ',' << r.team_id << ',' << r.seed << ',' << r.total_step
        << ',' << detail::format_real(r.mean_return) << ',' << detail::format_real(r.ci95);
    for (double d : r.doe_rate) out << ',' << detail::format_real(d);
    for (const auto& s : r.source_return) out << ',' << (s ? detail::format_real(*s) : std::string());
    out << '\n';
  }
}

inline void write_run_log(const std::filesystem::path& path, const RunLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("run log: cannot write " + path.string());
  write_run_log(out, log);
}

inline RunLog read_run_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("run log: empty file");
  const auto cols = detail::split_csv_line(line);
  RunLog log;
  log.num_agents = 0;
  log.num_subteams = 0;
  for (const auto& c : cols) {
    if (c.rfind("doe_rate_agent_", 0) == 0) ++log.num_agents;
    if (c.rfind("source_return_subteam_", 0) == 0) ++log.num_subteams;
  }
  if (log.header() != cols) throw ConfigError("run log: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != cols.size()) throw ConfigError("run log: row has " + std::to_string(f.size()) + " fields");
    RunRow r;
    r.run_id = f[0];
    r.baseline = f[1];
    r.env = f[2];
    r.team_id = f[3];
    r.seed = detail::parse_int(f[4], cols[4]);
    r.total_step = detail::parse_int(f[5], cols[5]);
    r.mean_return = detail::parse_real(f[6], cols[6]);
    r.ci95 = detail::parse_real(f[7], cols[7]);
    std::size_t k = 8;
    for (int i = 0; i < log.num_agents; ++i, ++k) r.doe_rate.push_back(detail::parse_real(f[k], cols[k]));
    for (int m = 0; m < log.num_subteams; ++m, ++k)
      r.source_return.push_back(f[k].empty() ? std::nullopt : std::optional<double>(detail::parse_real(f[k], cols[k])));
    log.rows.push_back(std::move(r));
  }
  return log;
}

inline RunLog read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("run log: cannot open " + path.string());
  return read_run_log(in);
}

// Trapezoidal area under mean_return over the logged steps, divided by the step span.
inline double compute_auc(const std::vector<RunRow>& rows) {
  if (rows.size() < 2) throw std::invalid_argument("compute_auc: need at least two evaluation rows");
  double area = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double dx = static_cast<double>(rows[i].total_step - rows[i - 1].total_step);
    if (!(dx > 0.0)) throw std::invalid_argument("compute_auc: steps must be strictly increasing");
    area += 0.5 * dx * (rows[i].mean_return + rows[i - 1].mean_return);
  }
  return area / static_cast<double>(rows.back().total_step - rows.front().total_step);
}

// Splits a log holding several runs into per-run row lists (in order of first appearance).
inline std::vector<std::vector<RunRow>> rows_by_run(const RunLog& log) {
  std::vector<std::vector<RunRow>> out;
  std::vector<std::string> ids;
  for (const auto& r : log.rows) {
    std::size_t k = 0;
    while (k < ids.size() && ids[k] != r.run_id) ++k;
    if (k == ids.size()) {
      ids.push_back(r.run_id);
      out.emplace_back();
    }
    out[k].push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Sensitivity sweeps

enum class BoostParameter { temperature, entropy, kl, clip };

inline BoostParameter boost_parameter_from_string(const std::string& s) {
  if (s == "temp_boost" || s == "B_T") return BoostParameter::temperature;
  if (s == "ent_coef_boost" || s == "B_alpha") return BoostParameter::entropy;
  if (s == "kl_coef_boost" || s == "B_kappa") return BoostParameter::kl;
  if (s == "clip_coef_boost" || s == "B_delta") return BoostParameter::clip;
  throw ConfigError("unknown boost parameter '" + s + "'");
}

inline const char* to_string(BoostParameter p) {
  switch (p) {
    case BoostParameter::temperature: return "temp_boost";
    case BoostParameter::entropy: return "ent_coef_boost";
    case BoostParameter::kl: return "kl_coef_boost";
    case BoostParameter::clip: return "clip_coef_boost";
  }
  return "?";
}

struct SweepRange {
  double lo = 1.0;
  double hi = 1000.0;
};

inline SweepRange sweep_range(BoostParameter p) {
  return p == BoostParameter::temperature ? SweepRange{0.5, 10.0} : SweepRange{1.0, 1000.0};
}

inline double& boost_field(BoostConfig& b, BoostParameter p) {
  switch (p) {
    case BoostParameter::temperature: return b.temperature_boost;
    case BoostParameter::entropy: return b.entropy_boost;
    case BoostParameter::kl: return b.kl_boost;
    case BoostParameter::clip: return b.clip_boost;
  }
  throw std::logic_error("boost_field");
}

// Copies of `fixed` with one multiplier drawn log-uniformly from its sweep range.
inline std::vector<BoostConfig> sweep_sample(const BoostConfig& fixed, BoostParameter varied, int num_samples,
                                             RngStream& rng) {
  if (num_samples < 0) throw std::invalid_argument("sweep_sample: negative sample count");
  const SweepRange r = sweep_range(varied);
  const double llo = std::log(r.lo), lhi = std::log(r.hi);
  std::vector<BoostConfig> out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int k = 0; k < num_samples; ++k) {
    BoostConfig b = fixed;
    boost_field(b, varied) = std::clamp(std::exp(rng.uniform(llo, lhi)), r.lo, r.hi);
    out.push_back(b);
  }
  return out;
}

}  // namespace medoe::harness
