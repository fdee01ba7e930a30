#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "irf/core/error.hpp"

namespace irf::harness {

enum class Phase : std::uint8_t { Train, Eval };

/// One logging unit: an interval of meta-updates (train) or one episode index
/// averaged over evaluation lifetimes (eval, lifetime_id -1). Empty optional
/// fields mean nothing was observed in the unit.
struct MetricsRow {
  Phase phase = Phase::Train;
  long index = 0;
  long lifetime_id = -1;
  std::uint64_t seed = 0;
  std::optional<double> mean_episode_return;
  std::optional<double> mean_lifetime_return;
  std::optional<double> mean_intrinsic_reward;
  std::optional<double> policy_entropy;
  double wall_ms = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr std::string_view kMetricsHeader =
    "phase,index,lifetime_id,seed,mean_episode_return,mean_lifetime_return,"
    "mean_intrinsic_reward,policy_entropy,wall_ms";

namespace detail {

inline std::string format_real(double v) {
  if (!std::isfinite(v)) throw NumericError("refusing to write a non-finite metric");
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_opt(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

template <class N>
N parse_field(const std::string& s, int line, const char* what) {
  N out{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("metrics line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  if constexpr (std::is_floating_point_v<N>)
    if (!std::isfinite(out))
      throw ConfigError("metrics line " + std::to_string(line) + ": non-finite " + what);
  return out;
}

inline std::optional<double> parse_opt(const std::string& s, int line, const char* what) {
  if (s.empty()) return std::nullopt;
  return parse_field<double>(s, line, what);
}

}  // namespace detail

inline std::string format_row(const MetricsRow& r) {
  std::string out = r.phase == Phase::Train ? "train" : "eval";
  out += "," + std::to_string(r.index) + "," + std::to_string(r.lifetime_id) + "," +
         std::to_string(r.seed) + "," + detail::format_opt(r.mean_episode_return) + "," +
         detail::format_opt(r.mean_lifetime_return) + "," +
         detail::format_opt(r.mean_intrinsic_reward) + "," +
         detail::format_opt(r.policy_entropy) + "," + detail::format_real(r.wall_ms);
  return out;
}

/// Append-only CSV with the header written on creation.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw ConfigError("cannot write metrics file " + path.string());
    out_ << kMetricsHeader << '\n';
  }
  void write(const MetricsRow& r) {
    // Formatting throws before anything reaches the file.
    const auto line = format_row(r);
    out_ << line << '\n';
    out_.flush();
    ++rows_;
  }
  long rows() const { return rows_; }

 private:
  std::ofstream out_;
  long rows_ = 0;
};

inline std::vector<MetricsRow> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ConfigError("metrics: missing or unexpected header");
  std::vector<MetricsRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9)
      throw ConfigError("metrics line " + std::to_string(line_no) + ": expected 9 fields, got " +
                        std::to_string(f.size()));
    MetricsRow r;
    if (f[0] == "train")
      r.phase = Phase::Train;
    else if (f[0] == "eval")
      r.phase = Phase::Eval;
    else
      throw ConfigError("metrics line " + std::to_string(line_no) + ": bad phase '" + f[0] + "'");
    r.index = detail::parse_field<long>(f[1], line_no, "index");
    r.lifetime_id = detail::parse_field<long>(f[2], line_no, "lifetime_id");
    r.seed = detail::parse_field<std::uint64_t>(f[3], line_no, "seed");
    r.mean_episode_return = detail::parse_opt(f[4], line_no, "mean_episode_return");
    r.mean_lifetime_return = detail::parse_opt(f[5], line_no, "mean_lifetime_return");
    r.mean_intrinsic_reward = detail::parse_opt(f[6], line_no, "mean_intrinsic_reward");
    r.policy_entropy = detail::parse_opt(f[7], line_no, "policy_entropy");
    r.wall_ms = detail::parse_field<double>(f[8], line_no, "wall_ms");
    rows.push_back(r);
  }
  return rows;
}

/// Visit counts as comma-separated integers, one line per grid row.
inline void emit_heatmap(const std::vector<long>& visits, int height, int width,
                         const std::filesystem::path& path) {
  expects(static_cast<long>(visits.size()) == static_cast<long>(height) * width,
          "emit_heatmap: counts do not match the grid");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write heatmap " + path.string());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c)
      out << (c ? "," : "") << visits[static_cast<std::size_t>(r * width + c)];
    out << '\n';
  }
}

}  // namespace irf::harness
