#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

#include "irf/harness/config.hpp"
#include "irf/nn/networks.hpp"
#include "irf/tensor/param_set.hpp"

namespace irf::harness {

/// Learned reward (eta) and lifetime value (phi) parameters plus the
/// configuration that produced them.
///
/// Layout, all integers little-endian:
///   "IRFV1", u32 version, u64 seed, u64 meta-updates done,
///   u32 n + n bytes config text, u32 tensor count, then per tensor
///   u32 n + n bytes name, u32 rank, rank x u32 dims, f64 values.
/// Tensor names carry an "eta/" or "phi/" prefix.
struct Checkpoint {
  static constexpr std::string_view kMagic = "IRFV1";
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t seed = 0;
  std::uint64_t updates = 0;
  ParamSet<double> eta;
  ParamSet<double> phi;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

template <class T>
ParamSet<double> to_double(const ParamSet<T>& p) {
  ParamSet<double> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Tensor<double> t(p[i].shape());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<double>(p[i][j]);
    out.add(p.name(i), std::move(t));
  }
  return out;
}

template <class T>
ParamSet<T> from_double(const ParamSet<double>& p) {
  ParamSet<T> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    Tensor<T> t(p[i].shape());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<T>(p[i][j]);
    out.add(p.name(i), std::move(t));
  }
  return out;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view take(std::size_t n) {
    if (data_.size() - pos_ < n) throw ConfigError("checkpoint truncated");
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int bytes) {
    const auto s = take(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[static_cast<std::size_t>(i)]))
           << (8 * i);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::string str() { return std::string(take(u32())); }
  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& c) {
  std::string out(Checkpoint::kMagic);
  detail::put_u32(out, Checkpoint::kVersion);
  detail::put_u64(out, c.seed);
  detail::put_u64(out, c.updates);
  detail::put_str(out, c.config_text);
  detail::put_u32(out, static_cast<std::uint32_t>(c.eta.size() + c.phi.size()));
  auto put_set = [&](const ParamSet<double>& p, std::string_view prefix) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      detail::put_str(out, std::string(prefix) + p.name(i));
      const auto& s = p[i].shape();
      detail::put_u32(out, static_cast<std::uint32_t>(s.rank()));
      for (int d = 0; d < s.rank(); ++d) detail::put_u32(out, static_cast<std::uint32_t>(s[d]));
      for (double v : p[i].data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  };
  put_set(c.eta, "eta/");
  put_set(c.phi, "phi/");
  return out;
}

inline Checkpoint deserialize(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(Checkpoint::kMagic.size()) != Checkpoint::kMagic)
    throw ConfigError("not a checkpoint: bad magic");
  const auto version = r.u32();
  if (version != Checkpoint::kVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.seed = r.u64();
  c.updates = r.u64();
  c.config_text = r.str();
  const auto count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.str();
    const auto rank = r.u32();
    if (rank > 4) throw ConfigError("checkpoint tensor '" + name + "' has rank " +
                                    std::to_string(rank));
    std::vector<int> dims;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      dims.push_back(static_cast<int>(r.u32()));
      n *= static_cast<std::size_t>(dims.back());
    }
    if (n > r.remaining() / 8) throw ConfigError("checkpoint truncated");
    Tensor<double> t{Shape(dims.begin(), dims.end())};
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<double>(r.u64());
    if (name.starts_with("eta/"))
      c.eta.add(name.substr(4), std::move(t));
    else if (name.starts_with("phi/"))
      c.phi.add(name.substr(4), std::move(t));
    else
      throw ConfigError("checkpoint tensor '" + name + "' has no eta/ or phi/ prefix");
  }
  if (!r.done()) throw ConfigError("checkpoint has trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write checkpoint " + tmp);
    const auto bytes = serialize(c);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ConfigError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

/// Throws ShapeError unless eta and phi have exactly the names and shapes the
/// architecture declares.
inline void validate_checkpoint(const Checkpoint& c, const nn::Arch& arch,
                                nn::RewardInput input) {
  CounterRng probe(0);
  auto check = [](const ParamSet<double>& got, const ParamSet<double>& want,
                  std::string_view what) {
    if (got.size() != want.size())
      throw ShapeError(std::string(what) + ": checkpoint has " + std::to_string(got.size()) +
                       " tensors, architecture declares " + std::to_string(want.size()));
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (got.name(i) != want.name(i) || !(got[i].shape() == want[i].shape()))
        throw ShapeError(std::string(what) + ": tensor '" + got.name(i) + "' " +
                         got[i].shape().str() + " does not match '" + want.name(i) + "' " +
                         want[i].shape().str());
    }
  };
  check(c.eta, nn::init_reward<double>(arch, input, probe), "eta");
  check(c.phi, nn::init_recurrent<double>(arch, probe), "phi");
}

}  // namespace irf::harness
