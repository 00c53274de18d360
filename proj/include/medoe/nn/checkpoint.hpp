#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "medoe/core/errors.hpp"
#include "medoe/nn/approximator.hpp"

namespace medoe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// Versioned container of named flat arrays of 64-bit reals plus a JSON manifest.
//
// Layout (all integers little-endian):
//   magic "MEDOECKP" | u32 version | u64 manifest_bytes | manifest (UTF-8 JSON)
//   u64 array_count | per array: u32 name_bytes | name | u64 count | count x f64
struct Checkpoint {
  static constexpr char kMagic[8] = {'M', 'E', 'D', 'O', 'E', 'C', 'K', 'P'};
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json manifest = nlohmann::json::object();
  std::map<std::string, std::vector<double>> arrays;

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("checkpoint: cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    const std::string m = manifest.dump();
    put<std::uint64_t>(out, m.size());
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    put<std::uint64_t>(out, arrays.size());
    for (const auto& [name, data] : arrays) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint64_t>(out, data.size());
      out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw ConfigError("checkpoint: write failed for " + path.string());
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
      throw ConfigError("checkpoint: bad magic in " + path.string());
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    std::string m(get<std::uint64_t>(in), '\0');
    in.read(m.data(), static_cast<std::streamsize>(m.size()));
    c.manifest = nlohmann::json::parse(m);
    const auto n = get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string name(get<std::uint32_t>(in), '\0');
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      std::vector<double> data(get<std::uint64_t>(in));
      in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
      if (!in) throw ConfigError("checkpoint: truncated file " + path.string());
      c.arrays.emplace(std::move(name), std::move(data));
    }
    return c;
  }

 private:
  template <class T>
  static void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  static T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ConfigError("checkpoint: truncated header");
    return v;
  }
};

// `role` is the manifest kind: actor, critic, prior or classifier.
inline Checkpoint to_checkpoint(const FunctionApproximator& f, const std::string& role) {
  Checkpoint c;
  c.manifest["kind"] = role;
  c.manifest["approximator"] = to_string(f.kind());
  c.manifest["input_dim"] = f.input_dim();
  c.manifest["output_dim"] = f.output_dim();
  c.manifest["num_states"] = f.num_states();
  c.manifest["hidden_sizes"] = f.hidden();
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& a : f.named_arrays()) {
    shapes[a.name] = a.shape;
    c.arrays[a.name] = std::vector<double>(f.params().data() + a.offset, f.params().data() + a.offset + a.count);
  }
  c.manifest["shapes"] = shapes;
  return c;
}

inline FunctionApproximator from_checkpoint(const Checkpoint& c) {
  const auto& m = c.manifest;
  const std::string kind = m.at("approximator").get<std::string>();
  FunctionApproximator f = FunctionApproximator::with_architecture(
      kind == "tabular" ? ApproxKind::tabular : ApproxKind::mlp, m.at("input_dim").get<int>(),
      m.at("hidden_sizes").get<std::vector<int>>(), m.at("output_dim").get<int>(), m.at("num_states").get<int>());
  for (const auto& a : f.named_arrays()) {
    auto it = c.arrays.find(a.name);
    if (it == c.arrays.end()) throw ConfigError("checkpoint: missing array '" + a.name + "'");
    if (static_cast<Eigen::Index>(it->second.size()) != a.count)
      throw ConfigError("checkpoint: array '" + a.name + "' has the wrong size");
    std::copy(it->second.begin(), it->second.end(), f.params().data() + a.offset);
  }
  return f;
}

inline void save_approximator(const std::filesystem::path& path, const FunctionApproximator& f,
                              const std::string& role) {
  to_checkpoint(f, role).save(path);
}

inline FunctionApproximator load_approximator(const std::filesystem::path& path) {
  return from_checkpoint(Checkpoint::load(path));
}

}  // namespace medoe
