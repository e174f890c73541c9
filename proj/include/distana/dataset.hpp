#pragma once

// "DSTA" container for a set of wave sequences sharing one velocity field.
//
//   char[4]  "DSTA"
//   u32      version (1)
//   u32      T, H, W
//   u32      flags       bit 0: a noisy copy follows the clean block
//   u32      count       number of sequences
//   f64[count*T*H*W]     clean fields, sequence-major then t, y, x
//   f64[count*T*H*W]     noisy fields (only if flags bit 0)
//   f64[H*W]             velocity field
//   u32 + bytes          UTF-8 JSON metadata (seeds, generator params)
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "distana/binary_io.hpp"
#include "distana/errors.hpp"
#include "distana/wavegen.hpp"
#include "json.hpp"

namespace distana::wave {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kFlagNoisy = 1u;

struct Dataset {
  std::vector<WaveSequence> clean;
  std::vector<WaveSequence> noisy;  // empty, or one per clean sequence
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const { return clean.size(); }
  bool has_noise() const { return !noisy.empty(); }
  /// What the model observes: the noisy copy when present.
  const WaveSequence& observed(std::size_t i) const { return has_noise() ? noisy[i] : clean[i]; }
  const VelocityField& velocity() const { return clean.front().velocity; }
  std::size_t steps() const { return clean.empty() ? 0 : clean.front().steps; }
};

inline io::Writer encode_dataset(const Dataset& ds) {
  if (ds.clean.empty()) throw ContractError("dataset is empty");
  const WaveSequence& first = ds.clean.front();
  for (const auto& s : ds.clean)
    if (s.steps != first.steps || s.height != first.height || s.width != first.width || !(s.velocity == first.velocity))
      throw ContractError("all sequences in a dataset must share extents and velocity field");
  if (ds.has_noise() && ds.noisy.size() != ds.clean.size())
    throw ContractError("noisy copy must have one entry per clean sequence");

  nlohmann::json meta = ds.meta;
  meta["params"] = {{"c0", first.params.c0}, {"dt", first.params.dt}, {"dx", first.params.dx}, {"dy", first.params.dy}};
  meta["amplitude"] = first.impulse.amplitude;
  meta["sigma2"] = first.impulse.sigma2;
  nlohmann::json origins = nlohmann::json::array(), seeds = nlohmann::json::array();
  for (const auto& s : ds.clean) {
    origins.push_back({s.impulse.origin_x, s.impulse.origin_y});
    seeds.push_back(s.seed);
  }
  meta["origins"] = origins;
  meta["sequence_seeds"] = seeds;

  io::Writer w;
  w.raw("DSTA");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(first.steps));
  w.u32(static_cast<std::uint32_t>(first.height));
  w.u32(static_cast<std::uint32_t>(first.width));
  w.u32(ds.has_noise() ? kFlagNoisy : 0u);
  w.u32(static_cast<std::uint32_t>(ds.clean.size()));
  for (const auto& s : ds.clean) w.f64s(s.u);
  for (const auto& s : ds.noisy) w.f64s(s.u);
  w.f64s(first.velocity.s);
  const std::string text = meta.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  return w;
}

inline void write_dataset(const std::string& path, const Dataset& ds) { encode_dataset(ds).save(path); }

inline Dataset decode_dataset(io::Reader& r) {
  if (r.raw(4) != "DSTA") throw IoError("not a DSTA dataset (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw IoError("unsupported DSTA version " + std::to_string(version));
  const std::size_t steps = r.u32(), height = r.u32(), width = r.u32();
  const std::uint32_t flags = r.u32();
  const std::size_t count = r.u32();
  const std::size_t block = steps * height * width;
  std::vector<std::vector<double>> clean(count), noisy;
  for (auto& c : clean) c = r.f64s(block);
  if (flags & kFlagNoisy) {
    noisy.resize(count);
    for (auto& n : noisy) n = r.f64s(block);
  }
  VelocityField velocity(height, width, r.f64s(height * width));
  const std::uint32_t meta_len = r.u32();
  Dataset ds;
  try {
    ds.meta = nlohmann::json::parse(r.raw(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad DSTA metadata: ") + e.what());
  }
  if (!r.at_end()) throw IoError("trailing bytes after DSTA metadata");

  WaveParams params;
  ImpulseSpec impulse;
  try {
    const auto& p = ds.meta.at("params");
    params = {p.at("c0").get<double>(), p.at("dt").get<double>(), p.at("dx").get<double>(), p.at("dy").get<double>()};
    impulse.amplitude = ds.meta.at("amplitude").get<double>();
    impulse.sigma2 = ds.meta.at("sigma2").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("incomplete DSTA metadata: ") + e.what());
  }
  const auto& origins = ds.meta.value("origins", nlohmann::json::array());
  const auto& seeds = ds.meta.value("sequence_seeds", nlohmann::json::array());
  auto make = [&](std::vector<double> u, std::size_t i) {
    WaveSequence s;
    s.steps = steps;
    s.height = height;
    s.width = width;
    s.u = std::move(u);
    s.velocity = velocity;
    s.params = params;
    s.impulse = impulse;
    if (i < origins.size()) {
      s.impulse.origin_x = origins[i][0].get<double>();
      s.impulse.origin_y = origins[i][1].get<double>();
    }
    if (i < seeds.size()) s.seed = seeds[i].get<std::uint64_t>();
    return s;
  };
  for (std::size_t i = 0; i < count; ++i) ds.clean.push_back(make(std::move(clean[i]), i));
  for (std::size_t i = 0; i < noisy.size(); ++i) ds.noisy.push_back(make(std::move(noisy[i]), i));
  for (const char* k : {"params", "amplitude", "sigma2", "origins", "sequence_seeds"}) ds.meta.erase(k);
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  io::Reader r = io::Reader::load(path);
  return decode_dataset(r);
}

/// One CSV per sequence and time step: <dir>/seq_XXX/t_XXX.csv, H rows of W values.
inline void export_csv(const std::string& dir, const Dataset& ds, bool noisy = false) {
  namespace fs = std::filesystem;
  const auto& seqs = noisy ? ds.noisy : ds.clean;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    std::ostringstream sub;
    sub << "seq_" << std::setw(3) << std::setfill('0') << i;
    const fs::path seq_dir = fs::path(dir) / sub.str();
    std::error_code ec;
    fs::create_directories(seq_dir, ec);
    if (ec) throw IoError("cannot create " + seq_dir.string());
    const WaveSequence& s = seqs[i];
    for (std::size_t t = 0; t < s.steps; ++t) {
      std::ostringstream name;
      name << "t_" << std::setw(3) << std::setfill('0') << t << ".csv";
      std::ofstream out(seq_dir / name.str());
      if (!out) throw IoError("cannot write CSV in " + seq_dir.string());
      out << std::setprecision(17);
      for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) out << (x ? "," : "") << s.at(t, y, x);
        out << '\n';
      }
    }
  }
}

}  // namespace distana::wave
