#pragma once

// Heatmap artifacts: 8-bit PGM (min-max scaled), a CSV twin with the raw
// values, and a JSON sidecar holding the scale so the PGM can be read back
// into physical units.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <string>

#include "distana/errors.hpp"
#include "json.hpp"

namespace distana::exporter {

struct MapScale {
  double min = 0.0;
  double max = 0.0;
};

inline MapScale map_scale(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

/// Binary PGM (P5). A constant map is written as mid-grey.
inline MapScale write_pgm(const std::string& path, std::span<const double> values, std::size_t height,
                          std::size_t width) {
  if (values.size() != height * width) throw DimensionError("write_pgm: map does not match extents");
  const MapScale s = map_scale(values);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  const double range = s.max - s.min;
  for (double v : values) {
    const double t = range > 0.0 ? (v - s.min) / range : 0.5;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0))));
  }
  if (!out) throw IoError("failed writing " + path);
  return s;
}

inline void write_map_csv(const std::string& path, std::span<const double> values, std::size_t height,
                          std::size_t width) {
  if (values.size() != height * width) throw DimensionError("write_map_csv: map does not match extents");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out << (x ? "," : "") << values[y * width + x];
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

/// Writes <stem>.pgm, <stem>.csv and <stem>.json.
inline MapScale write_heatmap(const std::string& stem, std::span<const double> values, std::size_t height,
                              std::size_t width) {
  const MapScale s = write_pgm(stem + ".pgm", values, height, width);
  write_map_csv(stem + ".csv", values, height, width);
  std::ofstream side(stem + ".json", std::ios::trunc);
  if (!side) throw IoError("cannot open " + stem + ".json for writing");
  side << nlohmann::json{{"min", s.min}, {"max", s.max}, {"height", height}, {"width", width}}.dump(2) << '\n';
  return s;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace distana::exporter
