#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "distana/errors.hpp"

namespace distana::metrics {

inline double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DimensionError("mse: size mismatch");
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

/// Regular latitude/longitude grid with rows at cell-centre latitudes
/// -pi/2 + (i + 0.5) * pi / rows, so no row sits on a pole.
class LatGrid {
 public:
  LatGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), weights_(rows) {
    if (rows == 0 || cols == 0) throw DimensionError("LatGrid needs at least one row and column");
    double mean_cos = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean_cos += std::cos(latitude(i));
    mean_cos /= static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) weights_[i] = std::cos(latitude(i)) / mean_cos;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double latitude(std::size_t i) const {
    return -std::numbers::pi / 2.0 + (static_cast<double>(i) + 0.5) * std::numbers::pi / static_cast<double>(rows_);
  }
  /// cos(lat) normalised to mean 1 over rows.
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> weights_;
};

/// sqrt(mean_ij L(i) (pred - target)^2) over a row-major rows x cols field.
inline double lat_weighted_rmse(std::span<const double> pred, std::span<const double> target, const LatGrid& g) {
  const std::size_t n = g.rows() * g.cols();
  if (pred.size() != n || target.size() != n) throw DimensionError("lat_weighted_rmse: field does not match grid");
  double s = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double d = pred[i * g.cols() + j] - target[i * g.cols() + j];
      row += d * d;
    }
    s += g.weight(i) * row;
  }
  return std::sqrt(s / static_cast<double>(n));
}

struct RankCorrelation {
  double rho = 0.0;
  bool defined = false;
  std::string diagnostic;
};

/// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman's rho: Pearson correlation of average ranks.
inline RankCorrelation spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: size mismatch");
  if (a.size() < 2) throw DimensionError("spearman: need at least two samples");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, false, "spearman undefined: an input is constant"};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), true, {}};
}

struct SnrMeasurement {
  double ratio = 0.0;
  bool noise_free = false;  // ratio is +inf
};

/// power(clean) / power(noisy - clean).
inline SnrMeasurement measure_snr(std::span<const double> clean, std::span<const double> noisy) {
  if (clean.size() != noisy.size()) throw DimensionError("measure_snr: size mismatch");
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ps += clean[i] * clean[i];
    const double d = noisy[i] - clean[i];
    pn += d * d;
  }
  if (pn == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {ps / pn, false};
}

}  // namespace distana::metrics
