#pragma once

// Finite-difference 2D wave generator with a locally varying speed factor.
//
//   u(t+dt) = (c0 * s(x,y) * dt)^2 * (u_xx + u_yy) + 2 u(t) - u(t-dt)
//
// u_xx, u_yy are second-order central differences; neighbours outside the grid
// read as zero. The first frame is a Gaussian bump and u(-dt) = u(0).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "distana/errors.hpp"
#include "distana/rng.hpp"
#include "distana/tensor.hpp"

namespace distana::wave {

struct WaveParams {
  double c0 = 3.0;
  double dt = 0.1;
  double dx = 1.0;
  double dy = 1.0;
};

/// Per-cell propagation speed factor, row-major [height x width].
struct VelocityField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> s;

  VelocityField() = default;
  VelocityField(std::size_t h, std::size_t w, std::vector<double> values)
      : height(h), width(w), s(std::move(values)) {
    validate();
  }

  static VelocityField uniform(std::size_t h, std::size_t w, double value) {
    return VelocityField(h, w, std::vector<double>(h * w, value));
  }

  /// Draws every cell i.i.d. uniformly from `choices`.
  static VelocityField sample(std::size_t h, std::size_t w, std::span<const double> choices, Rng& rng) {
    if (choices.empty()) throw ContractError("velocity choices must not be empty");
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    std::vector<double> values(h * w);
    for (double& v : values) v = choices[pick(rng)];
    return VelocityField(h, w, std::move(values));
  }

  double at(std::size_t y, std::size_t x) const { return s[y * width + x]; }

  void validate() const {
    if (s.size() != height * width)
      throw DimensionError("velocity field has " + std::to_string(s.size()) + " values for " +
                           std::to_string(height) + "x" + std::to_string(width));
    for (double v : s)
      if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("velocity factors must be positive");
  }

  Tensor as_tensor() const { return Tensor(Shape{height * width, 1}, s); }

  friend bool operator==(const VelocityField&, const VelocityField&) = default;
};

struct ImpulseSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double amplitude = 1.0;
  double sigma2 = 0.5;
};

/// T frames of H x W elevations plus everything needed to regenerate them.
struct WaveSequence {
  std::size_t steps = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> u;  // [steps][height][width]
  VelocityField velocity;
  WaveParams params;
  ImpulseSpec impulse;
  std::uint64_t seed = 0;

  std::size_t cells() const { return height * width; }
  std::span<const double> frame_span(std::size_t t) const {
    return std::span<const double>(u).subspan(t * cells(), cells());
  }
  /// Frame t as a [cells x 1] column, the layout the lattice consumes.
  Tensor frame(std::size_t t) const {
    auto f = frame_span(t);
    return Tensor(Shape{cells(), 1}, std::vector<double>(f.begin(), f.end()));
  }
  double at(std::size_t t, std::size_t y, std::size_t x) const { return u[(t * height + y) * width + x]; }
};

/// a * exp(-((x-sx)^2 + (y-sy)^2) / (2 sigma2)) on an H x W grid.
inline Tensor init_gaussian(const ImpulseSpec& spec, std::size_t height, std::size_t width) {
  if (!(spec.sigma2 > 0.0)) throw ContractError("impulse sigma2 must be positive");
  if (spec.origin_x < 0.0 || spec.origin_y < 0.0 || spec.origin_x > static_cast<double>(width) - 1.0 ||
      spec.origin_y > static_cast<double>(height) - 1.0)
    throw ContractError("impulse origin outside the grid");
  Tensor u(Shape{height, width});
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double ddx = static_cast<double>(x) - spec.origin_x;
      const double ddy = static_cast<double>(y) - spec.origin_y;
      u.at(y, x) = spec.amplitude * std::exp(-(ddx * ddx / (2.0 * spec.sigma2) + ddy * ddy / (2.0 * spec.sigma2)));
    }
  return u;
}

/// One leapfrog update. `u_t` and `u_prev` are [H x W] (any rank-2 or flat
/// layout with H*W entries).
inline Tensor step(const Tensor& u_t, const Tensor& u_prev, const VelocityField& v, const WaveParams& p) {
  const std::size_t h = v.height, w = v.width;
  if (u_t.size() != h * w || u_prev.size() != h * w)
    throw DimensionError("wave step: field sizes do not match the velocity grid");
  Tensor next(u_t.shape());
  const double inv_dx2 = 1.0 / (p.dx * p.dx);
  const double inv_dy2 = 1.0 / (p.dy * p.dy);
  auto read = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return u_t[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto yi = static_cast<std::ptrdiff_t>(y), xi = static_cast<std::ptrdiff_t>(x);
      const double c = read(yi, xi);
      // Neighbour pairs are summed first so mirrored cells see bit-identical sums.
      const double uxx = ((read(yi, xi - 1) + read(yi, xi + 1)) - 2.0 * c) * inv_dx2;
      const double uyy = ((read(yi - 1, xi) + read(yi + 1, xi)) - 2.0 * c) * inv_dy2;
      const double speed = p.c0 * v.at(y, x) * p.dt;
      next[y * w + x] = speed * speed * (uxx + uyy) + 2.0 * c - u_prev[y * w + x];
    }
  return next;
}

/// Runs T frames from a fixed impulse with zero initial velocity.
inline WaveSequence simulate(std::size_t steps, const VelocityField& v, const ImpulseSpec& spec,
                             const WaveParams& params = {}) {
  if (steps < 1) throw ContractError("sequence length must be at least 1");
  v.validate();
  WaveSequence seq;
  seq.steps = steps;
  seq.height = v.height;
  seq.width = v.width;
  seq.velocity = v;
  seq.params = params;
  seq.impulse = spec;
  seq.u.reserve(steps * v.height * v.width);

  Tensor current = init_gaussian(spec, v.height, v.width);
  Tensor previous = current;
  seq.u.insert(seq.u.end(), current.storage().begin(), current.storage().end());
  for (std::size_t t = 1; t < steps; ++t) {
    Tensor next = step(current, previous, v, params);
    seq.u.insert(seq.u.end(), next.storage().begin(), next.storage().end());
    previous = std::move(current);
    current = std::move(next);
  }
  return seq;
}

/// Simulates with the impulse origin drawn uniformly over interior cells.
/// Amplitude and width come from `spec`; its origin is ignored.
inline WaveSequence generate_sequence(std::size_t steps, const VelocityField& v, ImpulseSpec spec,
                                      std::uint64_t seed, const WaveParams& params = {}) {
  Rng rng = make_rng(seed, "impulse");
  const std::size_t lo = v.width > 2 ? 1 : 0, hi_x = v.width > 2 ? v.width - 2 : v.width - 1;
  const std::size_t lo_y = v.height > 2 ? 1 : 0, hi_y = v.height > 2 ? v.height - 2 : v.height - 1;
  std::uniform_int_distribution<std::size_t> px(lo, hi_x), py(lo_y, hi_y);
  spec.origin_x = static_cast<double>(px(rng));
  spec.origin_y = static_cast<double>(py(rng));
  WaveSequence seq = simulate(steps, v, spec, params);
  seq.seed = seed;
  return seq;
}

inline double rms(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return values.empty() ? 0.0 : std::sqrt(s / static_cast<double>(values.size()));
}

/// Adds i.i.d. Gaussian noise with std RMS(signal)/sqrt(snr) over the whole
/// sequence, so signal power / noise power = snr in expectation.
inline WaveSequence add_noise(const WaveSequence& seq, double snr, std::uint64_t seed) {
  if (!(snr > 0.0)) throw ContractError("snr must be positive");
  WaveSequence out = seq;
  if (std::isinf(snr)) return out;
  const double sigma = rms(seq.u) / std::sqrt(snr);
  Rng rng = make_rng(seed, "noise");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.u) v += sigma * normal(rng);
  return out;
}

}  // namespace distana::wave
