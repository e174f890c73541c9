#pragma once

// Finite-difference check of the full lattice: random weights, inputs,
// targets and static context on a small grid, loss summed over an unroll.

#include <cstdint>
#include <random>
#include <vector>

#include "distana/autodiff.hpp"
#include "distana/network.hpp"
#include "distana/rng.hpp"

namespace distana {

struct GradcheckSetup {
  std::size_t height = 3;
  std::size_t width = 3;
  std::size_t lstm_cells = 4;
  std::size_t pre_dim = 8;
  std::size_t static_pre_dim = 5;
  std::size_t steps = 3;
  double eps = 3e-3;
  int order = 4;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator so
  // components that vanish to roundoff do not dominate.
  double floor = 1e-6;
};

/// Max relative error over every weight and every static-context entry.
inline double lattice_gradcheck(std::uint64_t seed, const GradcheckSetup& g = {}) {
  NetworkConfig cfg;
  cfg.height = g.height;
  cfg.width = g.width;
  cfg.lstm_cells = g.lstm_cells;
  cfg.pre_dim = g.pre_dim;
  cfg.static_pre_dim = g.static_pre_dim;
  cfg.static_dim = g.static_pre_dim > 0 ? 1 : 0;
  const PKWeights w = PKWeights::init(cfg, derive_seed(seed, "weights"));

  Rng rng = make_rng(seed, "gradcheck");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = unit(rng);
    return t;
  };
  std::vector<Tensor> frames;
  for (std::size_t k = 0; k <= g.steps; ++k) frames.push_back(random({cfg.cells(), 1}));

  std::vector<Tensor> params;
  for (const Tensor* t : w.tensors()) params.push_back(*t);
  if (cfg.has_static()) params.push_back(random({cfg.cells(), 1}));

  const LatticeTopology topo(cfg.height, cfg.width);
  auto loss = [&](ad::Tape& tape, std::span<const ad::Var> p) {
    TapeWeights tw{cfg, p[0], p[1], p[2], p[3], p[4], p[5]};
    std::optional<ad::Var> ctx;
    if (cfg.has_static()) ctx = p[6];
    TapeState state = TapeState::bind(tape, PKState::zeros(cfg));
    std::optional<ad::Var> total;
    for (std::size_t k = 0; k < g.steps; ++k) {
      StepOutput out = lattice_step(tw, topo, tape.constant(frames[k]), ctx, state);
      ad::Var l = ad::mse(out.prediction, tape.constant(frames[k + 1]));
      total = total ? *total + l : l;
      state = out.state;
    }
    return *total;
  };
  return ad::grad_check(loss, params, g.eps, g.floor, g.order);
}

}  // namespace distana
