#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "distana/network.hpp"
#include "oracles/lattice_oracle.hpp"

using namespace distana;

namespace {

NetworkConfig small_config(std::size_t h, std::size_t w, std::size_t m = 4, bool with_static = true) {
  NetworkConfig c;
  c.height = h;
  c.width = w;
  c.lstm_cells = m;
  if (!with_static) c.static_dim = c.static_pre_dim = 0;
  return c;
}

Tensor random_field(std::size_t cells, std::uint64_t seed, std::string_view name, double scale = 1.0) {
  Rng rng = make_rng(seed, name);
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(Shape{cells, 1});
  for (double& v : t.values()) v = u(rng);
  return t;
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

}  // namespace

TEST(ParamCount, FormulaValues) {
  EXPECT_EQ(param_count(small_config(16, 16, 12, false)), 1056u);  // 72 + 384 + 576 + 24
  NetworkConfig ones;
  ones.pre_dim = ones.lstm_cells = 1;
  ones.static_dim = ones.static_pre_dim = 0;
  EXPECT_EQ(param_count(ones), 19u);
  NetworkConfig context;
  EXPECT_EQ(param_count(context), 1241u);
  NetworkConfig noise = small_config(16, 16, 24, false);
  noise.pre_dim = 4;
  EXPECT_EQ(param_count(noise), 2772u);
  for (const NetworkConfig& c : {context, noise, ones}) EXPECT_EQ(PKWeights::zeros(c).size(), param_count(c));
  NetworkConfig doubled = context;
  doubled.lstm_cells *= 2;
  EXPECT_GT(param_count(doubled), 2 * param_count(context));
}

TEST(NetworkConfig, RejectsHalfDisabledStaticPath) {
  NetworkConfig c;
  c.static_pre_dim = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = NetworkConfig{};
  c.lstm_cells = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(PK, ZeroWeightsGiveZeroOutputAndHalveCell) {
  const NetworkConfig cfg = small_config(3, 3);
  const PKWeights w = PKWeights::zeros(cfg);
  ad::Tape tape;
  TapeWeights tw = TapeWeights::bind(tape, w, false);
  PKState s = PKState::zeros(cfg);
  for (double& v : s.c.values()) v = 0.8;
  const LatticeTopology topo(3, 3);
  StepOutput out = lattice_step(tw, topo, tape.constant(random_field(9, 1, "x")),
                                tape.constant(random_field(9, 1, "s")), TapeState::bind(tape, s));
  for (double v : out.prediction.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : out.state.c.value().values()) EXPECT_DOUBLE_EQ(v, 0.4);
  for (double v : out.state.h.value().values()) EXPECT_DOUBLE_EQ(v, 0.5 * std::tanh(0.4));
}

TEST(PK, ScalarLstmByHand) {
  NetworkConfig cfg;
  cfg.pre_dim = cfg.lstm_cells = 1;
  cfg.static_dim = cfg.static_pre_dim = 0;
  cfg.height = cfg.width = 1;
  PKWeights w = PKWeights::zeros(cfg);
  w.x_gates = Tensor::matrix(4, 1, {0.5, -0.3, 0.2, 0.9});
  w.h_gates = Tensor::matrix(4, 1, {0.1, 0.4, -0.6, 0.3});
  ad::Tape tape;
  TapeWeights tw = TapeWeights::bind(tape, w, false);
  const double x = 0.7, h0 = -0.2, c0 = 0.35;
  auto r = lstm_forward(tw, tape.constant(Tensor::matrix(1, 1, {x})), std::nullopt,
                        tape.constant(Tensor::matrix(1, 1, {h0})), tape.constant(Tensor::matrix(1, 1, {c0})));
  auto sg = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double i = sg(0.5 * x + 0.1 * h0), f = sg(-0.3 * x + 0.4 * h0), o = sg(0.2 * x - 0.6 * h0);
  const double u = std::tanh(0.9 * x + 0.3 * h0);
  const double c = i * u + f * c0;
  EXPECT_NEAR(r.c.value().item(), c, 1e-15);
  EXPECT_NEAR(r.h.value().item(), o * std::tanh(c), 1e-15);
}

TEST(Lattice, MatchesPerCellOracle) {
  const NetworkConfig cfg = small_config(3, 3, 4);
  const PKWeights w = PKWeights::init(cfg, 77);
  oracle::PkParams p;
  p.m = 4;
  p.dl_pre = to_mat(w.dl_pre);
  p.s_pre = to_mat(w.s_pre);
  p.x_gates = to_mat(w.x_gates);
  p.h_gates = to_mat(w.h_gates);
  p.s_gates = to_mat(w.s_gates);
  p.dl_post = to_mat(w.dl_post);

  const Tensor ctx = random_field(9, 3, "ctx");
  std::vector<oracle::Vec> octx(9);
  for (int c = 0; c < 9; ++c) octx[c] = {ctx[c]};
  std::vector<oracle::CellState> ostate(9, {oracle::Vec(4, 0.0), oracle::Vec(4, 0.0), oracle::Vec(1, 0.0)});
  PKState state = PKState::zeros(cfg);
  const LatticeTopology topo(3, 3);
  for (int t = 0; t < 3; ++t) {
    const Tensor x = random_field(9, 10 + t, "x");
    std::vector<oracle::Vec> ox(9);
    for (int c = 0; c < 9; ++c) ox[c] = {x[c]};
    const auto expected = oracle::lattice_step(p, 3, 3, ox, octx, ostate);
    const Tensor got = lattice_step(w, topo, x, &ctx, state);
    for (int c = 0; c < 9; ++c) EXPECT_NEAR(got[c], expected[c][0], 1e-12) << "step " << t << " cell " << c;
    for (int c = 0; c < 9; ++c) EXPECT_NEAR(state.lateral[c], ostate[c].lat[0], 1e-12);
  }
}

TEST(Lattice, InformationTravelsOneCellPerStep) {
  const NetworkConfig cfg = small_config(9, 9, 4, false);
  const PKWeights w = PKWeights::init(cfg, 5);
  const LatticeTopology topo(9, 9);
  const std::size_t centre = 4 * 9 + 4;
  const int k = 2;
  PKState a = PKState::zeros(cfg), b = PKState::zeros(cfg);
  for (int t = 1; t <= k + 2; ++t) {
    Tensor x = random_field(81, t, "x");
    Tensor y = x;
    for (std::size_t c = 0; c < 81; ++c) {
      const int dy = std::abs(static_cast<int>(c / 9) - 4), dx = std::abs(static_cast<int>(c % 9) - 4);
      if (std::max(dy, dx) > k) y[c] = 0.0;
    }
    const Tensor pa = lattice_step(w, topo, x, nullptr, a);
    const Tensor pb = lattice_step(w, topo, y, nullptr, b);
    if (t <= k + 1)
      EXPECT_EQ(pa[centre], pb[centre]) << "step " << t;
    else
      EXPECT_NE(pa[centre], pb[centre]) << "step " << t;
  }
}

TEST(Lattice, CellOrderDoesNotMatter) {
  const NetworkConfig cfg = small_config(4, 5, 6);
  const PKWeights w = PKWeights::init(cfg, 8);
  const LatticeTopology topo(4, 5);
  const Tensor x = random_field(20, 1, "x"), ctx = random_field(20, 2, "ctx");
  PKState state = PKState::zeros(cfg);
  lattice_step(w, topo, random_field(20, 3, "warm"), &ctx, state);  // non-trivial laterals
  PKState copy = state;
  const Tensor whole = lattice_step(w, topo, x, &ctx, copy);

  // Same step, one cell at a time in a shuffled order, from gathered inputs.
  std::vector<std::size_t> order(20);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937(4));
  for (std::size_t cell : order) {
    ad::Tape tape;
    TapeWeights tw = TapeWeights::bind(tape, w, false);
    Tensor lat(Shape{1, 8});
    for (std::size_t k = 0; k < 8; ++k) {
      const int n = topo.neighbour(cell, k);
      lat[k] = n < 0 ? 0.0 : state.lateral[static_cast<std::size_t>(n)];
    }
    Tensor h(Shape{1, 6}), c(Shape{1, 6});
    for (std::size_t j = 0; j < 6; ++j) {
      h[j] = state.h.at(cell, j);
      c[j] = state.c.at(cell, j);
    }
    TapeState st{tape.constant(h), tape.constant(c), tape.constant(Tensor(Shape{1, 1}))};
    PKOutput out = pk_forward(tw, tape.constant(Tensor::matrix(1, 1, {x[cell]})), tape.constant(lat),
                              tape.constant(Tensor::matrix(1, 1, {ctx[cell]})), st);
    EXPECT_EQ(out.dynamic.value().item(), whole[cell]);
  }
}

TEST(Lattice, OutputsBoundedEvenForLargeWeights) {
  const NetworkConfig cfg = small_config(5, 5, 6);
  PKWeights w = PKWeights::init(cfg, 2);
  for (Tensor* t : w.tensors())
    for (double& v : t->values()) v *= 3.0;
  const LatticeTopology topo(5, 5);
  PKState state = PKState::zeros(cfg);
  const Tensor ctx = random_field(25, 2, "ctx", 5.0);
  for (int t = 0; t < 10; ++t) {
    const Tensor p = lattice_step(w, topo, random_field(25, t, "x", 5.0), &ctx, state);
    for (double v : p.values()) EXPECT_LT(std::abs(v), 1.0);
    for (double v : state.lateral.values()) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(Lattice, ZeroStaticGatesIgnoreContext) {
  const NetworkConfig cfg = small_config(4, 4, 5);
  PKWeights w = PKWeights::init(cfg, 6);
  w.s_gates.fill(0.0);
  const LatticeTopology topo(4, 4);
  PKState a = PKState::zeros(cfg), b = PKState::zeros(cfg);
  const Tensor c1 = random_field(16, 1, "c1"), c2 = random_field(16, 2, "c2");
  for (int t = 0; t < 4; ++t) {
    const Tensor x = random_field(16, t, "x");
    EXPECT_EQ(lattice_step(w, topo, x, &c1, a), lattice_step(w, topo, x, &c2, b));
  }
}

TEST(Lattice, MissingContextIsContractError) {
  const NetworkConfig cfg = small_config(3, 3);
  const PKWeights w = PKWeights::init(cfg, 1);
  PKState s = PKState::zeros(cfg);
  EXPECT_THROW(lattice_step(w, LatticeTopology(3, 3), random_field(9, 1, "x"), nullptr, s), ContractError);
}

TEST(Rollout, WindowAndPerfectModel) {
  const NetworkConfig cfg = small_config(4, 4, 3, false);
  const PKWeights w = PKWeights::zeros(cfg);
  wave::WaveSequence seq;
  seq.steps = 10;
  seq.height = seq.width = 4;
  seq.u.assign(10 * 16, 0.0);
  seq.velocity = wave::VelocityField::uniform(4, 4, 1.0);
  // A zero model on an all-zero sequence is exact.
  EXPECT_EQ(rollout(seq, w, nullptr, 5, 5).mse_closed_loop, 0.0);
  EXPECT_THROW(rollout(seq, w, nullptr, 5, 6), WindowError);
  // Zero model against a non-zero target: MSE is the mean squared target
  // over the closed-loop frames.
  for (std::size_t i = 0; i < seq.u.size(); ++i) seq.u[i] = 0.01 * static_cast<double>(i % 7);
  double expect = 0.0;
  for (std::size_t t = 5; t < 10; ++t)
    for (double v : seq.frame_span(t)) expect += v * v;
  expect /= 5.0 * 16.0;
  const auto r = rollout(seq, w, nullptr, 5, 5);
  EXPECT_NEAR(r.mse_closed_loop, expect, 1e-15);
  EXPECT_EQ(r.predictions.size(), 9u);
}
