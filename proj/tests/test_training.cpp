#include <gtest/gtest.h>

#include <cmath>

#include "distana/experiment.hpp"
#include "distana/training.hpp"

using namespace distana;

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  Tensor p = Tensor::vector({1.0, -2.0});
  AdamState s(AdamConfig{1e-3});
  adam_step(p, Tensor::vector({0.0, 0.0}), s);
  EXPECT_EQ(p, Tensor::vector({1.0, -2.0}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::vector({0.0, 0.0, 0.0});
  AdamState s(AdamConfig{1e-3});
  adam_step(p, Tensor::vector({0.5, -3.0, 1e-2}), s);
  EXPECT_NEAR(p[0], -1e-3, 1e-10);
  EXPECT_NEAR(p[1], 1e-3, 1e-10);
  EXPECT_NEAR(p[2], -1e-3, 1e-8);
}

TEST(Adam, OppositeGradientsPullFirstMomentBack) {
  Tensor p = Tensor::vector({0.0});
  AdamState s;
  adam_step(p, Tensor::vector({1.0}), s);
  const double m1 = s.m[0][0];
  adam_step(p, Tensor::vector({-1.0}), s);
  EXPECT_LT(std::abs(s.m[0][0]), std::abs(m1));
  EXPECT_GE(s.v[0][0], 0.0);
}

TEST(Adam, ZeroLearningRateAndNonFiniteGradient) {
  Tensor p = Tensor::vector({0.3});
  AdamState s(AdamConfig{0.0});
  adam_step(p, Tensor::vector({2.0}), s);
  EXPECT_EQ(p[0], 0.3);
  Tensor* ptr = &p;
  std::vector<std::string> names{"W_h"};
  const Tensor bad = Tensor::vector({std::nan("")});
  try {
    adam_step(std::span<Tensor* const>(&ptr, 1), std::span<const Tensor>(&bad, 1), s, names);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("W_h"), std::string::npos);
  }
}

TEST(Presets, Defaults) {
  const auto c = TrainConfig::context_inference();
  EXPECT_EQ(c.epochs, 300u);
  EXPECT_EQ(c.sequences, 100u);
  EXPECT_EQ(c.sequence_length, 70u);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.teacher_steps, 40u);
  EXPECT_EQ(TrainConfig{}.teacher_steps, 0u);
  const auto n = TrainConfig::noise_filtering();
  EXPECT_EQ(n.teacher_steps, 1u);
  EXPECT_EQ(n.epochs, 200u);
  EXPECT_EQ(n.sequence_length, 40u);
  EXPECT_EQ(ReferenceMse::kDistana, 2.35e-3);
  EXPECT_EQ(ReferenceMse::kDistanaAt, 4.23e-4);
  EXPECT_EQ(ReferenceMse::kConvLstm, 5.80e-2);
  EXPECT_EQ(ReferenceMse::kTcn, 4.02e-2);
}

namespace {

ExperimentConfig tiny_constant_speed() {
  ExperimentConfig c = ExperimentConfig::noise_filtering();
  c.data.train_snr = c.data.test_snr = 0.0;
  c.data.height = c.data.width = 8;
  c.data.train_sequences = 4;
  c.data.train_length = 30;
  c.data.test_sequences = 2;
  c.model.pre_dim = 4;
  c.model.lstm_cells = 8;
  c.train.epochs = 3;
  c.train.tf_steps = 20;
  c.train.cl_steps = 20;
  c.tuning.history = 20;
  c.resolve();
  c.validate();
  return c;
}

}  // namespace

TEST(Train, DeterministicForFixedSeed) {
  const ExperimentConfig c = tiny_constant_speed();
  const auto data = experiment::generate(c);
  const auto a = experiment::train_model(c, data.train);
  const auto b = experiment::train_model(c, data.train);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(a.weights, b.weights);
  ExperimentConfig other = c;
  other.train.seed = 1;
  EXPECT_NE(experiment::train_model(other, data.train).weights, a.weights);
}

TEST(Train, LossFallsOnConstantSpeedWaves) {
  ExperimentConfig c = tiny_constant_speed();
  c.data.height = c.data.width = 16;
  c.data.train_sequences = 5;
  c.data.train_length = 40;
  c.model.lstm_cells = 24;
  c.train.epochs = 50;
  c.train.teacher_steps = 0;  // one-step training; the closed-loop preset converges more slowly
  c.resolve();
  const auto data = experiment::generate(c);
  const auto r = experiment::train_model(c, data.train);
  ASSERT_EQ(r.curve.size(), 50u);
  EXPECT_LT(r.curve.back(), 0.1 * r.curve.front());
}

namespace {

// Summed one-step loss of a partly closed-loop unroll, without the tape.
double unroll_loss(const PKWeights& w, const wave::WaveSequence& seq, std::size_t length, std::size_t teacher) {
  const LatticeTopology topo(w.config.height, w.config.width);
  PKState state = PKState::zeros(w.config);
  Tensor previous;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < length; ++k) {
    const Tensor input = k < teacher ? seq.frame(k) : previous;
    previous = lattice_step(w, topo, input, nullptr, state);
    const auto target = seq.frame_span(k + 1);
    double se = 0.0;
    for (std::size_t i = 0; i < previous.size(); ++i) se += (previous[i] - target[i]) * (previous[i] - target[i]);
    total += se / static_cast<double>(previous.size());
  }
  return total;
}

}  // namespace

TEST(SequenceGradients, ClosedLoopTailMatchesFiniteDifferences) {
  ExperimentConfig c = tiny_constant_speed();
  c.data.height = c.data.width = 4;
  c.model.lstm_cells = 4;
  c.resolve();
  const auto data = experiment::generate(c);
  const PKWeights w = PKWeights::init(c.model, 3);
  const std::size_t length = 8, teacher = 3;
  const SequenceGradients g =
      sequence_gradients(w, data.train.clean[0], data.train.clean[0], length, nullptr, true, false, teacher);
  EXPECT_NEAR(g.loss * (length - 1), unroll_loss(w, data.train.clean[0], length, teacher), 1e-14);

  const double eps = 1e-3;
  double worst = 0.0;
  for (std::size_t t = 0; t < PKWeights::kCount; ++t)
    for (std::size_t i = 0; i < w.tensors()[t]->size(); i += 7) {
      auto at = [&](double d) {
        PKWeights p = w;
        (*p.tensors()[t])[i] += d;
        return unroll_loss(p, data.train.clean[0], length, teacher);
      };
      const double num = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      const double ana = g.weights[t][i];
      worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
    }
  EXPECT_LT(worst, 1e-6);

  // Zero teacher steps means a fully teacher-forced unroll.
  const auto forced = sequence_gradients(w, data.train.clean[0], data.train.clean[0], length, nullptr, true, false, 0);
  const auto all = sequence_gradients(w, data.train.clean[0], data.train.clean[0], length, nullptr, true, false, length);
  EXPECT_EQ(forced.loss, all.loss);
  EXPECT_NE(forced.loss, g.loss);
}

TEST(Train, TooShortDatasetRejected) {
  ExperimentConfig c = tiny_constant_speed();
  const auto data = experiment::generate(c);
  TrainConfig tc = c.train;
  tc.sequence_length = 31;
  EXPECT_THROW(train(PKWeights::init(c.model, 1), data.train, tc), ContractError);
}

TEST(Evaluate, ParallelMatchesSerial) {
  const ExperimentConfig c = tiny_constant_speed();
  const auto data = experiment::generate(c);
  const PKWeights w = PKWeights::init(c.model, 3);
  const auto s = evaluate(w, data.test, nullptr, 20, 20, 1);
  const auto p = evaluate(w, data.test, nullptr, 20, 20, 3);
  EXPECT_EQ(s.per_sequence, p.per_sequence);
  EXPECT_EQ(s.mean, p.mean);
}

TEST(Evaluate, SummaryStatistics) {
  const auto r = summarize({1.0, 3.0});
  EXPECT_DOUBLE_EQ(r.mean, 2.0);
  EXPECT_DOUBLE_EQ(r.stddev, 1.0);
}
