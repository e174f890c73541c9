#include <gtest/gtest.h>

#include <cmath>

#include "distana/metrics.hpp"
#include "distana/wavegen.hpp"
#include "oracles/wave_oracle.hpp"

using namespace distana;
using namespace distana::wave;

TEST(InitGaussian, PeakDistanceOneAndZeroAmplitude) {
  ImpulseSpec spec{4.0, 5.0, 1.0, 0.5};
  Tensor u = init_gaussian(spec, 16, 16);
  EXPECT_DOUBLE_EQ(u.at(5, 4), 1.0);
  EXPECT_NEAR(u.at(5, 5), 0.36787944117144233, 1e-15);
  EXPECT_NEAR(u.at(4, 4), std::exp(-1.0), 1e-15);
  spec.amplitude = 0.0;
  for (double v : init_gaussian(spec, 16, 16).values()) EXPECT_EQ(v, 0.0);
}

TEST(InitGaussian, OriginOutsideGridRejected) {
  EXPECT_THROW(init_gaussian(ImpulseSpec{16.0, 2.0, 1.0, 0.5}, 16, 16), ContractError);
  EXPECT_THROW(init_gaussian(ImpulseSpec{2.0, 2.0, 1.0, 0.0}, 16, 16), ContractError);
}

TEST(Step, SingleCellHandExample) {
  const auto v = VelocityField::uniform(5, 5, 1.0);
  Tensor u(Shape{5, 5});
  u.at(2, 2) = 1.0;
  Tensor next = step(u, u, v, WaveParams{});
  EXPECT_NEAR(next.at(2, 2), 0.64, 1e-15);
  for (auto [y, x] : {std::pair{1, 2}, {3, 2}, {2, 1}, {2, 3}}) EXPECT_NEAR(next.at(y, x), 0.09, 1e-15);
  EXPECT_EQ(next.at(1, 1), 0.0);
}

TEST(Step, ZeroFieldIsFixedPoint) {
  const auto v = VelocityField::uniform(8, 8, 0.7);
  Tensor z(Shape{8, 8});
  EXPECT_EQ(step(z, z, v, WaveParams{}), z);
}

TEST(Step, ShapeMismatch) {
  const auto v = VelocityField::uniform(4, 4, 1.0);
  EXPECT_THROW(step(Tensor(Shape{3, 4}), Tensor(Shape{4, 4}), v, WaveParams{}), DimensionError);
}

TEST(Generate, MatchesBruteForceOracle) {
  Rng rng = make_rng(11, "map");
  const std::vector<double> speeds{0.2, 0.3, 0.5, 0.6, 0.7, 0.9};
  const auto v = VelocityField::sample(16, 16, speeds, rng);
  const WaveSequence seq = generate_sequence(70, v, ImpulseSpec{}, 1234);

  oracle::WaveSetup s;
  s.sx = seq.impulse.origin_x;
  s.sy = seq.impulse.origin_y;
  s.speed.assign(16, std::vector<double>(16));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) s.speed[y][x] = v.at(y, x);
  const auto frames = oracle::brute_force_waves(s, 70);
  double worst = 0.0;
  for (int t = 0; t < 70; ++t)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) worst = std::max(worst, std::abs(seq.at(t, y, x) - frames[t][y][x]));
  EXPECT_LT(worst, 1e-12);
}

TEST(Generate, OriginIsInteriorAndSeedDeterministic) {
  const auto v = VelocityField::uniform(16, 16, 1.0);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = generate_sequence(2, v, ImpulseSpec{}, seed);
    EXPECT_GE(s.impulse.origin_x, 1.0);
    EXPECT_LE(s.impulse.origin_x, 14.0);
    EXPECT_GE(s.impulse.origin_y, 1.0);
    EXPECT_LE(s.impulse.origin_y, 14.0);
  }
  EXPECT_EQ(generate_sequence(30, v, ImpulseSpec{}, 5).u, generate_sequence(30, v, ImpulseSpec{}, 5).u);
  EXPECT_NE(generate_sequence(30, v, ImpulseSpec{}, 5).u, generate_sequence(30, v, ImpulseSpec{}, 6).u);
}

TEST(Generate, CentreImpulseKeepsSquareSymmetry) {
  const auto v = VelocityField::uniform(16, 16, 1.0);
  const WaveSequence s = simulate(120, v, ImpulseSpec{7.5, 7.5, 1.0, 0.5});
  for (std::size_t t = 0; t < s.steps; ++t)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const double u = s.at(t, y, x);
        ASSERT_EQ(u, s.at(t, y, 15 - x)) << "t=" << t;
        ASSERT_EQ(u, s.at(t, 15 - y, x)) << "t=" << t;
        ASSERT_EQ(u, s.at(t, x, y)) << "t=" << t;
        ASSERT_EQ(u, s.at(t, 15 - x, 15 - y)) << "t=" << t;
      }
}

TEST(Noise, PowerRatioAndDeterminism) {
  const auto v = VelocityField::uniform(16, 16, 1.0);
  const WaveSequence clean = generate_sequence(140, v, ImpulseSpec{}, 3);
  const WaveSequence noisy = add_noise(clean, 0.25, 9);
  const auto snr = metrics::measure_snr(clean.u, noisy.u);
  EXPECT_NEAR(snr.ratio, 0.25, 0.25 * 0.05);
  EXPECT_EQ(noisy.u, add_noise(clean, 0.25, 9).u);
  EXPECT_EQ(add_noise(clean, std::numeric_limits<double>::infinity(), 9).u, clean.u);
  EXPECT_THROW(add_noise(clean, 0.0, 9), ContractError);
  // sigma_n = 2 RMS at snr 0.25: residual RMS close to twice the signal RMS.
  std::vector<double> diff(clean.u.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = noisy.u[i] - clean.u[i];
  EXPECT_NEAR(rms(diff) / rms(clean.u), 2.0, 0.05);
}

TEST(Velocity, RejectsNonPositive) {
  EXPECT_THROW(VelocityField(2, 2, {1, 0, 1, 1}), ContractError);
  EXPECT_THROW(VelocityField(2, 2, {1, 1, 1}), DimensionError);
}
