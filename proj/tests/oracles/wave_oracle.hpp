#pragma once

// Naive transcription of the finite-difference wave scheme, kept apart from
// the library: padded grid, nested loops, one array per time step.

#include <cmath>
#include <vector>

namespace oracle {

using Field = std::vector<std::vector<double>>;  // [y][x]

struct WaveSetup {
  int H = 16, W = 16;
  double c = 3.0, dt = 0.1, dx = 1.0, dy = 1.0;
  double a = 1.0, sx = 0.0, sy = 0.0, sigx2 = 0.5, sigy2 = 0.5;
  std::vector<std::vector<double>> speed;  // [y][x] multiplier on c
};

inline double padded(const Field& u, int y, int x, int H, int W) {
  if (x < 0 || x > W - 1 || y < 0 || y > H - 1) return 0.0;
  return u[y][x];
}

/// T frames; frames[t][y][x].
inline std::vector<Field> brute_force_waves(const WaveSetup& s, int T) {
  std::vector<Field> frames;
  Field u0(s.H, std::vector<double>(s.W));
  for (int y = 0; y < s.H; ++y)
    for (int x = 0; x < s.W; ++x)
      u0[y][x] = s.a * std::exp(-((x - s.sx) * (x - s.sx) / (2 * s.sigx2) + (y - s.sy) * (y - s.sy) / (2 * s.sigy2)));
  frames.push_back(u0);
  Field before = u0;  // u(t - dt) = u(0)
  for (int t = 1; t < T; ++t) {
    const Field& now = frames.back();
    Field next(s.H, std::vector<double>(s.W));
    for (int y = 0; y < s.H; ++y)
      for (int x = 0; x < s.W; ++x) {
        double uxx = (padded(now, y, x + 1, s.H, s.W) - 2 * now[y][x] + padded(now, y, x - 1, s.H, s.W)) / (s.dx * s.dx);
        double uyy = (padded(now, y + 1, x, s.H, s.W) - 2 * now[y][x] + padded(now, y - 1, x, s.H, s.W)) / (s.dy * s.dy);
        double c = s.c * s.speed[y][x];
        next[y][x] = c * c * s.dt * s.dt * (uxx + uyy) + 2 * now[y][x] - before[y][x];
      }
    before = now;
    frames.push_back(next);
  }
  return frames;
}

}  // namespace oracle
