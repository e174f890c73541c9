#pragma once

// Cell-by-cell DISTANA forward written from the PK equations with plain
// loops over std::vector. Shares no code with the library's tape ops.

#include <cmath>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // [row][col]

inline Vec matvec(const Mat& W, const Vec& x) {
  Vec out(W.size(), 0.0);
  for (std::size_t r = 0; r < W.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += W[r][c] * x[c];
  return out;
}

inline double sigm(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct PkParams {
  int d = 1, l = 1, m = 4;
  Mat dl_pre, s_pre, x_gates, h_gates, s_gates, dl_post;  // gate rows i, f, o, (u)
  bool has_static = true;
};

struct CellState {
  Vec h, c, lat;
};

/// One synchronous lattice step. dyn[cell] is d-dim, ctx[cell] s-dim.
/// Neighbours in order NW, N, NE, W, E, SW, S, SE; y grows downward.
inline std::vector<Vec> lattice_step(const PkParams& p, int H, int W, const std::vector<Vec>& dyn,
                                     const std::vector<Vec>& ctx, std::vector<CellState>& state) {
  const int dys[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  const int dxs[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  std::vector<CellState> next(state.size());
  std::vector<Vec> out(state.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int cell = y * W + x;
      Vec in = dyn[cell];
      for (int k = 0; k < 8; ++k) {
        const int ny = y + dys[k], nx = x + dxs[k];
        for (int j = 0; j < p.l; ++j)
          in.push_back((ny >= 0 && ny < H && nx >= 0 && nx < W) ? state[ny * W + nx].lat[j] : 0.0);
      }
      Vec pre = matvec(p.dl_pre, in);
      for (double& v : pre) v = std::tanh(v);
      Vec zx = matvec(p.x_gates, pre), zh = matvec(p.h_gates, state[cell].h);
      Vec zs(3 * p.m, 0.0);
      if (p.has_static) {
        Vec sp = matvec(p.s_pre, ctx[cell]);
        for (double& v : sp) v = std::tanh(v);
        zs = matvec(p.s_gates, sp);
      }
      CellState& ns = next[cell];
      ns.h.assign(p.m, 0.0);
      ns.c.assign(p.m, 0.0);
      for (int j = 0; j < p.m; ++j) {
        const double i = sigm(zx[j] + zh[j] + zs[j]);
        const double f = sigm(zx[p.m + j] + zh[p.m + j] + zs[p.m + j]);
        const double o = sigm(zx[2 * p.m + j] + zh[2 * p.m + j] + zs[2 * p.m + j]);
        const double u = std::tanh(zx[3 * p.m + j] + zh[3 * p.m + j]);
        ns.c[j] = i * u + f * state[cell].c[j];
        ns.h[j] = o * std::tanh(ns.c[j]);
      }
      Vec post = matvec(p.dl_post, ns.h);
      for (double& v : post) v = std::tanh(v);
      out[cell].assign(post.begin(), post.begin() + p.d);
      ns.lat.assign(post.begin() + p.d, post.end());
    }
  state = std::move(next);
  return out;
}

}  // namespace oracle
