#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distana/errors.hpp"
#include "distana/tensor.hpp"

namespace distana {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one ordered list of parameter tensors. Shapes are fixed by the
/// first step.
struct AdamState {
  AdamConfig hp;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig config) : hp(config) {}
};

/// One bias-corrected Adam update, parameters visited in order.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      std::span<const std::string> names = {}) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p]->shape() != grads[p].shape())
      throw DimensionError("adam_step: gradient shape mismatch for parameter " + std::to_string(p));
    if (!grads[p].all_finite())
      throw NumericError("adam_step: non-finite gradient for " + (p < names.size() ? names[p] : std::to_string(p)));
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  } else if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state was built for a different parameter list");
  }

  ++state.t;
  const auto& hp = state.hp;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
  }
}

inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  Tensor* p = &param;
  adam_step(std::span<Tensor* const>(&p, 1), std::span<const Tensor>(&grad, 1), state);
}

/// Plain gradient descent, p <- p - lr * g.
struct SgdState {
  double lr = 1e-2;
  std::uint64_t t = 0;
};

inline void sgd_step(Tensor& param, const Tensor& grad, SgdState& state) {
  if (param.shape() != grad.shape()) throw DimensionError("sgd_step: gradient shape mismatch");
  if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient");
  ++state.t;
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= state.lr * grad[i];
}

inline void optimizer_step(Tensor& param, const Tensor& grad, AdamState& s) { adam_step(param, grad, s); }
inline void optimizer_step(Tensor& param, const Tensor& grad, SgdState& s) { sgd_step(param, grad, s); }

}  // namespace distana
