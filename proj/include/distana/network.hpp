#pragma once

// DISTANA: one prediction kernel (PK) with shared weights at every lattice
// cell. Per cell and step:
//
//   dl_pre   = tanh(W_dl_pre [d_in | lateral_in])
//   s_pre    = tanh(W_s_pre s)
//   i,f,o    = sigmoid(W_x dl_pre + W_s s_pre + W_h h)     (static path only here)
//   u        = tanh(W_x dl_pre + W_h h)
//   c        = i*u + f*c_prev,  h = o*tanh(c)
//   [d | l]  = tanh(W_dl_post h)
//
// No bias terms anywhere. Gate matrices are stored stacked in the order
// i, f, o, u (static gates: i, f, o) so each step needs one product per input.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "distana/autodiff.hpp"
#include "distana/errors.hpp"
#include "distana/lattice.hpp"
#include "distana/rng.hpp"
#include "distana/tensor.hpp"
#include "distana/wavegen.hpp"

namespace distana {

struct NetworkConfig {
  std::size_t dynamic_dim = 1;
  std::size_t lateral_dim = 1;
  std::size_t static_dim = 1;
  std::size_t pre_dim = 8;
  std::size_t lstm_cells = 12;
  std::size_t static_pre_dim = 5;
  std::size_t height = 16;
  std::size_t width = 16;

  bool has_static() const { return static_dim > 0 && static_pre_dim > 0; }
  std::size_t cells() const { return height * width; }

  void validate() const {
    if (dynamic_dim < 1 || lateral_dim < 1 || pre_dim < 1 || lstm_cells < 1 || height < 1 || width < 1)
      throw ContractError("network dimensions d, l, pre, m and the grid extents must be >= 1");
    if ((static_dim == 0) != (static_pre_dim == 0))
      throw ContractError("static input and static preprocessing widths must be both zero or both positive");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Number of trainable weights; a pure function of the dimensions.
inline std::size_t param_count(const NetworkConfig& c) {
  const std::size_t d = c.dynamic_dim, l = c.lateral_dim, m = c.lstm_cells;
  return (d + kNeighbourSlots * l) * c.pre_dim + 4 * c.pre_dim * m + 4 * m * m + c.static_dim * c.static_pre_dim +
         3 * c.static_pre_dim * m + m * (d + l);
}

/// The single shared PK parameter set.
struct PKWeights {
  NetworkConfig config;
  Tensor dl_pre;   // [pre x (d + 8l)]
  Tensor s_pre;    // [s_pre x s]
  Tensor x_gates;  // [4m x pre]     i, f, o, u
  Tensor h_gates;  // [4m x m]       i, f, o, u
  Tensor s_gates;  // [3m x s_pre]   i, f, o
  Tensor dl_post;  // [(d + l) x m]

  static constexpr std::size_t kCount = 6;
  static constexpr std::array<const char*, kCount> kNames{"W_dl_pre", "W_s_pre", "W_x", "W_h", "W_s", "W_dl_post"};

  static PKWeights zeros(const NetworkConfig& c) {
    c.validate();
    const std::size_t d = c.dynamic_dim, l = c.lateral_dim, m = c.lstm_cells;
    PKWeights w;
    w.config = c;
    w.dl_pre = Tensor::zeros({c.pre_dim, d + kNeighbourSlots * l});
    w.s_pre = Tensor::zeros({c.static_pre_dim, c.static_dim});
    w.x_gates = Tensor::zeros({4 * m, c.pre_dim});
    w.h_gates = Tensor::zeros({4 * m, m});
    w.s_gates = Tensor::zeros({3 * m, c.static_pre_dim});
    w.dl_post = Tensor::zeros({d + l, m});
    return w;
  }

  /// Uniform in +-1/sqrt(fan_in) per matrix.
  static PKWeights init(const NetworkConfig& c, std::uint64_t seed) {
    PKWeights w = zeros(c);
    Rng rng = make_rng(seed, "init");
    for (Tensor* t : w.tensors()) {
      if (t->size() == 0) continue;
      const double bound = 1.0 / std::sqrt(static_cast<double>(t->shape()[1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : t->values()) v = dist(rng);
    }
    return w;
  }

  std::array<Tensor*, kCount> tensors() { return {&dl_pre, &s_pre, &x_gates, &h_gates, &s_gates, &dl_post}; }
  std::array<const Tensor*, kCount> tensors() const {
    return {&dl_pre, &s_pre, &x_gates, &h_gates, &s_gates, &dl_post};
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
  }

  friend bool operator==(const PKWeights&, const PKWeights&) = default;
};

/// Per-cell recurrent state: LSTM h and c plus last step's lateral output.
struct PKState {
  Tensor h;        // [N x m]
  Tensor c;        // [N x m]
  Tensor lateral;  // [N x l]

  static PKState zeros(const NetworkConfig& cfg) {
    PKState s;
    s.h = Tensor::zeros({cfg.cells(), cfg.lstm_cells});
    s.c = Tensor::zeros({cfg.cells(), cfg.lstm_cells});
    s.lateral = Tensor::zeros({cfg.cells(), cfg.lateral_dim});
    return s;
  }

  void reset() {
    h.fill(0.0);
    c.fill(0.0);
    lateral.fill(0.0);
  }
};

/// Weights recorded on a tape.
struct TapeWeights {
  NetworkConfig config;
  ad::Var dl_pre, s_pre, x_gates, h_gates, s_gates, dl_post;

  static TapeWeights bind(ad::Tape& tape, const PKWeights& w, bool trainable) {
    TapeWeights t;
    t.config = w.config;
    t.dl_pre = tape.leaf(w.dl_pre, trainable);
    t.s_pre = tape.leaf(w.s_pre, trainable);
    t.x_gates = tape.leaf(w.x_gates, trainable);
    t.h_gates = tape.leaf(w.h_gates, trainable);
    t.s_gates = tape.leaf(w.s_gates, trainable);
    t.dl_post = tape.leaf(w.dl_post, trainable);
    return t;
  }

  std::array<ad::Var, PKWeights::kCount> vars() const { return {dl_pre, s_pre, x_gates, h_gates, s_gates, dl_post}; }
};

struct TapeState {
  ad::Var h, c, lateral;

  static TapeState bind(ad::Tape& tape, const PKState& s) {
    return {tape.constant(s.h), tape.constant(s.c), tape.constant(s.lateral)};
  }
  PKState values() const { return {h.value(), c.value(), lateral.value()}; }
};

struct LstmOutput {
  ad::Var h, c;
};

/// Static-gated LSTM over a batch of rows. `static_code` feeds i, f, o only.
inline LstmOutput lstm_forward(const TapeWeights& w, const ad::Var& x, const std::optional<ad::Var>& static_code,
                               const ad::Var& h_prev, const ad::Var& c_prev) {
  const std::size_t m = w.config.lstm_cells;
  ad::Var gates = ad::linear(w.x_gates, x) + ad::linear(w.h_gates, h_prev);
  auto gate = [&](std::size_t k) { return ad::columns(gates, k * m, m); };
  ad::Var gi = gate(0), gf = gate(1), go = gate(2);
  if (static_code) {
    ad::Var sg = ad::linear(w.s_gates, *static_code);
    gi = gi + ad::columns(sg, 0, m);
    gf = gf + ad::columns(sg, m, m);
    go = go + ad::columns(sg, 2 * m, m);
  }
  ad::Var i = ad::sigmoid(gi);
  ad::Var f = ad::sigmoid(gf);
  ad::Var o = ad::sigmoid(go);
  ad::Var u = ad::tanh(gate(3));
  ad::Var c = ad::hadamard(i, u) + ad::hadamard(f, c_prev);
  ad::Var h = ad::hadamard(o, ad::tanh(c));
  return {h, c};
}

struct PKOutput {
  ad::Var dynamic;  // [N x d]
  ad::Var lateral;  // [N x l]
  TapeState state;
};

/// One PK application to a batch of cells. `lateral_in` is [N x 8l] with
/// absent neighbours already zero; `static_in` is [N x s] or empty.
inline PKOutput pk_forward(const TapeWeights& w, const ad::Var& dynamic_in, const ad::Var& lateral_in,
                           const std::optional<ad::Var>& static_in, const TapeState& state) {
  const NetworkConfig& cfg = w.config;
  if (dynamic_in.value().cols() != cfg.dynamic_dim ||
      lateral_in.value().cols() != kNeighbourSlots * cfg.lateral_dim)
    throw DimensionError("pk_forward: input widths do not match the network config");
  std::optional<ad::Var> static_code;
  if (cfg.has_static()) {
    if (!static_in) throw ContractError("pk_forward: network expects static input");
    if (static_in->value().cols() != cfg.static_dim) throw DimensionError("pk_forward: static input width");
    static_code = ad::tanh(ad::linear(w.s_pre, *static_in));
  }
  ad::Var dl_pre = ad::tanh(ad::linear(w.dl_pre, ad::concat(dynamic_in, lateral_in)));
  LstmOutput lstm = lstm_forward(w, dl_pre, static_code, state.h, state.c);
  ad::Var post = ad::tanh(ad::linear(w.dl_post, lstm.h));
  ad::Var d_out = ad::columns(post, 0, cfg.dynamic_dim);
  ad::Var l_out = ad::columns(post, cfg.dynamic_dim, cfg.lateral_dim);
  return {d_out, l_out, TapeState{lstm.h, lstm.c, l_out}};
}

struct StepOutput {
  ad::Var prediction;  // [N x d]
  TapeState state;
};

/// Applies the shared PK to every cell. Lateral input is the previous step's
/// lateral output of each neighbour.
inline StepOutput lattice_step(const TapeWeights& w, const LatticeTopology& topo, const ad::Var& fields,
                               const std::optional<ad::Var>& context, const TapeState& state) {
  if (fields.value().rows() != topo.cells() || fields.value().rank() != 2)
    throw DimensionError("lattice_step: expected one row per lattice cell");
  ad::Var lateral_in = ad::gather_rows(state.lateral, topo.gather_table());
  PKOutput out = pk_forward(w, fields, lateral_in, context, state);
  return {out.dynamic, out.state};
}

/// Value-only lattice step on a throwaway tape.
inline Tensor lattice_step(const PKWeights& w, const LatticeTopology& topo, const Tensor& fields,
                           const Tensor* context, PKState& state) {
  ad::Tape tape;
  TapeWeights tw = TapeWeights::bind(tape, w, false);
  std::optional<ad::Var> ctx;
  if (w.config.has_static() && context) ctx = tape.constant(*context);
  StepOutput out = lattice_step(tw, topo, tape.constant(fields), ctx, TapeState::bind(tape, state));
  state = out.state.values();
  return out.prediction.value();
}

struct RolloutResult {
  std::vector<Tensor> predictions;  // predictions[k] estimates frame k + 1
  double mse_closed_loop = 0.0;
};

class WindowError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Teacher forcing for the first `tf_steps` inputs, then closed loop.
///
/// Frame k (k >= 1) is predicted from frame k-1: the observed frame from
/// `inputs` while k-1 < tf_steps, the model's own previous prediction
/// afterwards. The reported MSE compares frames tf_steps .. tf_steps+cl_steps-1
/// against `targets` over all cells.
inline RolloutResult rollout(const wave::WaveSequence& inputs, const wave::WaveSequence& targets, const PKWeights& w,
                             const Tensor* context, std::size_t tf_steps, std::size_t cl_steps) {
  if (tf_steps < 1 || tf_steps + cl_steps > inputs.steps || targets.steps != inputs.steps)
    throw WindowError("rollout window of " + std::to_string(tf_steps) + "+" + std::to_string(cl_steps) +
                      " steps exceeds sequence length " + std::to_string(inputs.steps));
  if (inputs.cells() != w.config.cells()) throw DimensionError("rollout: sequence grid does not match the network");
  const LatticeTopology topo(w.config.height, w.config.width);
  PKState state = PKState::zeros(w.config);
  RolloutResult r;
  double se = 0.0;
  std::size_t count = 0;
  const std::size_t last = tf_steps + cl_steps;
  for (std::size_t k = 1; k < last; ++k) {
    Tensor input = (k - 1 < tf_steps) ? inputs.frame(k - 1) : r.predictions.back();
    Tensor pred = lattice_step(w, topo, input, context, state);
    if (k >= tf_steps) {
      const auto target = targets.frame_span(k);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        se += d * d;
      }
      count += pred.size();
    }
    r.predictions.push_back(std::move(pred));
  }
  r.mse_closed_loop = count ? se / static_cast<double>(count) : 0.0;
  return r;
}

inline RolloutResult rollout(const wave::WaveSequence& seq, const PKWeights& w, const Tensor* context,
                             std::size_t tf_steps, std::size_t cl_steps) {
  return rollout(seq, seq, w, context, tf_steps, cl_steps);
}

}  // namespace distana
