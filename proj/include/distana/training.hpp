#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "distana/adam.hpp"
#include "distana/autodiff.hpp"
#include "distana/dataset.hpp"
#include "distana/network.hpp"
#include "distana/rng.hpp"

namespace distana {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t sequences = 100;        // per epoch, taken from the front of the dataset
  std::size_t sequence_length = 70;   // frames used per sequence
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t tf_steps = 50;
  std::size_t cl_steps = 90;
  double grad_clip = 0.0;             // global-norm clip; 0 disables
  std::size_t teacher_steps = 0;      // teacher-forced inputs per training unroll, closed loop after; 0 = all
  bool noisy_targets = true;          // train against the noisy copy when the dataset has one
  bool infer_context = false;

  /// Static-context experiment: 300 epochs of 100 x 70-step sequences, the
  /// last 30 steps of each unroll in closed loop.
  static TrainConfig context_inference() {
    TrainConfig c;
    c.infer_context = true;
    c.teacher_steps = 40;
    return c;
  }
  /// Noise-filtering experiment: 200 epochs of 100 x 40-step sequences, run
  /// closed loop from the first frame as AT wash-in does at test time.
  static TrainConfig noise_filtering() {
    TrainConfig c;
    c.epochs = 200;
    c.sequence_length = 40;
    c.teacher_steps = 1;
    return c;
  }
};

/// Everything one BPTT pass over a sequence yields.
struct SequenceGradients {
  double loss = 0.0;  // mean one-step MSE over the unrolled steps
  std::array<Tensor, PKWeights::kCount> weights;
  std::optional<Tensor> context;
};

/// Unroll over frames [0, length) predicting each next frame, loss summed
/// over steps, full backpropagation through time. The first `teacher_steps`
/// inputs are observed frames (0 means all of them); later inputs are the
/// previous predictions and stay on the tape. Gradients are taken for the
/// weights (if `train_weights`) and for the static context (if `context_grad`
/// and the network has a static path).
inline SequenceGradients sequence_gradients(const PKWeights& w, const wave::WaveSequence& inputs,
                                            const wave::WaveSequence& targets, std::size_t length,
                                            const Tensor* context, bool train_weights, bool context_grad,
                                            std::size_t teacher_steps = 0) {
  if (length < 2 || length > inputs.steps || targets.steps < length)
    throw ContractError("sequence of " + std::to_string(inputs.steps) + " frames is too short for a " +
                        std::to_string(length) + "-frame unroll");
  const LatticeTopology topo(w.config.height, w.config.width);
  ad::Tape tape;
  TapeWeights tw = TapeWeights::bind(tape, w, train_weights);
  std::optional<ad::Var> ctx;
  if (w.config.has_static()) {
    if (!context) throw ContractError("network expects a static context");
    ctx = tape.leaf(*context, context_grad);
  }
  TapeState state = TapeState::bind(tape, PKState::zeros(w.config));
  std::optional<ad::Var> total, previous;
  for (std::size_t k = 0; k + 1 < length; ++k) {
    const bool forced = teacher_steps == 0 || k < teacher_steps;
    ad::Var input = forced ? tape.constant(inputs.frame(k)) : *previous;
    StepOutput out = lattice_step(tw, topo, input, ctx, state);
    ad::Var step_loss = ad::mse(out.prediction, tape.constant(targets.frame(k + 1)));
    total = total ? *total + step_loss : step_loss;
    state = out.state;
    previous = out.prediction;
  }
  ad::GradientMap g = ad::backward(*total);
  SequenceGradients r;
  r.loss = total->value().item() / static_cast<double>(length - 1);
  const auto vars = tw.vars();
  for (std::size_t i = 0; i < PKWeights::kCount; ++i) r.weights[i] = g[vars[i]];
  if (ctx && context_grad) r.context = g[*ctx];
  return r;
}

inline void clip_global_norm(std::array<Tensor, PKWeights::kCount>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double k = max_norm / norm;
  for (Tensor& g : grads)
    for (double& v : g.values()) v *= k;
}

/// Static-context provider used during training. The default keeps the
/// network's static input fixed (or absent).
struct FixedContext {
  const Tensor* tensor = nullptr;
  const Tensor* value() const { return tensor; }
  bool wants_gradient() const { return false; }
  void apply_gradient(const Tensor&) {}
  void end_epoch(std::size_t) {}
};

struct TrainResult {
  std::vector<double> curve;  // mean training MSE per epoch
  PKWeights weights;
};

/// Adam over one full-unroll sequence at a time; sequence order reshuffled
/// every epoch from the training seed.
template <class Context = FixedContext>
TrainResult train(PKWeights weights, const wave::Dataset& data, const TrainConfig& cfg, Context&& context = {}) {
  if (data.size() < cfg.sequences) throw ContractError("dataset holds fewer sequences than the config requests");
  if (data.steps() < cfg.sequence_length) throw ContractError("dataset sequences shorter than sequence_length");
  AdamState adam(AdamConfig{cfg.lr});
  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  std::vector<std::size_t> order(cfg.sequences);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::string> names(PKWeights::kNames.begin(), PKWeights::kNames.end());

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const wave::WaveSequence& in = data.observed(idx);
      const wave::WaveSequence& tgt = cfg.noisy_targets ? data.observed(idx) : data.clean[idx];
      try {
        SequenceGradients g =
            sequence_gradients(weights, in, tgt, cfg.sequence_length, context.value(), true, context.wants_gradient(),
                               cfg.teacher_steps);
        clip_global_norm(g.weights, cfg.grad_clip);
        auto params = weights.tensors();
        adam_step(std::span<Tensor* const>(params), std::span<const Tensor>(g.weights), adam, names);
        if (g.context) context.apply_gradient(*g.context);
        epoch_loss += g.loss;
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", sequence " +
                           std::to_string(idx) + ")");
      }
    }
    result.curve.push_back(epoch_loss / static_cast<double>(cfg.sequences));
    context.end_epoch(epoch);
  }
  result.weights = std::move(weights);
  return result;
}

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_sequence;
};

inline EvalResult summarize(std::vector<double> values) {
  EvalResult r;
  r.per_sequence = std::move(values);
  const double n = static_cast<double>(r.per_sequence.size());
  if (r.per_sequence.empty()) return r;
  for (double v : r.per_sequence) r.mean += v;
  r.mean /= n;
  for (double v : r.per_sequence) r.stddev += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(r.stddev / n);
  return r;
}

/// Runs `job(i)` for i in [0, n) on up to `threads` workers; results land in
/// index order so the reduction is independent of scheduling.
template <class Job>
std::vector<double> parallel_map(std::size_t n, std::size_t threads, Job&& job) {
  std::vector<double> out(n);
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = job(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) out[i] = job(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Teacher-forced wash-in then closed-loop prediction on every test sequence,
/// scored against the clean frames.
inline EvalResult evaluate(const PKWeights& w, const wave::Dataset& test, const Tensor* context,
                           std::size_t tf_steps = 50, std::size_t cl_steps = 90, std::size_t threads = 1) {
  auto per = parallel_map(test.size(), threads, [&](std::size_t i) {
    return rollout(test.observed(i), test.clean[i], w, context, tf_steps, cl_steps).mse_closed_loop;
  });
  return summarize(std::move(per));
}

/// Reference closed-loop MSEs for the static-context wave benchmark.
struct ReferenceMse {
  static constexpr double kDistana = 2.35e-3;
  static constexpr double kDistanaAt = 4.23e-4;
  static constexpr double kConvLstm = 5.80e-2;
  static constexpr double kTcn = 4.02e-2;
};

}  // namespace distana
