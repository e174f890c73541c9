#pragma once

// Active Tuning: retrospective gradient descent on latent model inputs with
// frozen weights. A tuning problem records a scalar window loss as a function
// of the latent tensor; tune() runs `cycles` optimizer updates on the latent.
//
// Two latents are used with DISTANA:
//   * the per-cell static context (parametric bias), during training and at
//     test time;
//   * the first dynamic input of a wash-in window, driven in closed loop, to
//     filter observation noise.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distana/adam.hpp"
#include "distana/autodiff.hpp"
#include "distana/dataset.hpp"
#include "distana/metrics.hpp"
#include "distana/network.hpp"
#include "distana/training.hpp"

namespace distana::tuning {

enum class Target { kStaticContext, kDynamicInput };

struct TuningConfig {
  std::size_t history = 50;  // H: steps into the past
  std::size_t cycles = 1;    // c: optimizer updates per call
  double lr = 1e-2;
  Target target = Target::kStaticContext;
  double alpha = 0.05;       // low-pass blend of new vs. previous context
  double clip = 2.5;         // band half-width in moving-average sigmas
  bool closed_loop = false;  // inner forward for static mode: teacher forced by default
  std::size_t test_iterations = 500;
  bool postprocess_at_test = false;
  std::size_t washin_cycles = 40;
  double washin_lr = 1e-2;

  void validate() const {
    if (history < 1 || cycles < 1) throw ContractError("tuning history and cycles must be >= 1");
    if (!(lr > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(clip > 0.0))
      throw ContractError("tuning lr, alpha in (0,1] and clip must be positive");
  }
};

template <class P>
concept TuningProblem = requires(const P& p, ad::Tape& tape, const ad::Var& latent) {
  { p.loss(tape, latent) } -> std::same_as<ad::Var>;
};

/// `cycles` optimizer updates (AdamState or SgdState) on `latent`; only the
/// latent is differentiated. Returns the loss seen before each update.
template <TuningProblem P, class Optimizer>
std::vector<double> tune(const P& problem, Tensor& latent, std::size_t cycles, Optimizer& opt) {
  if (cycles < 1) throw ContractError("tune: cycles must be >= 1");
  std::vector<double> losses;
  for (std::size_t c = 0; c < cycles; ++c) {
    ad::Tape tape;
    ad::Var s = tape.variable(latent);
    ad::Var loss = problem.loss(tape, s);
    losses.push_back(loss.value().item());
    optimizer_step(latent, ad::backward(loss)[s], opt);
  }
  return losses;
}

/// Static-context window: zero state at `start`, H steps predicting
/// frames start+1 .. start+H, mean MSE against `targets`.
struct StaticContextWindow {
  const PKWeights* weights;
  const wave::WaveSequence* inputs;
  const wave::WaveSequence* targets;
  std::size_t start = 0;
  std::size_t history = 50;
  bool closed_loop = false;

  ad::Var loss(ad::Tape& tape, const ad::Var& context) const {
    if (start + history >= inputs->steps)
      throw ContractError("tuning history of " + std::to_string(history) + " exceeds the available " +
                          std::to_string(inputs->steps - start - 1) + " steps");
    const LatticeTopology topo(weights->config.height, weights->config.width);
    TapeWeights tw = TapeWeights::bind(tape, *weights, false);
    TapeState state = TapeState::bind(tape, PKState::zeros(weights->config));
    ad::Var input = tape.constant(inputs->frame(start));
    std::optional<ad::Var> total;
    for (std::size_t k = 0; k < history; ++k) {
      StepOutput out = lattice_step(tw, topo, input, context, state);
      ad::Var l = ad::mse(out.prediction, tape.constant(targets->frame(start + k + 1)));
      total = total ? *total + l : l;
      state = out.state;
      input = closed_loop ? out.prediction : tape.constant(inputs->frame(start + k + 1));
    }
    return ad::scale(*total, 1.0 / static_cast<double>(history));
  }
};

/// Wash-in window for noise filtering: the latent is the first dynamic input;
/// the network then runs closed loop for H-1 steps. Loss is the mean MSE of
/// the latent and every prediction against the observed frames 0 .. H-1.
struct WashinWindow {
  const PKWeights* weights;
  const wave::WaveSequence* observed;
  const Tensor* context = nullptr;
  std::size_t history = 50;

  ad::Var loss(ad::Tape& tape, const ad::Var& first_input) const {
    if (history > observed->steps) throw ContractError("wash-in history exceeds the observed sequence");
    const LatticeTopology topo(weights->config.height, weights->config.width);
    TapeWeights tw = TapeWeights::bind(tape, *weights, false);
    TapeState state = TapeState::bind(tape, PKState::zeros(weights->config));
    std::optional<ad::Var> ctx;
    if (weights->config.has_static() && context) ctx = tape.constant(*context);
    ad::Var total = ad::mse(first_input, tape.constant(observed->frame(0)));
    ad::Var input = first_input;
    for (std::size_t k = 1; k < history; ++k) {
      StepOutput out = lattice_step(tw, topo, input, ctx, state);
      total = total + ad::mse(out.prediction, tape.constant(observed->frame(k)));
      state = out.state;
      input = out.prediction;
    }
    return ad::scale(total, 1.0 / static_cast<double>(history));
  }
};

/// Latent static context with the smoothing and clipping history it needs.
struct ContextEstimate {
  Tensor value;                   // [cells x 1]
  std::optional<Tensor> previous; // last post-processed value
  double mean_avg = 0.0;          // moving averages of the raw map statistics
  double std_avg = 0.0;
  bool stats_ready = false;
  AdamState adam;
  std::vector<std::string> diagnostics;

  static ContextEstimate zeros(std::size_t cells, double lr) {
    ContextEstimate e;
    e.value = Tensor::zeros({cells, 1});
    e.adam = AdamState(AdamConfig{lr});
    return e;
  }
};

/// Low-pass blend with the previous value, z-normalisation over all cells,
/// then clipping to the moving-average band mean_avg +- clip * std_avg
/// (mapped into normalised units). The moving averages follow the raw
/// statistics with the same rate alpha.
inline void postprocess_context(ContextEstimate& est, double alpha, double clip) {
  Tensor& s = est.value;
  if (est.previous) {
    const Tensor& prev = *est.previous;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = alpha * s[i] + (1.0 - alpha) * prev[i];
  }
  const double n = static_cast<double>(s.size());
  double mu = 0.0;
  for (double v : s.values()) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : s.values()) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / n);

  if (!est.stats_ready) {
    est.mean_avg = mu;
    est.std_avg = sigma;
    est.stats_ready = true;
  } else {
    est.mean_avg = alpha * mu + (1.0 - alpha) * est.mean_avg;
    est.std_avg = alpha * sigma + (1.0 - alpha) * est.std_avg;
  }

  // Rounding can leave a constant map with a sigma of a few ulps.
  if (sigma <= 1e-12 * std::max(1.0, std::abs(mu))) {
    for (double& v : s.values()) v = 0.0;
    est.diagnostics.emplace_back("context map is constant; normalisation skipped");
    est.previous = s;
    return;
  }
  const double lo = (est.mean_avg - clip * est.std_avg - mu) / sigma;
  const double hi = (est.mean_avg + clip * est.std_avg - mu) / sigma;
  for (double& v : s.values()) v = std::clamp((v - mu) / sigma, lo, hi);
  est.previous = s;
}

/// Training-time context learner plugged into train(): Adam on the context
/// gradient of each sequence, then post-processing.
struct ContextLearner {
  ContextEstimate* estimate;
  const TuningConfig* cfg;
  std::function<void(std::size_t, const ContextEstimate&)> on_epoch;

  const Tensor* value() const { return &estimate->value; }
  bool wants_gradient() const { return true; }
  void apply_gradient(const Tensor& g) {
    adam_step(estimate->value, g, estimate->adam);
    postprocess_context(*estimate, cfg->alpha, cfg->clip);
  }
  void end_epoch(std::size_t epoch) {
    if (on_epoch) on_epoch(epoch, *estimate);
  }
};

struct ParametricBiasResult {
  TrainResult training;
  ContextEstimate context;
};

/// Joint training: weights by Adam on the prediction loss, the per-cell
/// parametric bias by Active Tuning on the same gradients. The true speed
/// map never enters the model.
inline ParametricBiasResult train_with_parametric_bias(
    const PKWeights& init, const wave::Dataset& data, const TrainConfig& train_cfg, const TuningConfig& tune_cfg,
    std::function<void(std::size_t, const ContextEstimate&)> on_epoch = {}) {
  if (!init.config.has_static()) throw ContractError("parametric bias needs a network with a static input path");
  tune_cfg.validate();
  ParametricBiasResult r;
  r.context = ContextEstimate::zeros(init.config.cells(), tune_cfg.lr);
  ContextLearner learner{&r.context, &tune_cfg, std::move(on_epoch)};
  r.training = train(init, data, train_cfg, learner);
  return r;
}

struct TestTuneResult {
  Tensor context;
  std::map<std::size_t, Tensor> snapshots;  // iteration (1-based) -> context
  std::vector<double> losses;
};

/// Test-time inference of an unseen static map from zero: iteration k tunes on
/// the first `history` steps of test sequence k mod N for `cycles` updates.
/// Only wash-in frames are used, never the closed-loop evaluation window.
inline TestTuneResult infer_test_context(const PKWeights& w, const wave::Dataset& test, const TuningConfig& cfg,
                                         std::size_t iterations, const std::vector<std::size_t>& checkpoints = {}) {
  cfg.validate();
  if (!w.config.has_static()) throw ContractError("test-time context tuning needs a static input path");
  ContextEstimate est = ContextEstimate::zeros(w.config.cells(), cfg.lr);
  TestTuneResult r;
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::size_t i = it % test.size();
    StaticContextWindow window{&w, &test.observed(i), &test.observed(i), 0, cfg.history, cfg.closed_loop};
    auto l = tune(window, est.value, cfg.cycles, est.adam);
    r.losses.insert(r.losses.end(), l.begin(), l.end());
    if (cfg.postprocess_at_test) postprocess_context(est, cfg.alpha, cfg.clip);
    if (std::find(checkpoints.begin(), checkpoints.end(), it + 1) != checkpoints.end())
      r.snapshots.emplace(it + 1, est.value);
  }
  r.context = est.value;
  return r;
}

struct WashinResult {
  Tensor first_input;
  std::vector<double> losses;
};

/// Infers the first dynamic input of the wash-in window from noisy
/// observations in place of teacher forcing.
inline WashinResult at_washin(const PKWeights& w, const wave::WaveSequence& observed, const Tensor* context,
                              const TuningConfig& cfg) {
  WashinWindow window{&w, &observed, context, cfg.history};
  WashinResult r;
  r.first_input = observed.frame(0);
  AdamState adam(AdamConfig{cfg.washin_lr});
  r.losses = tune(window, r.first_input, cfg.washin_cycles, adam);
  return r;
}

/// Closed loop from an inferred first input; MSE over frames
/// tf_steps .. tf_steps+cl_steps-1 against `clean`.
inline double washin_closed_loop_mse(const PKWeights& w, const Tensor& first_input, const wave::WaveSequence& clean,
                                     const Tensor* context, std::size_t tf_steps, std::size_t cl_steps) {
  if (tf_steps + cl_steps > clean.steps) throw WindowError("closed-loop window exceeds the sequence");
  const LatticeTopology topo(w.config.height, w.config.width);
  PKState state = PKState::zeros(w.config);
  Tensor input = first_input;
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 1; k < tf_steps + cl_steps; ++k) {
    Tensor pred = lattice_step(w, topo, input, context, state);
    if (k >= tf_steps) {
      const auto target = clean.frame_span(k);
      for (std::size_t i = 0; i < pred.size(); ++i) se += (pred[i] - target[i]) * (pred[i] - target[i]);
      count += pred.size();
    }
    input = std::move(pred);
  }
  return count ? se / static_cast<double>(count) : 0.0;
}

/// AT wash-in followed by closed loop on every test sequence.
inline EvalResult evaluate_at_washin(const PKWeights& w, const wave::Dataset& test, const Tensor* context,
                                     const TuningConfig& cfg, std::size_t tf_steps, std::size_t cl_steps,
                                     std::size_t threads = 1) {
  TuningConfig c = cfg;
  c.history = tf_steps;
  auto per = parallel_map(test.size(), threads, [&](std::size_t i) {
    WashinResult r = at_washin(w, test.observed(i), context, c);
    return washin_closed_loop_mse(w, r.first_input, test.clean[i], context, tf_steps, cl_steps);
  });
  return summarize(std::move(per));
}

struct OrderingReport {
  metrics::RankCorrelation spearman;
  std::vector<double> speeds;      // distinct ground-truth values, ascending
  std::vector<double> class_means; // mean inferred value per speed
  bool monotone = false;           // class means strictly monotone in speed
  bool unseen_interleaved = false; // every unseen speed sits between its neighbours
};

/// Compares an inferred context map with the ground-truth speed map. The sign
/// of the mapping is free; only rank structure is checked.
inline OrderingReport ordering_report(std::span<const double> inferred, std::span<const double> truth,
                                      std::span<const double> seen_speeds) {
  OrderingReport r;
  r.spearman = metrics::spearman(inferred, truth);
  std::map<double, std::pair<double, std::size_t>> classes;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& c = classes[truth[i]];
    c.first += inferred[i];
    ++c.second;
  }
  for (const auto& [speed, acc] : classes) {
    r.speeds.push_back(speed);
    r.class_means.push_back(acc.first / static_cast<double>(acc.second));
  }
  bool up = true, down = true;
  for (std::size_t i = 1; i < r.class_means.size(); ++i) {
    up = up && r.class_means[i] > r.class_means[i - 1];
    down = down && r.class_means[i] < r.class_means[i - 1];
  }
  r.monotone = r.class_means.size() > 1 && (up || down);

  // Orientation from the seen classes only, then each unseen class must lie
  // strictly between its nearest seen neighbours (or beyond the last one).
  auto is_seen = [&](double v) {
    return std::any_of(seen_speeds.begin(), seen_speeds.end(), [&](double s) { return std::abs(s - v) < 1e-9; });
  };
  std::vector<std::size_t> seen_idx;
  for (std::size_t i = 0; i < r.speeds.size(); ++i)
    if (is_seen(r.speeds[i])) seen_idx.push_back(i);
  if (seen_idx.size() < 2) return r;
  const double sign = r.class_means[seen_idx.back()] > r.class_means[seen_idx.front()] ? 1.0 : -1.0;
  bool ok = true;
  for (std::size_t i = 0; i < r.speeds.size(); ++i) {
    if (is_seen(r.speeds[i])) continue;
    std::optional<double> below, above;
    for (std::size_t j : seen_idx) {
      if (r.speeds[j] < r.speeds[i]) below = r.class_means[j];
      if (r.speeds[j] > r.speeds[i] && !above) above = r.class_means[j];
    }
    const double v = sign * r.class_means[i];
    if (below && !(v > sign * *below)) ok = false;
    if (above && !(v < sign * *above)) ok = false;
  }
  r.unseen_interleaved = ok;
  return r;
}

}  // namespace distana::tuning
