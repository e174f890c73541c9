#pragma once

// End-to-end runner for the wave experiments: dataset generation, training
// (optionally with parametric-bias inference), evaluation and test-time
// context tuning, plus the artifacts each stage leaves on disk.
//
// Seeds: everything derives from ExperimentConfig::seed through named
// substreams ("data/<split>", "noise/<split>", "<split>/map", "init",
// "train"). train.seed selects the replicate for init and shuffling only, so
// repeated trainings share one dataset.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "distana/active_tuning.hpp"
#include "distana/checkpoint.hpp"
#include "distana/dataset.hpp"
#include "distana/experiment_config.hpp"
#include "distana/export.hpp"
#include "distana/hash.hpp"
#include "distana/network.hpp"
#include "distana/rng.hpp"
#include "distana/training.hpp"
#include "json.hpp"

namespace distana::experiment {

using nlohmann::json;

inline wave::Dataset build_dataset(const ExperimentConfig& c, const std::string& split, std::size_t count,
                                   std::size_t length, const std::vector<double>& speeds, double snr,
                                   std::size_t threads = 1) {
  const auto& d = c.data;
  wave::VelocityField v;
  if (d.constant_speed > 0.0) {
    v = wave::VelocityField::uniform(d.height, d.width, d.constant_speed);
  } else {
    Rng rng = make_rng(c.seed, split + "/map");
    v = wave::VelocityField::sample(d.height, d.width, speeds, rng);
  }
  wave::ImpulseSpec spec;
  spec.amplitude = d.amplitude;
  spec.sigma2 = d.sigma2;

  wave::Dataset ds;
  ds.clean.resize(count);
  if (snr > 0.0) ds.noisy.resize(count);
  // Per-sequence seeds make the result independent of the worker count.
  parallel_map(count, threads, [&](std::size_t i) {
    ds.clean[i] = wave::generate_sequence(length, v, spec, derive_seed(c.seed, "data/" + split, i), d.params);
    if (snr > 0.0) ds.noisy[i] = wave::add_noise(ds.clean[i], snr, derive_seed(c.seed, "noise/" + split, i));
    return 0.0;
  });
  ds.meta = {{"split", split}, {"root_seed", c.seed}, {"snr", snr}, {"preset", c.preset}};
  if (d.constant_speed > 0.0)
    ds.meta["constant_speed"] = d.constant_speed;
  else
    ds.meta["speeds"] = speeds;
  return ds;
}

struct DataPair {
  wave::Dataset train;
  wave::Dataset test;
};

inline DataPair generate(const ExperimentConfig& c, std::size_t threads = 1) {
  const auto& d = c.data;
  return {build_dataset(c, "train", d.train_sequences, d.train_length, d.train_speeds, d.train_snr, threads),
          build_dataset(c, "test", d.test_sequences, d.test_length, d.test_speeds, d.test_snr, threads)};
}

inline std::uint64_t init_seed(const ExperimentConfig& c) { return derive_seed(c.seed, "init", c.train.seed); }

struct TrainOutcome {
  PKWeights weights;
  std::vector<double> curve;
  std::optional<Tensor> context;  // learned training-map context, if inferred
  std::vector<std::string> diagnostics;
  double seconds = 0.0;
};

/// on_context(epoch, map) fires after every epoch when the context is inferred.
inline TrainOutcome train_model(const ExperimentConfig& c, const wave::Dataset& data,
                                std::function<void(std::size_t, const Tensor&)> on_context = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train", c.train.seed);
  const PKWeights init = PKWeights::init(c.model, init_seed(c));
  TrainOutcome out;
  if (tc.infer_context) {
    auto hook = [&](std::size_t epoch, const tuning::ContextEstimate& est) {
      if (on_context) on_context(epoch, est.value);
    };
    tuning::ParametricBiasResult r = tuning::train_with_parametric_bias(init, data, tc, c.tuning, hook);
    out.weights = std::move(r.training.weights);
    out.curve = std::move(r.training.curve);
    out.context = r.context.value;
    out.diagnostics = r.context.diagnostics;
  } else if (c.model.has_static()) {
    // Static path present but not inferred: feed the true speed map.
    const Tensor truth = data.velocity().as_tensor();
    TrainResult r = train(init, data, tc, FixedContext{&truth});
    out.weights = std::move(r.weights);
    out.curve = std::move(r.curve);
  } else {
    TrainResult r = train(init, data, tc);
    out.weights = std::move(r.weights);
    out.curve = std::move(r.curve);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct Evaluation {
  EvalResult teacher_forced;                 // TF wash-in, then closed loop
  std::optional<EvalResult> active_washin;   // AT wash-in, noisy test data only
  std::optional<tuning::TestTuneResult> tuned;
  std::optional<tuning::OrderingReport> ordering;
};

/// Closed-loop test protocol. Static models first infer the unseen test map
/// from zero; noisy test sets are additionally scored with AT wash-in.
inline Evaluation evaluate_model(const ExperimentConfig& c, const PKWeights& w, const wave::Dataset& test,
                                 std::size_t threads = 1) {
  Evaluation e;
  const Tensor* context = nullptr;
  if (w.config.has_static()) {
    e.tuned = tuning::infer_test_context(w, test, c.tuning, c.tuning.test_iterations, c.checkpoints);
    context = &e.tuned->context;
    if (c.data.constant_speed <= 0.0 && test.velocity().s.size() > 1)
      e.ordering = tuning::ordering_report(e.tuned->context.values(), test.velocity().s, c.data.train_speeds);
  }
  e.teacher_forced = evaluate(w, test, context, c.train.tf_steps, c.train.cl_steps, threads);
  if (test.has_noise())
    e.active_washin =
        tuning::evaluate_at_washin(w, test, context, c.tuning, c.train.tf_steps, c.train.cl_steps, threads);
  return e;
}

inline json eval_json(const EvalResult& r) {
  return {{"mean", r.mean}, {"std", r.stddev}, {"per_sequence", r.per_sequence}};
}

inline json ordering_json(const tuning::OrderingReport& r) {
  json j = {{"spearman", r.spearman.rho},
            {"spearman_defined", r.spearman.defined},
            {"speeds", r.speeds},
            {"class_means", r.class_means},
            {"monotone", r.monotone},
            {"unseen_interleaved", r.unseen_interleaved}};
  if (!r.spearman.diagnostic.empty()) j["diagnostic"] = r.spearman.diagnostic;
  return j;
}

inline json evaluation_json(const Evaluation& e) {
  json j = {{"teacher_forced", eval_json(e.teacher_forced)}};
  if (e.active_washin) j["active_washin"] = eval_json(*e.active_washin);
  if (e.ordering) j["ordering"] = ordering_json(*e.ordering);
  if (e.tuned && !e.tuned->losses.empty()) j["tune_final_loss"] = e.tuned->losses.back();
  return j;
}

inline std::string pad(std::size_t v, int width = 3) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << v;
  return s.str();
}

inline void write_curve(const std::string& path, const std::vector<double>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "epoch,mse\n" << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline void write_snapshots(const std::string& dir, const tuning::TestTuneResult& r, std::size_t h, std::size_t w) {
  exporter::ensure_dir(dir);
  for (const auto& [it, map] : r.snapshots) exporter::write_heatmap(dir + "/iter_" + pad(it), map.values(), h, w);
  exporter::write_heatmap(dir + "/final", r.context.values(), h, w);
}

struct RunPaths {
  std::string out;
  std::string train_data;  // dataset files the run consumed, for hashing
  std::string test_data;
};

/// train + evaluate with all artifacts under `paths.out`: curve.csv,
/// weights.dstw, summary.json, context/epoch_XXX.{pgm,csv,json} when the
/// context is inferred, and test_context/ snapshots for static models.
inline json run_train(const ExperimentConfig& c, const DataPair& data, const RunPaths& paths, std::size_t threads) {
  exporter::ensure_dir(paths.out);
  std::function<void(std::size_t, const Tensor&)> on_context;
  if (c.train.infer_context) {
    exporter::ensure_dir(paths.out + "/context");
    on_context = [&](std::size_t epoch, const Tensor& map) {
      exporter::write_heatmap(paths.out + "/context/epoch_" + pad(epoch), map.values(), c.model.height,
                              c.model.width);
    };
  }
  TrainOutcome t = train_model(c, data.train, on_context);
  write_curve(paths.out + "/curve.csv", t.curve);
  save_weights(paths.out + "/weights.dstw", t.weights);

  const auto t0 = std::chrono::steady_clock::now();
  Evaluation e = evaluate_model(c, t.weights, data.test, threads);
  const double eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (e.tuned) write_snapshots(paths.out + "/test_context", *e.tuned, c.model.height, c.model.width);

  json metrics = evaluation_json(e);
  metrics["final_train_mse"] = t.curve.empty() ? 0.0 : t.curve.back();
  metrics["param_count"] = param_count(c.model);
  if (t.context) {
    auto rep = tuning::ordering_report(t.context->values(), data.train.velocity().s, c.data.train_speeds);
    metrics["train_context_ordering"] = ordering_json(rep);
  }
  json summary = {{"seed", c.seed},
                  {"preset", c.preset},
                  {"config", to_text(c)},
                  {"config_hash", sha1_hex(to_text(c))},
                  {"weights_hash", git_blob_hash_file(paths.out + "/weights.dstw")},
                  {"metrics", metrics},
                  {"wall_seconds", {{"train", t.seconds}, {"evaluate", eval_seconds}}}};
  json inputs = json::object();
  if (!paths.train_data.empty()) inputs["train"] = git_blob_hash_file(paths.train_data);
  if (!paths.test_data.empty()) inputs["test"] = git_blob_hash_file(paths.test_data);
  summary["data_hashes"] = inputs;
  if (!t.diagnostics.empty()) summary["diagnostics"] = t.diagnostics;
  write_json(paths.out + "/summary.json", summary);
  return summary;
}

/// generate + train + evaluate into one directory.
inline json run_pipeline(const ExperimentConfig& c, const std::string& out, std::size_t threads) {
  exporter::ensure_dir(out);
  DataPair data = generate(c, threads);
  RunPaths paths{out, out + "/train.dsta", out + "/test.dsta"};
  wave::write_dataset(paths.train_data, data.train);
  wave::write_dataset(paths.test_data, data.test);
  std::ofstream(out + "/config.ini") << to_text(c);
  return run_train(c, data, paths, threads);
}

}  // namespace distana::experiment
