// distana: generate / train / evaluate / tune / gradcheck / run for the
// 2D wave experiments. Exit codes: 0 ok, 2 config, 3 numeric, 4 I/O.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "distana/experiment.hpp"
#include "distana/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace distana;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "context-inference";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;  // section.key=value
  std::size_t threads = 1;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("DISTANA_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("DISTANA_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Experiment config file");
  cmd->add_option("--preset", c.preset, "Preset used when no --config is given")
      ->check(CLI::IsMember({"context-inference", "noise-filtering"}));
  cmd->add_option("--seed", c.seed, "Root seed (overrides the config)");
  cmd->add_option("--set", c.overrides, "Override a key, e.g. --set train.epochs=50");
  cmd->add_option("--threads", c.threads, "Worker threads (default: $DISTANA_THREADS or 1)");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig::preset_named(c.preset) : load_config(c.config_path);
  std::string text = to_text(cfg);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    const std::string key = o.substr(0, eq);
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      text = "seed = " + std::to_string(cfg.seed) + "\n" + key + " = " + o.substr(eq + 1) + "\n" + text;
    else
      text += "\n[" + key.substr(0, dot) + "]\n" + key.substr(dot + 1) + " = " + o.substr(eq + 1) + "\n";
  }
  cfg = parse_config(text);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

// A --data argument may name a directory holding train.dsta/test.dsta or a
// single .dsta file.
std::string data_file(const std::string& data, const std::string& split) {
  if (fs::is_directory(data)) return (fs::path(data) / (split + ".dsta")).string();
  return data;
}

void print_eval(const std::string& label, const EvalResult& r) {
  std::cout << label << ": mse " << std::scientific << std::setprecision(3) << r.mean << " +- " << r.stddev
            << " over " << r.per_sequence.size() << " sequences\n"
            << std::defaultfloat;
}

void print_ordering(const tuning::OrderingReport& r) {
  std::cout << "ordering: spearman " << std::fixed << std::setprecision(4) << r.spearman.rho
            << (r.spearman.defined ? "" : " (undefined: " + r.spearman.diagnostic + ")") << '\n';
  for (std::size_t i = 0; i < r.speeds.size(); ++i)
    std::cout << "  speed " << std::setprecision(1) << r.speeds[i] << " -> mean context " << std::setprecision(4)
              << r.class_means[i] << '\n';
  std::cout << "  monotone: " << (r.monotone ? "yes" : "no")
            << ", unseen interleaved: " << (r.unseen_interleaved ? "yes" : "no") << '\n'
            << std::defaultfloat;
}

int run(int argc, char** argv) {
  CLI::App app{"DISTANA lattice networks with Active Tuning on 2D wave data"};
  app.require_subcommand(1);

  Common gen_c;
  std::string gen_out;
  bool export_csv = false;
  auto* gen = app.add_subcommand("generate", "Build train/test wave datasets");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--export-csv", export_csv, "Also write one CSV per time step");

  Common train_c;
  std::string train_data, train_out;
  auto* tr = app.add_subcommand("train", "Train a model (with context inference if configured)");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Directory with train.dsta and test.dsta")->required();
  tr->add_option("--out", train_out, "Run directory")->required();

  Common eval_c;
  std::vector<std::string> eval_weights;
  std::string eval_data, eval_mode = "auto";
  std::size_t repeat = 0;
  auto* ev = app.add_subcommand("evaluate", "Closed-loop test MSE (teacher-forced or AT wash-in)");
  add_common(ev, eval_c);
  ev->add_option("--weights", eval_weights, "One or more weight checkpoints");
  ev->add_option("--data", eval_data, "Test dataset file or data directory")->required();
  ev->add_option("--repeat", repeat, "Train this many replicate seeds on <data>/train.dsta and evaluate each");
  ev->add_option("--mode", eval_mode, "tf, at, or auto (both when the test data is noisy)")
      ->check(CLI::IsMember({"tf", "at", "auto"}));

  Common tune_c;
  std::string tune_weights, tune_data, tune_out;
  std::optional<std::size_t> iters;
  std::vector<std::size_t> checkpoints;
  auto* tu = app.add_subcommand("tune", "Infer an unseen static context map from zero");
  add_common(tu, tune_c);
  tu->add_option("--weights", tune_weights, "Weight checkpoint")->required();
  tu->add_option("--data", tune_data, "Test dataset file or data directory")->required();
  tu->add_option("--iters", iters, "Tuning iterations (default from config)");
  tu->add_option("--checkpoints", checkpoints, "Snapshot iterations (default 5 20 80 500)");
  tu->add_option("--out", tune_out, "Directory for PGM/CSV snapshots")->required();

  std::size_t gc_seeds = 10;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full lattice gradients");
  gc->add_option("--seeds", gc_seeds, "Number of random problems");

  Common run_c;
  std::string run_out;
  auto* rn = app.add_subcommand("run", "generate + train + evaluate into one directory");
  add_common(rn, run_c);
  rn->add_option("--out", run_out, "Run directory")->required();

  for (Common* c : {&gen_c, &train_c, &eval_c, &tune_c, &run_c}) c->threads = default_threads();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*gen) {
    const ExperimentConfig cfg = resolve(gen_c);
    exporter::ensure_dir(gen_out);
    experiment::DataPair d = experiment::generate(cfg, gen_c.threads);
    wave::write_dataset(gen_out + "/train.dsta", d.train);
    wave::write_dataset(gen_out + "/test.dsta", d.test);
    std::ofstream(gen_out + "/config.ini") << to_text(cfg);
    if (export_csv || cfg.output.export_csv) {
      wave::export_csv(gen_out + "/csv/train", d.train);
      wave::export_csv(gen_out + "/csv/test", d.test);
      if (d.train.has_noise()) wave::export_csv(gen_out + "/csv/train_noisy", d.train, true);
      if (d.test.has_noise()) wave::export_csv(gen_out + "/csv/test_noisy", d.test, true);
    }
    std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test sequences to " << gen_out
              << '\n';
    return 0;
  }

  if (*tr) {
    const ExperimentConfig cfg = resolve(train_c);
    experiment::RunPaths paths{train_out, data_file(train_data, "train"), data_file(train_data, "test")};
    experiment::DataPair d{wave::read_dataset(paths.train_data), wave::read_dataset(paths.test_data)};
    const auto summary = experiment::run_train(cfg, d, paths, train_c.threads);
    std::cout << summary["metrics"].dump(2) << '\n';
    return 0;
  }

  if (*ev) {
    const ExperimentConfig cfg = resolve(eval_c);
    const wave::Dataset test = wave::read_dataset(data_file(eval_data, "test"));
    const bool want_at = eval_mode == "at" || (eval_mode == "auto" && test.has_noise());
    const bool want_tf = eval_mode != "at";
    if (want_at && !test.has_noise()) std::cerr << "note: test data is noise-free; AT wash-in runs on clean frames\n";

    std::vector<PKWeights> models;
    for (const auto& p : eval_weights) models.push_back(load_weights(p));
    if (repeat > 0) {
      const wave::Dataset train = wave::read_dataset(data_file(eval_data, "train"));
      for (std::size_t r = 0; r < repeat; ++r) {
        ExperimentConfig rc = cfg;
        rc.train.seed = r;
        std::cout << "training replicate " << r << "...\n" << std::flush;
        models.push_back(experiment::train_model(rc, train).weights);
      }
    }
    if (models.empty()) throw ConfigError("evaluate needs --weights or --repeat");

    std::vector<double> tf_means, at_means;
    for (std::size_t i = 0; i < models.size(); ++i) {
      const PKWeights& w = models[i];
      std::optional<tuning::TestTuneResult> tuned;
      const Tensor* ctx = nullptr;
      if (w.config.has_static()) {
        tuned = tuning::infer_test_context(w, test, cfg.tuning, cfg.tuning.test_iterations);
        ctx = &tuned->context;
      }
      const std::string label = "model " + std::to_string(i);
      if (want_tf) {
        EvalResult r = evaluate(w, test, ctx, cfg.train.tf_steps, cfg.train.cl_steps, eval_c.threads);
        print_eval(label + " teacher-forced wash-in", r);
        tf_means.push_back(r.mean);
      }
      if (want_at) {
        EvalResult r = tuning::evaluate_at_washin(w, test, ctx, cfg.tuning, cfg.train.tf_steps, cfg.train.cl_steps,
                                                  eval_c.threads);
        print_eval(label + " AT wash-in", r);
        at_means.push_back(r.mean);
      }
    }
    if (models.size() > 1) {
      if (!tf_means.empty()) print_eval("across models, teacher-forced", summarize(tf_means));
      if (!at_means.empty()) print_eval("across models, AT wash-in", summarize(at_means));
    }
    return 0;
  }

  if (*tu) {
    const ExperimentConfig cfg = resolve(tune_c);
    const PKWeights w = load_weights(tune_weights);
    const wave::Dataset test = wave::read_dataset(data_file(tune_data, "test"));
    const std::size_t n = iters.value_or(cfg.tuning.test_iterations);
    const auto& cps = checkpoints.empty() ? cfg.checkpoints : checkpoints;
    const auto r = tuning::infer_test_context(w, test, cfg.tuning, n, cps);
    experiment::write_snapshots(tune_out, r, w.config.height, w.config.width);
    for (const auto& [it, map] : r.snapshots) std::cout << "snapshot after " << it << " iterations\n";
    const auto rep = tuning::ordering_report(r.context.values(), test.velocity().s, cfg.data.train_speeds);
    print_ordering(rep);
    experiment::write_json(tune_out + "/ordering.json", experiment::ordering_json(rep));
    return 0;
  }

  if (*gc) {
    double worst = 0.0;
    for (std::size_t s = 0; s < gc_seeds; ++s) worst = std::max(worst, lattice_gradcheck(s));
    std::cout << "max relative error over " << gc_seeds << " problems: " << std::scientific << worst << '\n';
    return worst <= 1e-6 ? 0 : 3;
  }

  if (*rn) {
    const ExperimentConfig cfg = resolve(run_c);
    const auto summary = experiment::run_pipeline(cfg, run_out, run_c.threads);
    std::cout << summary["metrics"].dump(2) << '\n';
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
