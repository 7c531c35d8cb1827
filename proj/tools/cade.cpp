// Command-line front end: synth, preprocess, train, infer, segment, evaluate, compare.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>

#include "cade/error.hpp"
#include "cade/imaging/synth.hpp"
#include "cade/kv.hpp"
#include "cade/net/checkpoint.hpp"
#include "cade/net/train.hpp"
#include "cade/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cade;

namespace {

struct Options {
  std::string config;

  // synth
  std::string out;
  std::size_t patients = 60, holdout = 0, slices = 12, size = 128;
  double abnormal_fraction = 0.6, noise_sd = 0.05;

  // shared
  std::string data;
  std::uint64_t seed = 1;

  // preprocess
  std::string stats;
  std::size_t input_size = pipeline::kInputSize;

  // train
  std::string net = "ccnn";
  std::size_t epochs = 50, batch_size = 200, kernel_size = 3;
  bool no_augment = false, extra_block = false;
  double dropout = -1.0, leaky_alpha = 0.0, validation_fraction = 0.1;
  double learning_rate = 1.0, rho = 0.95, epsilon = 1e-8;
  bool quiet = false;

  // infer / segment
  std::string ccnn, dcnn, boxes, sequence = "T2", mae_variant = "per_coordinate";
  double abnormal_threshold = 0.05, decision_threshold = 0.5;
  std::size_t max_iter = 500;
  bool nondeterministic = false;

  // evaluate / compare
  std::string run, truth, masks, a, b, metric = "abs_prob_err";
};

struct Cli {
  std::unique_ptr<CLI::App> app;
  std::vector<CLI::App*> commands;
};

Cli make_cli(Options& o) {
  Cli cli;
  cli.app = std::make_unique<CLI::App>("Brain-tumor CADe: slice classifier, box detector and GrowCut segmentation");
  auto& app = *cli.app;
  app.require_subcommand(1);
  app.add_option("--config", o.config, "flat key=value file; keys mirror the long flag names");

  auto* synth = app.add_subcommand("synth", "generate a synthetic study set");
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--patients", o.patients, "number of patients");
  synth->add_option("--holdout", o.holdout, "patients written to out/test (the rest go to out/train)");
  synth->add_option("--seed", o.seed, "generator seed");
  synth->add_option("--slices", o.slices, "slices per study");
  synth->add_option("--size", o.size, "native slice height and width");
  synth->add_option("--abnormal-fraction", o.abnormal_fraction, "probability a patient has a tumor");
  synth->add_option("--noise-sd", o.noise_sd, "Gaussian noise level");

  auto* pre = app.add_subcommand("preprocess", "median filter, standardize and resize a study set");
  pre->add_option("--data", o.data, "raw study directory")->required();
  pre->add_option("--out", o.out, "output directory")->required();
  pre->add_option("--stats", o.stats, "reuse statistics from this stats.txt instead of computing them");
  pre->add_option("--input-size", o.input_size, "network input size");

  auto* train = app.add_subcommand("train", "train the classifier or the detector");
  train->add_option("--net", o.net, "ccnn or dcnn")->required();
  train->add_option("--data", o.data, "preprocessed directory")->required();
  train->add_option("--out", o.out, "checkpoint file")->required();
  train->add_option("--epochs", o.epochs, "passes over the training set");
  train->add_option("--batch-size", o.batch_size, "mini-batch size");
  train->add_option("--seed", o.seed, "seed for init, shuffling, dropout and flips");
  train->add_flag("--no-augment", o.no_augment, "disable random flips");
  train->add_option("--dropout", o.dropout, "dropout probability (default 0.2 ccnn, 0.5 dcnn)");
  train->add_option("--leaky-alpha", o.leaky_alpha, "LeakyReLU slope, 0 keeps ReLU");
  train->add_option("--kernel-size", o.kernel_size, "convolution kernel size of the 3x3 layers");
  train->add_flag("--extra-block", o.extra_block, "add a conv-conv-pool block");
  train->add_option("--validation-fraction", o.validation_fraction, "share held out for validation loss");
  train->add_option("--learning-rate", o.learning_rate, "AdaDelta learning rate");
  train->add_option("--rho", o.rho, "AdaDelta decay");
  train->add_option("--epsilon", o.epsilon, "AdaDelta epsilon");
  train->add_flag("--quiet", o.quiet, "no per-epoch log");

  auto* infer = app.add_subcommand("infer", "classify, detect and segment every study");
  infer->add_option("--data", o.data, "raw study directory")->required();
  infer->add_option("--ccnn", o.ccnn, "classifier checkpoint")->required();
  infer->add_option("--dcnn", o.dcnn, "detector checkpoint")->required();
  infer->add_option("--out", o.out, "output directory")->required();
  infer->add_option("--abnormal-threshold", o.abnormal_threshold, "flagged share a study must exceed");
  infer->add_option("--decision-threshold", o.decision_threshold, "slice probability threshold");
  infer->add_option("--sequence", o.sequence, "sequence segmented by GrowCut");
  infer->add_option("--max-iter", o.max_iter, "GrowCut iteration cap");
  infer->add_option("--mae-variant", o.mae_variant, "literal or per_coordinate");
  infer->add_flag("--nondeterministic", o.nondeterministic, "record the run as non-deterministic");
  infer->add_option("--seed", o.seed, "recorded seed");

  auto* segment = app.add_subcommand("segment", "GrowCut masks for given boxes");
  segment->add_option("--data", o.data, "raw study directory")->required();
  segment->add_option("--boxes", o.boxes, "boxes in ground-truth CSV form, native pixels")->required();
  segment->add_option("--out", o.out, "output directory")->required();
  segment->add_option("--sequence", o.sequence, "sequence segmented by GrowCut");
  segment->add_option("--max-iter", o.max_iter, "GrowCut iteration cap");

  auto* evaluate = app.add_subcommand("evaluate", "score a run against ground truth");
  evaluate->add_option("--run", o.run, "infer or segment output directory")->required();
  evaluate->add_option("--truth", o.truth, "native ground_truth.csv")->required();
  evaluate->add_option("--masks", o.masks, "directory with <patient>/mask.miv reference masks");
  evaluate->add_option("--out", o.out, "output directory")->required();
  evaluate->add_option("--mae-variant", o.mae_variant, "headline MAE: literal or per_coordinate");

  auto* compare = app.add_subcommand("compare", "paired t-test between two evaluations");
  compare->add_option("--a", o.a, "first evaluation directory or eval_slices.csv")->required();
  compare->add_option("--b", o.b, "second evaluation directory or eval_slices.csv")->required();
  compare->add_option("--metric", o.metric, "per-slice column to compare");
  compare->add_option("--out", o.out, "write the result here as key=value");

  cli.commands = {synth, pre, train, infer, segment, evaluate, compare};
  return cli;
}

CLI::App* active(const Cli& cli) {
  for (auto* c : cli.commands) {
    if (c->parsed()) return c;
  }
  return nullptr;
}

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

bool truthy(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' needs a boolean, got '" + v + "'");
}

/// Appends config-file values for options not given on the command line.
std::vector<std::string> merge_config(const Cli& cli, const std::string& path, std::vector<std::string> args) {
  kv::Document doc;
  try {
    doc = kv::load(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  CLI::App* cmd = active(cli);
  for (const auto& [key, value] : doc.entries) {
    const std::string flag = flag_name(key);
    if (key == "config") throw ConfigError("config files cannot nest");
    const CLI::Option* opt = nullptr;
    try {
      opt = cmd->get_option(flag);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError("config key '" + key + "' is not an option of '" + cmd->get_name() + "'");
    }
    if (opt->count() > 0) continue;  // command line wins
    if (opt->get_expected_max() == 0) {
      if (truthy(key, value)) args.push_back(flag);
    } else {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

net::NetworkSpec build_spec(const Options& o) {
  net::ArchOptions arch;
  arch.leaky_alpha = o.leaky_alpha;
  arch.kernel_size = o.kernel_size;
  arch.extra_block = o.extra_block;
  arch.dropout = o.dropout;
  if (arch.kernel_size == 0 || arch.kernel_size % 2 == 0) throw ConfigError("kernel-size must be odd");
  if (!(arch.leaky_alpha >= 0.0 && arch.leaky_alpha < 1.0)) throw ConfigError("leaky-alpha must lie in [0, 1)");
  if (arch.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  const net::NetKind kind = net::net_kind_from_string(o.net);
  return kind == net::NetKind::ccnn ? net::build_ccnn(arch) : net::build_dcnn(arch);
}

int cmd_synth(const Options& o) {
  if (o.holdout >= o.patients && o.holdout > 0) throw ConfigError("holdout must leave at least one training patient");
  imaging::SynthConfig cfg;
  cfg.patients = o.patients;
  cfg.slices = o.slices;
  cfg.height = cfg.width = o.size;
  cfg.abnormal_fraction = o.abnormal_fraction;
  cfg.noise_sd = o.noise_sd;
  if (!(cfg.abnormal_fraction >= 0.0 && cfg.abnormal_fraction <= 1.0)) {
    throw ConfigError("abnormal-fraction must lie in [0, 1]");
  }
  if (!(cfg.noise_sd > 0.0)) throw ConfigError("noise-sd must be positive");
  Rng rng(o.seed);
  imaging::SynthDataset all = imaging::synth_generate(cfg, rng);
  if (o.holdout == 0) {
    imaging::save_synth_dataset(all, o.out);
  } else {
    imaging::SynthDataset train, test;
    const std::size_t n_train = o.patients - o.holdout;
    for (std::size_t i = 0; i < all.patients.size(); ++i) {
      auto& dst = i < n_train ? train : test;
      const std::string id = all.patients[i].study.patient_id;
      dst.truth[id] = all.truth.at(id);
      dst.patients.push_back(std::move(all.patients[i]));
    }
    imaging::save_synth_dataset(train, fs::path(o.out) / "train");
    imaging::save_synth_dataset(test, fs::path(o.out) / "test");
  }
  std::cout << "wrote " << o.patients << " synthetic patients to " << o.out << "\n";
  return 0;
}

int cmd_preprocess(const Options& o) {
  const auto s = pipeline::preprocess_directory(o.data, o.out, o.stats.empty() ? std::nullopt
                                                                               : std::optional<fs::path>(o.stats),
                                                o.input_size);
  std::cout << "preprocessed " << s.patients << " studies (" << (s.stats_computed ? "computed" : "reused")
            << " statistics)\n";
  return 0;
}

int cmd_train(const Options& o) {
  const net::NetworkSpec spec = build_spec(o);
  const net::Dataset data = pipeline::load_training_set(o.data, spec.kind);
  net::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  cfg.augment = !o.no_augment;
  cfg.validation_fraction = o.validation_fraction;
  cfg.optimizer.learning_rate = o.learning_rate;
  cfg.optimizer.rho = o.rho;
  cfg.optimizer.epsilon = o.epsilon;
  if (!(cfg.optimizer.rho > 0.0 && cfg.optimizer.rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(cfg.optimizer.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(cfg.optimizer.learning_rate > 0.0)) throw ConfigError("learning-rate must be positive");
  std::cout << "training " << net::to_string(spec.kind) << " on " << data.size() << " slices, "
            << net::param_count(spec) << " parameters\n";
  const auto result = net::train(spec, data, cfg, [&](const net::EpochStats& s) {
    if (o.quiet) return;
    std::cout << "epoch " << s.epoch << " train_loss=" << kv::format_number(s.train_loss)
              << " validation_loss=" << kv::format_number(s.validation_loss) << std::endl;
  });
  net::save_checkpoint(result.checkpoint, o.out);
  std::cout << "initial_loss=" << kv::format_number(result.initial_loss)
            << " final_loss=" << kv::format_number(result.final_loss) << "\n";
  return 0;
}

int cmd_infer(const Options& o) {
  pipeline::PipelineConfig cfg;
  cfg.volumes = o.data;
  cfg.ccnn_checkpoint = o.ccnn;
  cfg.dcnn_checkpoint = o.dcnn;
  cfg.output = o.out;
  cfg.abnormal_threshold = o.abnormal_threshold;
  cfg.decision_threshold = o.decision_threshold;
  cfg.growcut_sequence = imaging::sequence_from_string(o.sequence);
  cfg.growcut_max_iter = o.max_iter;
  cfg.mae_variant = metrics::mae_variant_from_string(o.mae_variant);
  cfg.deterministic = !o.nondeterministic;
  cfg.seed = o.seed;
  const auto report = pipeline::run_pipeline(cfg);
  std::cout << report.patients.size() << " studies, " << *report.summary.get("patients.abnormal")
            << " abnormal, " << *report.summary.get("masks") << " masks\n";
  return 0;
}

int cmd_segment(const Options& o) {
  const auto report =
      pipeline::run_segmentation(o.data, o.boxes, o.out, imaging::sequence_from_string(o.sequence), o.max_iter);
  std::cout << *report.summary.get("masks") << " masks\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto truth = imaging::load_ground_truth(o.truth);
  const auto eval = pipeline::evaluate_run(o.run, truth, o.masks.empty() ? std::nullopt : std::optional<fs::path>(o.masks),
                                           metrics::mae_variant_from_string(o.mae_variant));
  pipeline::write_evaluation(eval, o.out);
  std::cout << kv::format(eval.summary);
  return 0;
}

int cmd_compare(const Options& o) {
  const auto r = pipeline::compare_runs(o.a, o.b, o.metric);
  kv::Document doc;
  doc.set("metric", o.metric);
  doc.set("n", static_cast<long long>(r.n));
  doc.set("mean_difference", r.mean_difference);
  doc.set("t", r.t);
  doc.set("df", r.df);
  doc.set("p", r.p);
  doc.set("degenerate", static_cast<long long>(r.degenerate));
  doc.set("significant_at_0.05", static_cast<long long>(r.p < 0.05));
  if (!o.out.empty()) kv::save(doc, o.out);
  std::cout << kv::format(doc);
  return 0;
}

int dispatch(const std::string& name, const Options& o) {
  if (name == "synth") return cmd_synth(o);
  if (name == "preprocess") return cmd_preprocess(o);
  if (name == "train") return cmd_train(o);
  if (name == "infer") return cmd_infer(o);
  if (name == "segment") return cmd_segment(o);
  if (name == "evaluate") return cmd_evaluate(o);
  return cmd_compare(o);
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  Options o;
  Cli cli = make_cli(o);
  const bool has_config = std::any_of(args.begin(), args.end(), [](const std::string& a) {
    return a == "--config" || a.rfind("--config=", 0) == 0;
  });
  if (has_config) {
    // Required values may come from the file; the second parse enforces them.
    for (auto* c : cli.commands) {
      for (auto* opt : c->get_options()) opt->required(false);
    }
  }
  {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      cli.app->parse(rev);
    } catch (const CLI::ParseError& e) {
      return cli.app->exit(e) == 0 ? 0 : int(ExitCode::validation);
    }
  }
  if (!o.config.empty()) {
    auto merged = merge_config(cli, o.config, args);
    Options fresh;
    Cli again = make_cli(fresh);
    std::vector<std::string> rev(merged.rbegin(), merged.rend());
    try {
      again.app->parse(rev);
    } catch (const CLI::ParseError& e) {
      return again.app->exit(e) == 0 ? 0 : int(ExitCode::validation);
    }
    o = fresh;
    return dispatch(active(again)->get_name(), o);
  }
  return dispatch(active(cli)->get_name(), o);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ExitCode::io);
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return int(ExitCode::numeric);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ExitCode::validation);
  }
}
