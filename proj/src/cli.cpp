// SPDX-License-Identifier: Apache-2.0
#include "attmerge/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "attmerge/checkpoint.hpp"
#include "attmerge/config.hpp"
#include "attmerge/gradcheck_suite.hpp"

namespace attmerge {

namespace {

constexpr const char *kCheckpointFile = "model.tcnt";
constexpr const char *kTrainLogFile = "train_log.csv";
constexpr const char *kEerFile = "eer.csv";

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string fmt(const char *spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Options shared by the commands that build a RunConfig.
struct ConfigOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  void attach(CLI::App &cmd) {
    cmd.add_option("--config", config_path, "key = value config file");
    cmd.add_option("--seed", seed, "root seed (overrides the config)");
    cmd.add_option("--set", overrides, "override one config key, KEY=VALUE (repeatable)");
  }

  // File first, then --set, then --seed: flags win.
  RunConfig build() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto &kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

std::string manifest_text(const SyntheticSpec &spec, std::size_t bonafide, std::size_t spoof) {
  std::ostringstream m;
  m << "utterances = " << bonafide + spoof << "\n"
    << "bonafide = " << bonafide << "\n"
    << "spoof = " << spoof << "\n"
    << "seed = " << spec.seed << "\n"
    << "split = " << spec.split << "\n"
    << "frames = " << spec.min_frames << ".." << spec.max_frames << "\n"
    << "hidden = " << spec.hidden << "\n"
    << "layers = " << spec.layers << "\n"
    << "band = " << spec.band_first << ".." << spec.band_last << "\n"
    << "effect_size = " << fmt("%.17g", spec.effect_size) << "\n"
    << "noise_std = " << fmt("%.17g", spec.noise_std) << "\n";
  return m.str();
}

// Every stack must carry H = model hidden and at least K layers.
void check_dims(const std::vector<LabeledStack> &data, const ModelConfig &model, const fs::path &dir) {
  if (data.empty()) throw std::runtime_error(dir.string() + ": dataset is empty");
  const std::size_t k = model.active_layers();
  for (const auto &item : data) {
    const auto &s = item.stack;
    if (s.hidden() != model.encoder.hidden_dim || s.layers() < k) {
      throw std::runtime_error(dir.string() + ": utterance " + s.utterance_id + " has H=" +
                               std::to_string(s.hidden()) + ", L=" + std::to_string(s.layers()) +
                               " but the model needs H=" + std::to_string(model.encoder.hidden_dim) +
                               " and at least " + std::to_string(k) + " layers");
    }
  }
}

std::vector<LabeledStack> load_checked(const fs::path &dir, const ModelConfig &model) {
  auto data = read_dataset(dir, model.active_layers());
  check_dims(data, model, dir);
  return data;
}

std::string system_name(const ModelConfig &m) {
  return std::string(to_string(m.merge)) + "-" + std::string(to_string(m.head));
}

int cmd_gen_data(const ConfigOptions &opts, std::optional<std::uint64_t> split, const std::string &out_dir,
                 bool force, std::ostream &out) {
  RunConfig cfg = opts.build();
  SyntheticSpec spec = cfg.synthetic();
  if (split) spec.split = *split;
  spec.validate();
  const auto data = generate_synthetic(spec);
  const std::size_t spoof = static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](const auto &d) { return d.label == Label::spoof; }));
  write_dataset(out_dir, data, manifest_text(spec, data.size() - spoof, spoof), force);
  out << "wrote " << data.size() << " utterances to " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const ConfigOptions &opts, const std::string &out_dir, bool force, std::size_t workers,
              std::ostream &out) {
  RunConfig cfg = opts.build();
  if (!cfg.train_data || !cfg.dev_data) throw ConfigError("train needs paths.train and paths.dev");
  cfg.require_paths();
  if (fs::exists(out_dir) && !force) {
    throw PathExistsError(out_dir + " already exists (use --force to replace it)");
  }
  const auto train = load_checked(*cfg.train_data, cfg.model);
  const auto dev = load_checked(*cfg.dev_data, cfg.model);

  TrainOptions options = cfg.train;
  options.scoring_workers = workers;
  FitResult result = fit(Model::init(cfg.model, cfg.seed), train, dev, cfg.schedule, options, cfg.seed,
                         [&](const EpochLog &e) {
                           out << "epoch " << e.epoch << " lr " << fmt("%.6g", e.lr) << " frozen "
                               << (e.encoder_frozen ? "true" : "false") << " loss "
                               << fmt("%.6f", e.train_loss) << " dev_eer " << fmt("%.4f", e.dev_eer)
                               << "\n";
                         });

  std::ostringstream log;
  write_log_csv(log, result.log);
  publish_directory(out_dir, force, [&](const fs::path &staging) {
    save_model(staging / kCheckpointFile, result.best,
               {{"train.strategy", std::string(to_string(cfg.train.strategy))},
                {"train.best_epoch", std::to_string(result.best_epoch)},
                {"train.seed", std::to_string(cfg.seed)}});
    write_text_atomic(staging / kTrainLogFile, log.str());
  });
  out << "best epoch " << result.best_epoch << " dev_eer " << fmt("%.4f", result.best_dev_eer) << "\n";
  return kExitOk;
}

int cmd_evaluate(const ConfigOptions &opts, const std::string &checkpoint, std::vector<std::string> datasets,
                 const std::string &out_dir, bool force, std::size_t workers, std::ostream &out) {
  if (datasets.empty() && !opts.config_path.empty()) {
    for (const auto &p : opts.build().eval_data) datasets.push_back(p.string());
  }
  if (datasets.empty()) throw UsageError("evaluate needs at least one --data directory");
  if (fs::exists(out_dir) && !force) {
    throw PathExistsError(out_dir + " already exists (use --force to replace it)");
  }
  Model model = load_model(checkpoint);

  EerTable table;
  table.layer_counts = {model.config.active_layers()};
  EerTable::Row row{system_name(model.config), {{}}};
  std::vector<ScoreSet> scores;
  std::set<std::string> names;
  for (const auto &dir : datasets) {
    std::string name = fs::path(dir).lexically_normal().filename().string();
    if (name.empty()) name = fs::path(dir).lexically_normal().parent_path().filename().string();
    if (!names.insert(name).second) throw UsageError("two datasets share the name " + name);
    const auto data = load_checked(dir, model.config);
    scores.push_back(score_dataset(model, data, workers));
    table.datasets.push_back(name);
    row.eers[0].push_back(compute_eer(scores.back()));
  }
  table.rows.push_back(row);

  publish_directory(out_dir, force, [&](const fs::path &staging) {
    for (std::size_t d = 0; d < scores.size(); ++d) {
      write_score_file(staging / ("scores_" + table.datasets[d] + ".txt"), scores[d]);
      std::ostringstream det;
      write_det_csv(det, det_points(scores[d]));
      write_text_atomic(staging / ("det_" + table.datasets[d] + ".csv"), det.str());
    }
    std::ostringstream csv;
    table.write_csv(csv);
    write_text_atomic(staging / kEerFile, csv.str());
  });

  for (std::size_t d = 0; d < table.datasets.size(); ++d) {
    out << table.datasets[d] << " EER " << fmt("%.2f", 100.0 * row.eers[0][d]) << "%\n";
  }
  out << "Avg. EER " << fmt("%.2f", 100.0 * average_eer(row.eers[0])) << "%\n";
  return kExitOk;
}

int cmd_inspect_weights(const std::string &checkpoint, const std::string &data_dir, const std::string &out_file,
                        bool force, std::ostream &out) {
  Model model = load_model(checkpoint);
  Tensor weights;
  switch (model.config.merge) {
  case MergeMode::none:
    throw UsageError(checkpoint + " has no merging parameters (model.merge = none)");
  case MergeMode::linm:
    weights = normalized_weights(model.linm);
    break;
  case MergeMode::attm: {
    if (data_dir.empty()) throw UsageError("AttM inspection needs --data to average the gates over");
    const auto data = load_checked(data_dir, model.config);
    weights = Tensor({model.config.active_layers()});
    for (const auto &item : data) {
      const Tensor w = attention_weights(model, item.stack);
      for (std::size_t l = 0; l < weights.size(); ++l) weights[l] += w[l];
    }
    for (std::size_t l = 0; l < weights.size(); ++l) weights[l] /= static_cast<double>(data.size());
    break;
  }
  }

  std::ostringstream csv;
  csv << "layer_index,weight\n";
  for (std::size_t l = 0; l < weights.size(); ++l) csv << l + 1 << "," << fmt("%.17g", weights[l]) << "\n";
  if (out_file.empty()) {
    out << csv.str();
  } else {
    if (fs::exists(out_file) && !force) {
      throw PathExistsError(out_file + " already exists (use --force to replace it)");
    }
    write_text_atomic(out_file, csv.str());
  }
  return kExitOk;
}

int cmd_gradcheck(const ConfigOptions &opts, bool corrupt, std::ostream &out) {
  const RunConfig cfg = opts.build();
  auto blocks = trainable_blocks(cfg.model, cfg.train.strategy);
  if (corrupt && std::find(blocks.begin(), blocks.end(), Block::attm) == blocks.end()) {
    blocks.push_back(Block::attm);
  }
  bool ok = true;
  for (Block b : blocks) {
    const GradCheckReport r = check_block(b, ToyDims{}, cfg.seed, corrupt);
    const bool pass = r.max_relative_error < kGradCheckTolerance;
    ok = ok && pass;
    out << to_string(b) << " max_relative_error " << fmt("%.3e", r.max_relative_error) << " "
        << (pass ? "ok" : "FAIL") << "\n";
  }
  return ok ? kExitOk : kExitFailure;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Attentive and linear merging of transformer layer embeddings", "attmerge"};
  app.require_subcommand(1);

  std::function<int()> action;
  ConfigOptions cfg_opts;
  std::string out_path, checkpoint, data_dir;
  std::vector<std::string> data_dirs;
  std::optional<std::uint64_t> split;
  std::size_t workers = 1;
  bool force = false;
  bool corrupt = false;

  auto *gen = app.add_subcommand("gen-data", "write a synthetic layer-band dataset");
  cfg_opts.attach(*gen);
  gen->add_option("--split", split, "sample index (train, dev and eval sets differ only here)");
  gen->add_option("--out", out_path, "output dataset directory")->required();
  gen->add_flag("--force", force, "replace an existing output");
  gen->callback([&] { action = [&] { return cmd_gen_data(cfg_opts, split, out_path, force, out); }; });

  auto *train = app.add_subcommand("train", "train a model and write checkpoint and log");
  cfg_opts.attach(*train);
  train->add_option("--out", out_path, "output run directory")->required();
  train->add_option("--workers", workers, "threads for dev scoring")->check(CLI::PositiveNumber);
  train->add_flag("--force", force, "replace an existing output");
  train->callback([&] { action = [&] { return cmd_train(cfg_opts, out_path, force, workers, out); }; });

  auto *evaluate = app.add_subcommand("evaluate", "score datasets and report EERs");
  cfg_opts.attach(*evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "trained model")->required();
  evaluate->add_option("--data", data_dirs, "dataset directory (repeatable; default paths.eval)");
  evaluate->add_option("--out", out_path, "output report directory")->required();
  evaluate->add_option("--workers", workers, "scoring threads")->check(CLI::PositiveNumber);
  evaluate->add_flag("--force", force, "replace an existing output");
  evaluate->callback([&] {
    action = [&] { return cmd_evaluate(cfg_opts, checkpoint, data_dirs, out_path, force, workers, out); };
  });

  auto *inspect = app.add_subcommand("inspect-weights", "per-layer merging weights as CSV");
  inspect->add_option("--checkpoint", checkpoint, "trained model")->required();
  inspect->add_option("--data", data_dir, "dataset for averaging AttM gates");
  inspect->add_option("--out", out_path, "CSV file (default: stdout)");
  inspect->add_flag("--force", force, "replace an existing output");
  inspect->callback([&] {
    action = [&] { return cmd_inspect_weights(checkpoint, data_dir, out_path, force, out); };
  });

  auto *gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the trainable blocks");
  cfg_opts.attach(*gradcheck);
  gradcheck->add_flag("--corrupt-backward", corrupt, "negative control: break the AttM squeeze backward");
  gradcheck->callback([&] { action = [&] { return cmd_gradcheck(cfg_opts, corrupt, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError &e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

} // namespace attmerge
