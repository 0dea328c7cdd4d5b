#include "apvit/checkpoint.hpp"
#include "apvit/config.hpp"
#include "apvit/data.hpp"
#include "apvit/explain.hpp"
#include "apvit/metrics.hpp"
#include "apvit/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace apvit;

namespace {

using TrainScalar = float;

ExperimentConfig resolve_config(const std::string& config_path,
                                const std::string& preset,
                                const std::vector<std::string>& overrides,
                                const std::string& manifest) {
  ExperimentConfig cfg =
      config_path.empty() ? preset_config(preset) : load_config_file(config_path);
  cfg = apply_overrides(cfg, overrides);
  if (!manifest.empty()) cfg.data.manifest = manifest;
  cfg.validate();
  if (cfg.data.manifest.empty())
    throw UsageError("no dataset manifest given (config data.manifest or --manifest)");
  return cfg;
}

FoldSplit pick_fold(const Dataset& ds, const DataConfig& dc) {
  auto folds =
      group_stratified_folds(ds, dc.split_k, dc.val_fraction, dc.split_seed);
  if (dc.test_fold < 0 || dc.test_fold >= static_cast<int>(folds.size()))
    throw DataError("test_fold " + std::to_string(dc.test_fold) +
                    " out of range for k=" + std::to_string(dc.split_k));
  return folds[dc.test_fold];
}

std::string config_help_footer() {
  std::ostringstream os;
  os << "config keys (with defaults):\n";
  for (const auto& line : config_key_listing(ExperimentConfig{}))
    os << "  " << line << "\n";
  os << "presets: synthetic, lidc, derm7pt\n";
  return os.str();
}

void apply_wilson(MetricReport& rep) {
  for (auto& e : rep.entries) {
    if (e.metric == "dice") continue;
    auto ci = binomial_ci95(e.value, e.n, true);
    e.ci_low = ci.first;
    e.ci_high = ci.second;
  }
}

int cmd_synth(const std::string& out_dir, const std::string& config_path,
              const std::vector<std::string>& overrides) {
  SynthConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open config: " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = synth_from_json_text(ss.str());
  }
  cfg = apply_synth_overrides(cfg, overrides);
  cfg.validate();
  generate_synthetic(cfg, out_dir);
  std::cout << "wrote " << cfg.n_samples << " samples under " << out_dir
            << " (manifest.jsonl)\n";
  return 0;
}

int cmd_train(const std::string& out_dir, const std::string& config_path,
              const std::string& preset, const std::string& manifest,
              const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = resolve_config(config_path, preset, overrides, manifest);
  Dataset ds = Dataset::load(cfg.data.manifest, cfg.model, cfg.data);
  ds.set_stats(ds.compute_stats());
  FoldSplit split = pick_fold(ds, cfg.data);
  Trainer<TrainScalar> trainer(cfg, ds, split, out_dir);
  trainer.run();
  std::cout << "training done; checkpoint.apvt, checkpoint_best.apvt and "
               "train_log.jsonl under "
            << out_dir << "\n";
  return 0;
}

std::vector<int> split_indices(const FoldSplit& split, const Dataset& ds,
                               const std::string& which) {
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  if (which == "test") return split.test;
  if (which == "all") {
    std::vector<int> all(ds.size());
    for (int i = 0; i < ds.size(); ++i) all[i] = i;
    return all;
  }
  throw UsageError("unknown split: " + which);
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& which, bool proto_inference, int folds,
             bool wilson, const std::string& out_dir) {
  auto ck = load_checkpoint<TrainScalar>(checkpoint);
  ExperimentConfig cfg = ck.meta.config;
  std::string mpath = manifest.empty() ? cfg.data.manifest : manifest;
  if (mpath.empty()) throw UsageError("no manifest (config data.manifest or --manifest)");
  Dataset ds = Dataset::load(mpath, cfg.model, cfg.data);
  ds.set_stats(ck.meta.stats);

  MetricReport rep;
  if (folds > 0) {
    auto all_splits =
        group_stratified_folds(ds, folds, cfg.data.val_fraction, cfg.data.split_seed);
    std::vector<int> all(ds.size());
    for (int i = 0; i < ds.size(); ++i) all[i] = i;
    auto pooled = evaluate<TrainScalar>(*ck.model, ck.bank.get(), ds, all,
                                        proto_inference, cfg.train.batch_size);
    rep = pooled.report;
    rep.split = "folds:" + std::to_string(folds);
    for (int f = 0; f < folds; ++f) {
      auto fold_out =
          evaluate<TrainScalar>(*ck.model, ck.bank.get(), ds, all_splits[f].test,
                                proto_inference, cfg.train.batch_size);
      for (size_t e = 0; e < rep.entries.size(); ++e)
        rep.entries[e].fold_values.push_back(fold_out.report.entries[e].value);
    }
  } else {
    FoldSplit split = pick_fold(ds, cfg.data);
    auto outc = evaluate<TrainScalar>(*ck.model, ck.bank.get(), ds,
                                      split_indices(split, ds, which),
                                      proto_inference, cfg.train.batch_size);
    rep = outc.report;
    rep.split = which;
  }
  if (wilson) apply_wilson(rep);
  std::cout << render_metric_table(rep);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::string name = "metrics_" +
                       (folds > 0 ? "folds" + std::to_string(folds) : which) +
                       "_" + rep.mode + ".json";
    std::ofstream out(fs::path(out_dir) / name);
    out << metric_report_json(rep);
    std::cout << "wrote " << (fs::path(out_dir) / name).string() << "\n";
  }
  return 0;
}

int cmd_explain(const std::string& checkpoint, const std::string& manifest,
                const std::string& ids_csv, bool proto_inference, bool rollout,
                const std::string& out_dir) {
  auto ck = load_checkpoint<TrainScalar>(checkpoint);
  ExperimentConfig cfg = ck.meta.config;
  std::string mpath = manifest.empty() ? cfg.data.manifest : manifest;
  if (mpath.empty()) throw UsageError("no manifest (config data.manifest or --manifest)");
  Dataset ds = Dataset::load(mpath, cfg.model, cfg.data);
  ds.set_stats(ck.meta.stats);

  std::vector<std::string> ids;
  std::stringstream ss(ids_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) ids.push_back(tok);
  }
  if (ids.empty()) throw UsageError("no sample ids given");
  for (const auto& id : ids) {
    int idx = ds.index_by_id(id);
    if (idx < 0) throw DataError("sample id not found: " + id);
    ExplanationReport rep = explain_sample<TrainScalar>(
        *ck.model, *ck.bank, ds, idx, proto_inference, rollout, out_dir);
    std::cout << rep.report_path << "\n";
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& files) {
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot open metrics file: " + f);
    std::stringstream ss;
    ss << in.rdbuf();
    MetricReport rep = metric_report_from_json(ss.str());
    std::cout << f << "\n" << render_metric_table(rep) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-prototype vision transformer"};
  app.require_subcommand(1);

  std::string out_dir, config_path, preset = "synthetic", manifest;
  std::string checkpoint, split = "test", ids;
  std::vector<std::string> overrides, metric_files;
  bool proto_inference = false, rollout = false, wilson = false;
  int folds = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--config", config_path, "synth config JSON");
  synth->add_option("--set", overrides, "override key=value");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--config", config_path, "experiment config JSON");
  train->add_option("--preset", preset, "config preset (default synthetic)");
  train->add_option("--manifest", manifest, "dataset manifest path");
  train->add_option("--set", overrides, "override dotted.key=value");
  train->footer(config_help_footer());

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  eval->add_option("--manifest", manifest, "dataset manifest path");
  eval->add_option("--split", split, "train|val|test|all (default test)");
  eval->add_flag("--proto-inference", proto_inference,
                 "replace attribute vectors with nearest prototypes");
  eval->add_option("--folds", folds, "evaluate across k cross-validation folds");
  eval->add_flag("--wilson", wilson, "Wilson score intervals instead of Wald");
  eval->add_option("--out", out_dir, "directory for the metrics JSON");

  auto* explain = app.add_subcommand("explain", "emit explanation reports");
  explain->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  explain->add_option("--manifest", manifest, "dataset manifest path");
  explain->add_option("--ids", ids, "comma-separated sample ids")->required();
  explain->add_flag("--proto-inference", proto_inference,
                    "prototype-inference mode");
  explain->add_flag("--rollout", rollout, "compose backbone attention rollout");
  explain->add_option("--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "render metric tables");
  report->add_option("files", metric_files, "metrics JSON files")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(out_dir, config_path, overrides);
    if (train->parsed())
      return cmd_train(out_dir, config_path, preset, manifest, overrides);
    if (eval->parsed())
      return cmd_eval(checkpoint, manifest, split, proto_inference, folds,
                      wilson, out_dir);
    if (explain->parsed())
      return cmd_explain(checkpoint, manifest, ids, proto_inference, rollout,
                         out_dir);
    if (report->parsed()) return cmd_report(metric_files);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
