#pragma once

#include "apvit/schema.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace apvit {

struct ModelConfig {
  int image_size = 224;
  int patch_size = 16;
  int channels = 1;
  int embed_dim = 768;
  int backbone_layers = 12;
  int attr_layers_per_branch = 1;
  int target_layers = 1;
  int heads = 12;
  bool decoder_enabled = true;
  int decoder_layers = 12;
  // Attribute identity is already carried by branch order; positional
  // embeddings in the target branch are off by default, which makes the
  // target head permutation-invariant over attribute order.
  bool target_positional_embeddings = false;
  AttributeSchema schema;
  TargetScale target;

  int patches_per_side() const { return image_size / patch_size; }
  int num_patches() const { return patches_per_side() * patches_per_side(); }
  int seq_len() const { return num_patches() + 1; }

  void validate() const;
};

struct PrototypeConfig {
  int per_class = 16;                      // P
  std::string loss_reduction = "mean_all"; // mean_all | min
};

struct AugmentConfig {
  bool rotate90 = false;
  double small_angle_deg = 0.0;
};

struct TrainConfig {
  double lr_main = 1e-3;
  double lr_prototypes = 1e-3;
  int epochs = 20;
  int warmup_epochs = 2;
  std::optional<double> warmup_val_accuracy_gate;
  int push_step = 2;
  double lambda_proto = 0.01;
  std::string class_weighting = "none";  // none | inverse_frequency
  // Explicit per-class weights, keyed "target" or "attr:<name>"; only
  // meaningful for nominal scales (cross-entropy).
  std::map<std::string, std::vector<double>> class_weights;
  int seed = 1;
  int batch_size = 32;
  bool deterministic = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  AugmentConfig augment;

  void validate() const;
};

struct DataConfig {
  std::string manifest;
  std::string preprocess_profile = "none";  // none | center_crop
  int crop_size = 0;                        // center_crop only; 0 = min(h, w)
  int split_k = 5;                          // 1/k of groups held out as test
  int test_fold = 0;
  double val_fraction = 0.1;
  int split_seed = 7;

  void validate() const;
};

struct SynthConfig {
  int n_samples = 2000;
  int image_size = 64;
  // target = round(clamp(bias + sum_i weight_i * factor_i, 1, 5))
  std::vector<double> target_weights = {0.25, 0.25, 0.25, 0.25};
  double target_bias = 0.0;
  int group_size = 4;  // consecutive samples sharing a group id
  int seed = 1;

  void validate() const;
};

// One experiment = model + prototypes + training + data binding.
struct ExperimentConfig {
  ModelConfig model;
  PrototypeConfig prototypes;
  TrainConfig train;
  DataConfig data;

  void validate() const;
};

// JSON round trip. Parsing rejects unknown keys so typos fail loudly.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg, int indent = 2);
ExperimentConfig load_config_file(const std::string& path);
void save_config_file(const ExperimentConfig& cfg, const std::string& path);

// Applies "dotted.path=value" overrides onto the JSON form of cfg.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& overrides);

// Flattened "key = default" listing for --help.
std::vector<std::string> config_key_listing(const ExperimentConfig& cfg);

// Named presets: "synthetic", "lidc", "derm7pt".
ExperimentConfig preset_config(const std::string& name);

SynthConfig synth_from_json_text(const std::string& text);
std::string synth_to_json_text(const SynthConfig& cfg, int indent = 2);
SynthConfig apply_synth_overrides(const SynthConfig& cfg,
                                  const std::vector<std::string>& overrides);

}  // namespace apvit
