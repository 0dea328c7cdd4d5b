#include "apvit/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace apvit {

using nlohmann::json;

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0)
    throw ConfigError("image_size and patch_size must be positive");
  if (image_size % patch_size != 0)
    throw ConfigError("image_size must be divisible by patch_size");
  if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
  if (heads <= 0 || embed_dim % heads != 0)
    throw ConfigError("embed_dim must be divisible by heads");
  if (channels != 1 && channels != 3)
    throw ConfigError("channels must be 1 or 3");
  if (backbone_layers < 1 || attr_layers_per_branch < 1 || target_layers < 1)
    throw ConfigError("layer counts must be >= 1");
  if (decoder_enabled && decoder_layers < 1)
    throw ConfigError("decoder_layers must be >= 1 when the decoder is enabled");
  schema.validate();
  if (target.ordinal) {
    if (target.lo >= target.hi) throw ConfigError("target ordinal range needs lo < hi");
  } else if (target.classes.size() < 2) {
    throw ConfigError("nominal target needs >= 2 classes");
  }
}

void TrainConfig::validate() const {
  if (lr_main <= 0 || lr_prototypes <= 0) throw ConfigError("learning rates must be positive");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    throw ConfigError("warmup_epochs must satisfy 0 <= warmup_epochs < epochs");
  if (push_step < 1) throw ConfigError("push_step must be >= 1");
  if (lambda_proto < 0) throw ConfigError("lambda_proto must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (warmup_val_accuracy_gate &&
      (*warmup_val_accuracy_gate < 0 || *warmup_val_accuracy_gate > 1))
    throw ConfigError("warmup_val_accuracy_gate must be in [0, 1]");
  if (class_weighting != "none" && class_weighting != "inverse_frequency")
    throw ConfigError("class_weighting must be none or inverse_frequency");
  for (const auto& [key, w] : class_weights)
    for (double x : w)
      if (x <= 0) throw ConfigError("class_weights[" + key + "] must be positive");
}

void DataConfig::validate() const {
  if (split_k < 2) throw ConfigError("split_k must be >= 2");
  if (test_fold < 0 || test_fold >= split_k)
    throw ConfigError("test_fold must be in [0, split_k)");
  if (val_fraction < 0 || val_fraction >= 1)
    throw ConfigError("val_fraction must be in [0, 1)");
  if (preprocess_profile != "none" && preprocess_profile != "center_crop")
    throw ConfigError("preprocess_profile must be none or center_crop");
}

void SynthConfig::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (image_size < 16) throw ConfigError("image_size must be >= 16");
  if (target_weights.size() != 4) throw ConfigError("target_weights needs 4 entries");
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
  if (prototypes.per_class < 1) throw ConfigError("prototypes.per_class must be >= 1");
  if (prototypes.loss_reduction != "mean_all" && prototypes.loss_reduction != "min")
    throw ConfigError("prototypes.loss_reduction must be mean_all or min");
  for (const auto& [key, w] : train.class_weights) {
    if (key == "target") {
      if (!model.target.ordinal && w.size() != model.target.classes.size())
        throw ConfigError("class_weights[target] length mismatch");
    } else if (key.rfind("attr:", 0) == 0) {
      int a = model.schema.index_of(key.substr(5));
      const auto& scale = model.schema.at(a).scale;
      if (!scale.ordinal && static_cast<int>(w.size()) != scale.value_count())
        throw ConfigError("class_weights[" + key + "] length mismatch");
    } else {
      throw ConfigError("class_weights key must be 'target' or 'attr:<name>': " + key);
    }
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw ConfigError("unknown config key: " + where + "." + it.key());
  }
}

json scale_to_json(const AttributeScale& s) {
  json j;
  if (s.ordinal) {
    j["kind"] = "ordinal";
    j["lo"] = s.lo;
    j["hi"] = s.hi;
  } else {
    j["kind"] = "nominal";
    j["classes"] = s.classes;
  }
  return j;
}

AttributeScale scale_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "lo", "hi", "classes"}, where);
  AttributeScale s;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "ordinal") {
    s.ordinal = true;
    s.lo = j.value("lo", 1);
    s.hi = j.value("hi", 5);
  } else if (kind == "nominal") {
    s.ordinal = false;
    s.classes = j.at("classes").get<std::vector<std::string>>();
  } else {
    throw ConfigError(where + ".kind must be ordinal or nominal");
  }
  return s;
}

json config_to_json(const ExperimentConfig& cfg) {
  json m;
  m["image_size"] = cfg.model.image_size;
  m["patch_size"] = cfg.model.patch_size;
  m["channels"] = cfg.model.channels;
  m["embed_dim"] = cfg.model.embed_dim;
  m["backbone_layers"] = cfg.model.backbone_layers;
  m["attr_layers_per_branch"] = cfg.model.attr_layers_per_branch;
  m["target_layers"] = cfg.model.target_layers;
  m["heads"] = cfg.model.heads;
  m["decoder_enabled"] = cfg.model.decoder_enabled;
  m["decoder_layers"] = cfg.model.decoder_layers;
  m["target_positional_embeddings"] = cfg.model.target_positional_embeddings;
  json attrs = json::array();
  for (const auto& a : cfg.model.schema.attributes) {
    json ja = scale_to_json(a.scale);
    ja["name"] = a.name;
    attrs.push_back(ja);
  }
  m["attributes"] = attrs;
  m["target"] = scale_to_json(cfg.model.target);

  json p;
  p["per_class"] = cfg.prototypes.per_class;
  p["loss_reduction"] = cfg.prototypes.loss_reduction;

  json t;
  t["lr_main"] = cfg.train.lr_main;
  t["lr_prototypes"] = cfg.train.lr_prototypes;
  t["epochs"] = cfg.train.epochs;
  t["warmup_epochs"] = cfg.train.warmup_epochs;
  if (cfg.train.warmup_val_accuracy_gate)
    t["warmup_val_accuracy_gate"] = *cfg.train.warmup_val_accuracy_gate;
  else
    t["warmup_val_accuracy_gate"] = nullptr;
  t["push_step"] = cfg.train.push_step;
  t["lambda_proto"] = cfg.train.lambda_proto;
  t["class_weighting"] = cfg.train.class_weighting;
  if (!cfg.train.class_weights.empty()) {
    json w = json::object();
    for (const auto& [k, v] : cfg.train.class_weights) w[k] = v;
    t["class_weights"] = w;
  }
  t["seed"] = cfg.train.seed;
  t["batch_size"] = cfg.train.batch_size;
  t["deterministic"] = cfg.train.deterministic;
  t["adam_beta1"] = cfg.train.adam_beta1;
  t["adam_beta2"] = cfg.train.adam_beta2;
  t["adam_eps"] = cfg.train.adam_eps;
  t["augment_rotate90"] = cfg.train.augment.rotate90;
  t["augment_small_angle_deg"] = cfg.train.augment.small_angle_deg;

  json d;
  d["manifest"] = cfg.data.manifest;
  d["preprocess_profile"] = cfg.data.preprocess_profile;
  d["crop_size"] = cfg.data.crop_size;
  d["split_k"] = cfg.data.split_k;
  d["test_fold"] = cfg.data.test_fold;
  d["val_fraction"] = cfg.data.val_fraction;
  d["split_seed"] = cfg.data.split_seed;

  json root;
  root["model"] = m;
  root["prototypes"] = p;
  root["train"] = t;
  root["data"] = d;
  return root;
}

ExperimentConfig config_from_json(const json& root) {
  ExperimentConfig cfg = preset_config("synthetic");  // defaults, overwritten below
  check_keys(root, {"model", "prototypes", "train", "data"}, "<root>");

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m,
               {"image_size", "patch_size", "channels", "embed_dim",
                "backbone_layers", "attr_layers_per_branch", "target_layers",
                "heads", "decoder_enabled", "decoder_layers",
                "target_positional_embeddings", "attributes", "target"},
               "model");
    ModelConfig& mc = cfg.model;
    mc.image_size = m.value("image_size", mc.image_size);
    mc.patch_size = m.value("patch_size", mc.patch_size);
    mc.channels = m.value("channels", mc.channels);
    mc.embed_dim = m.value("embed_dim", mc.embed_dim);
    mc.backbone_layers = m.value("backbone_layers", mc.backbone_layers);
    mc.attr_layers_per_branch = m.value("attr_layers_per_branch", mc.attr_layers_per_branch);
    mc.target_layers = m.value("target_layers", mc.target_layers);
    mc.heads = m.value("heads", mc.heads);
    mc.decoder_enabled = m.value("decoder_enabled", mc.decoder_enabled);
    mc.decoder_layers = m.value("decoder_layers", mc.decoder_layers);
    mc.target_positional_embeddings =
        m.value("target_positional_embeddings", mc.target_positional_embeddings);
    if (m.contains("attributes")) {
      mc.schema.attributes.clear();
      int i = 0;
      for (const json& ja : m.at("attributes")) {
        check_keys(ja, {"name", "kind", "lo", "hi", "classes"},
                   "model.attributes[" + std::to_string(i) + "]");
        Attribute attr;
        attr.name = ja.at("name").get<std::string>();
        json scale_only = ja;
        scale_only.erase("name");
        attr.scale =
            scale_from_json(scale_only, "model.attributes[" + std::to_string(i) + "]");
        mc.schema.attributes.push_back(attr);
        ++i;
      }
    }
    if (m.contains("target")) mc.target = scale_from_json(m.at("target"), "model.target");
  }

  if (root.contains("prototypes")) {
    const json& p = root.at("prototypes");
    check_keys(p, {"per_class", "loss_reduction"}, "prototypes");
    cfg.prototypes.per_class = p.value("per_class", cfg.prototypes.per_class);
    cfg.prototypes.loss_reduction = p.value("loss_reduction", cfg.prototypes.loss_reduction);
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t,
               {"lr_main", "lr_prototypes", "epochs", "warmup_epochs",
                "warmup_val_accuracy_gate", "push_step", "lambda_proto",
                "class_weighting", "class_weights", "seed", "batch_size",
                "deterministic", "adam_beta1", "adam_beta2", "adam_eps",
                "augment_rotate90", "augment_small_angle_deg"},
               "train");
    TrainConfig& tc = cfg.train;
    tc.lr_main = t.value("lr_main", tc.lr_main);
    tc.lr_prototypes = t.value("lr_prototypes", tc.lr_prototypes);
    tc.epochs = t.value("epochs", tc.epochs);
    tc.warmup_epochs = t.value("warmup_epochs", tc.warmup_epochs);
    if (t.contains("warmup_val_accuracy_gate") && !t.at("warmup_val_accuracy_gate").is_null())
      tc.warmup_val_accuracy_gate = t.at("warmup_val_accuracy_gate").get<double>();
    else if (t.contains("warmup_val_accuracy_gate"))
      tc.warmup_val_accuracy_gate.reset();
    tc.push_step = t.value("push_step", tc.push_step);
    tc.lambda_proto = t.value("lambda_proto", tc.lambda_proto);
    tc.class_weighting = t.value("class_weighting", tc.class_weighting);
    if (t.contains("class_weights")) {
      tc.class_weights.clear();
      for (auto it = t.at("class_weights").begin(); it != t.at("class_weights").end(); ++it)
        tc.class_weights[it.key()] = it.value().get<std::vector<double>>();
    }
    tc.seed = t.value("seed", tc.seed);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.deterministic = t.value("deterministic", tc.deterministic);
    tc.adam_beta1 = t.value("adam_beta1", tc.adam_beta1);
    tc.adam_beta2 = t.value("adam_beta2", tc.adam_beta2);
    tc.adam_eps = t.value("adam_eps", tc.adam_eps);
    tc.augment.rotate90 = t.value("augment_rotate90", tc.augment.rotate90);
    tc.augment.small_angle_deg =
        t.value("augment_small_angle_deg", tc.augment.small_angle_deg);
  }

  if (root.contains("data")) {
    const json& d = root.at("data");
    check_keys(d,
               {"manifest", "preprocess_profile", "crop_size", "split_k",
                "test_fold", "val_fraction", "split_seed"},
               "data");
    DataConfig& dc = cfg.data;
    dc.manifest = d.value("manifest", dc.manifest);
    dc.preprocess_profile = d.value("preprocess_profile", dc.preprocess_profile);
    dc.crop_size = d.value("crop_size", dc.crop_size);
    dc.split_k = d.value("split_k", dc.split_k);
    dc.test_fold = d.value("test_fold", dc.test_fold);
    dc.val_fraction = d.value("val_fraction", dc.val_fraction);
    dc.split_seed = d.value("split_seed", dc.split_seed);
  }

  cfg.validate();
  return cfg;
}

json parse_json_text(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("malformed " + what);
  return j;
}

// "a.b.c=value" applied onto a JSON tree; value parsed as JSON scalar when
// possible, kept as string otherwise.
void apply_one_override(json& root, const std::string& expr) {
  auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override must look like key.path=value: " + expr);
  std::string path = expr.substr(0, eq);
  std::string value = expr.substr(eq + 1);

  json* node = &root;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw UsageError("bad override path: " + path);
    if (dot == std::string::npos) {
      json v = json::parse(value, nullptr, false);
      if (v.is_discarded() || v.is_object() || v.is_array()) v = value;
      (*node)[key] = v;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    pos = dot + 1;
  }
}

void flatten_keys(const json& j, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object())
      flatten_keys(it.value(), key, out);
    else
      out.push_back(key + " = " + it.value().dump());
  }
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  return config_from_json(parse_json_text(text, "config JSON"));
}

std::string config_to_json_text(const ExperimentConfig& cfg, int indent) {
  return config_to_json(cfg).dump(indent) + "\n";
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

void save_config_file(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config file: " + path);
  out << config_to_json_text(cfg);
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& overrides) {
  json root = config_to_json(cfg);
  for (const auto& o : overrides) apply_one_override(root, o);
  return config_from_json(root);
}

std::vector<std::string> config_key_listing(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  flatten_keys(config_to_json(cfg), "", out);
  return out;
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "synthetic") {
    // Desk-scale profile: trainable end to end on a CPU in minutes.
    cfg.model.image_size = 64;
    cfg.model.patch_size = 8;
    cfg.model.channels = 1;
    cfg.model.embed_dim = 64;
    cfg.model.backbone_layers = 2;
    cfg.model.attr_layers_per_branch = 1;
    cfg.model.target_layers = 1;
    cfg.model.heads = 4;
    cfg.model.decoder_enabled = true;
    cfg.model.decoder_layers = 2;
    cfg.model.schema.attributes = {
        {"roundness", {true, 1, 5, {}}},
        {"spike_count", {true, 1, 5, {}}},
        {"lobe_count", {true, 1, 5, {}}},
        {"texture_noise", {true, 1, 5, {}}},
    };
    cfg.model.target = {true, 1, 5, {}};
    cfg.train.lr_main = 1e-3;
    cfg.train.lr_prototypes = 1e-3;
    cfg.train.epochs = 20;
    cfg.train.warmup_epochs = 3;
    cfg.train.push_step = 2;
    cfg.train.batch_size = 32;
  } else if (name == "lidc") {
    // LIDC-style profile: ordinal 1-5 ratings, decoder on.
    cfg.model.image_size = 224;
    cfg.model.patch_size = 16;
    cfg.model.channels = 1;
    cfg.model.embed_dim = 768;
    cfg.model.backbone_layers = 12;
    cfg.model.heads = 12;
    cfg.model.decoder_enabled = true;
    cfg.model.decoder_layers = 12;
    cfg.model.schema.attributes = {
        {"subtlety", {true, 1, 5, {}}},
        {"internal_structure", {true, 1, 4, {}}},
        {"calcification", {true, 1, 6, {}}},
        {"sphericity", {true, 1, 5, {}}},
        {"margin", {true, 1, 5, {}}},
        {"lobulation", {true, 1, 5, {}}},
        {"spiculation", {true, 1, 5, {}}},
        {"texture", {true, 1, 5, {}}},
    };
    cfg.model.target = {true, 1, 5, {}};
    cfg.train.lr_main = 1e-3;
    cfg.train.lr_prototypes = 1e-3;
    cfg.train.epochs = 30;
    cfg.train.warmup_epochs = 2;
    cfg.train.push_step = 2;
    cfg.data.preprocess_profile = "none";
  } else if (name == "derm7pt") {
    // Dermoscopy-style profile: nominal labels, no masks, heavy class
    // imbalance handled by weighted cross-entropy.
    cfg.model.image_size = 224;
    cfg.model.patch_size = 16;
    cfg.model.channels = 3;
    cfg.model.embed_dim = 768;
    cfg.model.backbone_layers = 12;
    cfg.model.heads = 12;
    cfg.model.decoder_enabled = false;
    cfg.model.schema.attributes = {
        {"pigment_network", {false, 0, 0, {"absent", "typical", "atypical"}}},
        {"blue_whitish_veil", {false, 0, 0, {"absent", "present"}}},
        {"vascular_structures", {false, 0, 0, {"absent", "regular", "irregular"}}},
        {"pigmentation", {false, 0, 0, {"absent", "regular", "irregular"}}},
        {"streaks", {false, 0, 0, {"absent", "regular", "irregular"}}},
        {"dots_and_globules", {false, 0, 0, {"absent", "regular", "irregular"}}},
        {"regression_structures", {false, 0, 0, {"absent", "present"}}},
    };
    cfg.model.target = {false, 0, 0,
                        {"nevus", "seborrheic_keratosis", "miscellaneous",
                         "basal_cell_carcinoma", "melanoma"}};
    cfg.train.lr_main = 1e-5;
    cfg.train.lr_prototypes = 1e-2;
    cfg.train.epochs = 400;
    cfg.train.warmup_epochs = 20;
    cfg.train.push_step = 2;
    cfg.train.class_weighting = "inverse_frequency";
    cfg.train.augment.rotate90 = true;
    cfg.train.augment.small_angle_deg = 10.0;
    cfg.data.preprocess_profile = "center_crop";
    cfg.data.crop_size = 450;
  } else {
    throw UsageError("unknown preset: " + name + " (expected synthetic, lidc, derm7pt)");
  }
  return cfg;
}

SynthConfig synth_from_json_text(const std::string& text) {
  json j = parse_json_text(text, "synth config JSON");
  check_keys(j,
             {"n_samples", "image_size", "target_weights", "target_bias",
              "group_size", "seed"},
             "<root>");
  SynthConfig cfg;
  cfg.n_samples = j.value("n_samples", cfg.n_samples);
  cfg.image_size = j.value("image_size", cfg.image_size);
  if (j.contains("target_weights"))
    cfg.target_weights = j.at("target_weights").get<std::vector<double>>();
  cfg.target_bias = j.value("target_bias", cfg.target_bias);
  cfg.group_size = j.value("group_size", cfg.group_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

std::string synth_to_json_text(const SynthConfig& cfg, int indent) {
  json j;
  j["n_samples"] = cfg.n_samples;
  j["image_size"] = cfg.image_size;
  j["target_weights"] = cfg.target_weights;
  j["target_bias"] = cfg.target_bias;
  j["group_size"] = cfg.group_size;
  j["seed"] = cfg.seed;
  return j.dump(indent) + "\n";
}

SynthConfig apply_synth_overrides(const SynthConfig& cfg,
                                  const std::vector<std::string>& overrides) {
  json root = parse_json_text(synth_to_json_text(cfg), "synth config JSON");
  for (const auto& o : overrides) apply_one_override(root, o);
  return synth_from_json_text(root.dump());
}

}  // namespace apvit
