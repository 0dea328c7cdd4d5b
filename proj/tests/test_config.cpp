#include "apvit/config.hpp"

#include <doctest.h>

#include "test_util.hpp"

using namespace apvit;

TEST_CASE("config json round trip preserves every field") {
  ExperimentConfig cfg = testutil::tiny_config();
  cfg.data.manifest = "somewhere/manifest.jsonl";
  cfg.data.preprocess_profile = "center_crop";
  cfg.data.crop_size = 12;
  cfg.train.class_weighting = "inverse_frequency";
  cfg.train.warmup_val_accuracy_gate = 0.5;
  cfg.train.augment.rotate90 = true;
  cfg.train.augment.small_angle_deg = 7.5;
  cfg.train.class_weights["attr:kind"] = {0.5, 1.5, 1.0};

  std::string text = config_to_json_text(cfg);
  ExperimentConfig back = config_from_json_text(text);
  CHECK(config_to_json_text(back) == text);
  CHECK(back.model.schema.count() == 2);
  CHECK(back.model.schema.at(1).scale.classes.size() == 3);
  CHECK(back.train.warmup_val_accuracy_gate.has_value());
  CHECK(back.train.warmup_val_accuracy_gate.value() == doctest::Approx(0.5));
  CHECK(back.train.class_weights.at("attr:kind")[1] == doctest::Approx(1.5));
}

TEST_CASE("unknown keys are rejected with their path") {
  std::string text = config_to_json_text(testutil::tiny_config());
  auto j = nlohmann::json::parse(text);
  j["train"]["learning_rate"] = 0.1;
  CHECK_THROWS_WITH_AS(config_from_json_text(j.dump()),
                       "unknown config key: train.learning_rate", ConfigError);
  j["train"].erase("learning_rate");
  j["modle"] = nlohmann::json::object();
  CHECK_THROWS_AS(config_from_json_text(j.dump()), ConfigError);
}

TEST_CASE("dotted overrides reach nested fields and reject unknowns") {
  ExperimentConfig cfg = testutil::tiny_config();
  ExperimentConfig out = apply_overrides(
      cfg, {"train.epochs=9", "model.embed_dim=32", "data.val_fraction=0.25",
            "train.warmup_val_accuracy_gate=0.7", "train.deterministic=false"});
  CHECK(out.train.epochs == 9);
  CHECK(out.model.embed_dim == 32);
  CHECK(out.data.val_fraction == doctest::Approx(0.25));
  CHECK(out.train.warmup_val_accuracy_gate.value() == doctest::Approx(0.7));
  CHECK_FALSE(out.train.deterministic);
  CHECK_THROWS_AS(apply_overrides(cfg, {"train.nope=1"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(cfg, {"no_equals_sign"}), UsageError);
}

TEST_CASE("validation rejects inconsistent settings") {
  ExperimentConfig cfg = testutil::tiny_config();
  cfg.model.image_size = 30;  // not divisible by patch 8
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.model.embed_dim = 15;  // not divisible by heads
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.train.warmup_epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.train.push_step = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.prototypes.loss_reduction = "max";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("explicit class weights only apply to nominal heads") {
  ExperimentConfig cfg = testutil::tiny_config();
  cfg.train.class_weights["attr:shape"] = {1, 1, 1, 1, 1};  // ordinal head
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.train.class_weights["attr:kind"] = {1.0, 2.0};  // wrong length
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = testutil::tiny_config();
  cfg.train.class_weights["attr:kind"] = {1.0, 2.0, 3.0};
  CHECK_NOTHROW(cfg.validate());

  cfg = testutil::tiny_config();
  cfg.train.class_weights["elsewhere"] = {1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("presets expose the documented shapes") {
  ExperimentConfig synth = preset_config("synthetic");
  CHECK(synth.model.image_size == 64);
  CHECK(synth.model.embed_dim == 64);
  CHECK(synth.model.backbone_layers == 2);
  CHECK(synth.model.schema.count() == 4);
  CHECK(synth.train.warmup_epochs == 3);
  CHECK(synth.train.push_step == 2);
  CHECK(synth.train.epochs == 20);
  for (const auto& a : synth.model.schema.attributes) CHECK(a.scale.ordinal);

  ExperimentConfig lidc = preset_config("lidc");
  CHECK(lidc.model.image_size == 224);
  CHECK(lidc.model.embed_dim == 768);
  CHECK(lidc.model.backbone_layers == 12);
  CHECK(lidc.model.heads == 12);
  CHECK(lidc.model.decoder_enabled);

  ExperimentConfig derm = preset_config("derm7pt");
  CHECK(derm.model.channels == 3);
  CHECK_FALSE(derm.model.decoder_enabled);
  bool any_nominal = false;
  for (const auto& a : derm.model.schema.attributes)
    any_nominal = any_nominal || !a.scale.ordinal;
  CHECK(any_nominal);
  CHECK_FALSE(derm.model.target.ordinal);

  CHECK_THROWS_AS(preset_config("imagenet"), UsageError);
}

TEST_CASE("target positional embeddings default off") {
  ExperimentConfig cfg;
  CHECK_FALSE(cfg.model.target_positional_embeddings);
  for (const char* p : {"synthetic", "lidc", "derm7pt"})
    CHECK_FALSE(preset_config(p).model.target_positional_embeddings);
}

TEST_CASE("synth config round trip and overrides") {
  SynthConfig s;
  s.n_samples = 123;
  s.image_size = 48;
  s.seed = 9;
  SynthConfig back = synth_from_json_text(synth_to_json_text(s));
  CHECK(back.n_samples == 123);
  CHECK(back.image_size == 48);
  CHECK(back.seed == 9);
  SynthConfig o = apply_synth_overrides(s, {"n_samples=5", "group_size=2"});
  CHECK(o.n_samples == 5);
  CHECK(o.group_size == 2);
  CHECK_THROWS_AS(apply_synth_overrides(s, {"bogus=1"}), ConfigError);
}
