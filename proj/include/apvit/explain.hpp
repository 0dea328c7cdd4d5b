#pragma once

#include "apvit/data.hpp"
#include "apvit/metrics.hpp"
#include "apvit/model.hpp"
#include "apvit/prototype_bank.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace apvit {

struct Heatmap {
  MatD grid;              // image_size x image_size in [0,1]
  bool degenerate = false;  // constant attention; grid is all zeros
};

// Patch-level attention (length N, one value per patch) -> image-resolution
// heatmap: reshape to the patch grid, bilinear upsample, min-max normalize.
Heatmap attention_heatmap(const VecD& attention, int patches_per_side,
                          int image_size);

struct PrototypeExemplar {
  int value = -1;           // matched prototype's value index
  double value_label = 0.0; // same, as a schema label
  int slot = -1;
  double distance = 0.0;
  std::string source_sample_id;  // empty if never pushed
  int push_epoch = -1;
  std::string image_path;  // copied exemplar, relative to the report
};

struct AttributeExplanation {
  std::string name;
  bool ordinal = true;
  double score = 0.0;               // scalar score or argmax class id
  std::vector<double> logits;       // nominal only
  double reported_value = 0.0;      // proto_inference: the prototype's class
  std::string heatmap_path;
  std::string overlay_path;
  bool heatmap_degenerate = false;
  PrototypeExemplar prototype;
};

struct ExplanationReport {
  std::string sample_id;
  std::string mode = "standard";  // standard | proto_inference
  double target_score = 0.0;      // scalar score or argmax class id
  std::vector<double> target_logits;
  double target_value = 0.0;  // clamped+rounded label or class id
  std::vector<AttributeExplanation> attributes;
  std::string report_path;
};

// Runs the forward pass for one sample, emits heatmaps, overlays, prototype
// exemplar images, and a JSON report under out_dir/<sample_id>/.
template <class S>
ExplanationReport explain_sample(const Model<S>& model,
                                 const PrototypeBank<S>& bank, const Dataset& ds,
                                 int sample_index, bool proto_inference,
                                 bool rollout, const std::string& out_dir);

// Serialization used by explain_sample and the tests.
std::string explanation_report_json(const ExplanationReport& r, int indent = 2);

// Rollout composition: multiplies the mean-head backbone attention maps
// (with residual mixing) through the branch's patch attention.
VecD rollout_attention(const std::vector<MatD>& backbone_layers,
                       const VecD& branch_attention);

namespace detail {
std::string safe_name(const std::string& s);
}

template <class S>
ExplanationReport explain_sample(const Model<S>& model,
                                 const PrototypeBank<S>& bank, const Dataset& ds,
                                 int sample_index, bool proto_inference,
                                 bool rollout, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (!bank.pushed())
    throw UsageError("explain requires a pushed prototype bank");
  const ModelConfig& cfg = model.config();
  const int A = cfg.schema.count();
  const SampleRecord& rec = ds.record(sample_index);
  fs::path dir = fs::path(out_dir) / rec.id;
  fs::create_directories(dir);

  TensorImage input = ds.input(sample_index);
  ModelOutput<S> out = model.forward(input, rollout);

  ExplanationReport rep;
  rep.sample_id = rec.id;
  rep.mode = proto_inference ? "proto_inference" : "standard";

  typename PrototypeBank<S>::ProtoInference pi;
  Vec<S> target_score = out.target_score;
  if (proto_inference) {
    pi = bank.proto_inference(out.attr_vectors);
    target_score = model.target_forward(pi.replaced);
  }
  if (cfg.target.ordinal) {
    rep.target_score = static_cast<double>(target_score(0));
    rep.target_value = static_cast<double>(
        iround(clamp(rep.target_score, cfg.target.lo, cfg.target.hi)));
  } else {
    std::vector<double> row(cfg.target.value_count());
    for (int k = 0; k < cfg.target.value_count(); ++k)
      row[k] = static_cast<double>(target_score(k));
    rep.target_logits = row;
    rep.target_value = argmax_lowest(row);
    rep.target_score = rep.target_value;
  }

  ImageU8 base = ds.display_image(sample_index);
  std::vector<MatD> backbone_attn;
  if (rollout) {
    backbone_attn.reserve(out.backbone_attention.size());
    for (const auto& m : out.backbone_attention)
      backbone_attn.push_back(m.template cast<double>());
  }

  for (int a = 0; a < A; ++a) {
    const auto& attr = cfg.schema.at(a);
    AttributeExplanation ae;
    ae.name = attr.name;
    ae.ordinal = attr.scale.ordinal;
    if (attr.scale.ordinal) {
      ae.score = static_cast<double>(out.attr_scores[a](0));
      ae.reported_value = static_cast<double>(
          iround(clamp(ae.score, attr.scale.lo, attr.scale.hi)));
    } else {
      std::vector<double> row(attr.scale.value_count());
      for (int k = 0; k < attr.scale.value_count(); ++k)
        row[k] = static_cast<double>(out.attr_scores[a](k));
      ae.logits = row;
      ae.score = argmax_lowest(row);
      ae.reported_value = ae.score;
    }

    VecD attention = out.attr_attention[a].template cast<double>();
    if (rollout) attention = rollout_attention(backbone_attn, attention);
    Heatmap hm =
        attention_heatmap(attention, cfg.patches_per_side(), cfg.image_size);
    ae.heatmap_degenerate = hm.degenerate;
    std::string tag = detail::safe_name(attr.name);
    ae.heatmap_path = "heat_" + tag + ".pgm";
    ae.overlay_path = "overlay_" + tag + ".ppm";
    write_pnm(gray_to_u8(hm.grid), (dir / ae.heatmap_path).string());
    write_pnm(overlay_heatmap(base, hm.grid), (dir / ae.overlay_path).string());

    Vec<S> query = out.attr_vectors.row(a).transpose();
    auto match = bank.nearest(a, query);
    ae.prototype.value = match.value;
    ae.prototype.value_label = attr.scale.value_label(match.value);
    ae.prototype.slot = match.slot;
    ae.prototype.distance = match.distance;
    if (proto_inference) {
      ae.reported_value = attr.scale.value_label(pi.values[a]);
      ae.prototype.value = pi.matches[a].value;
      ae.prototype.value_label = attr.scale.value_label(pi.matches[a].value);
      ae.prototype.slot = pi.matches[a].slot;
      ae.prototype.distance = pi.matches[a].distance;
    }
    const ProtoProvenance& pv =
        bank.provenance(a, ae.prototype.value, ae.prototype.slot);
    if (pv.valid) {
      ae.prototype.source_sample_id = pv.sample_id;
      ae.prototype.push_epoch = pv.epoch;
      int src = ds.index_by_id(pv.sample_id);
      if (src >= 0) {
        fs::path src_path(ds.resolved_image_path(src));
        std::string ext = src_path.extension().string();
        ae.prototype.image_path = "proto_" + tag + ext;
        fs::copy_file(src_path, dir / ae.prototype.image_path,
                      fs::copy_options::overwrite_existing);
      }
    }
    rep.attributes.push_back(std::move(ae));
  }

  rep.report_path = (dir / "report.json").string();
  std::ofstream rf(rep.report_path);
  if (!rf) throw DataError("cannot write report: " + rep.report_path);
  rf << explanation_report_json(rep);
  return rep;
}

}  // namespace apvit
