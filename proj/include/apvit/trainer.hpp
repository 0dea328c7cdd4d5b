#pragma once

#include "apvit/checkpoint.hpp"
#include "apvit/data.hpp"
#include "apvit/losses.hpp"
#include "apvit/metrics.hpp"
#include "apvit/model.hpp"
#include "apvit/optimizer.hpp"
#include "apvit/prototype_bank.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace apvit {

// Final iff past the minimum warm-up AND the optional validation gate has
// been met by the best accuracy so far. best_val_accuracy is the running
// maximum, so the result is monotone over epochs.
inline Phase phase_for_epoch(int epoch, const TrainConfig& tc,
                             double best_val_accuracy) {
  if (epoch < tc.warmup_epochs) return Phase::Warmup;
  if (tc.warmup_val_accuracy_gate &&
      best_val_accuracy < *tc.warmup_val_accuracy_gate)
    return Phase::Warmup;
  return Phase::Final;
}

inline bool should_push(int epoch, const TrainConfig& tc, Phase phase,
                        int first_final_epoch) {
  return phase == Phase::Final && (epoch - first_final_epoch) % tc.push_step == 0;
}

// Internal ablation knobs; not part of the config surface. skip_disabled
// additionally skips computing a zero-scaled term at all, which must not
// change anything else.
struct LossScales {
  double attr = 1.0, seg = 1.0, proto = 1.0;
  bool skip_disabled = false;
};

template <class S>
struct EvalOutcome {
  MetricReport report;
  // Per-sample predicted labels: ordinal heads carry the raw score,
  // nominal heads the argmax index.
  std::vector<double> target_pred;
  std::vector<std::vector<double>> attr_pred;  // [a][i]
  std::vector<double> dice_per_sample;
};

template <class S>
EvalOutcome<S> evaluate(const Model<S>& model, const PrototypeBank<S>* bank,
                        const Dataset& ds, const std::vector<int>& indices,
                        bool proto_inference, int batch_size);

template <class S>
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, const Dataset& ds, const FoldSplit& split,
          std::string out_dir)
      : cfg_(cfg), ds_(ds), split_(split), out_dir_(std::move(out_dir)) {
    cfg_.validate();
    if (cfg_.model.decoder_enabled && !ds_.has_masks())
      throw DataError("decoder enabled but the dataset has no masks");
    if (split_.train.empty()) throw DataError("empty training split");
    if (split_.val.empty()) throw DataError("empty validation split");
    std::filesystem::create_directories(out_dir_);
    model_ = std::make_unique<Model<S>>(cfg_.model,
                                        static_cast<unsigned long long>(cfg_.train.seed));
    bank_ = std::make_unique<PrototypeBank<S>>(
        cfg_.model.schema, cfg_.model.embed_dim, cfg_.prototypes,
        static_cast<unsigned long long>(cfg_.train.seed) + 0x9E3779B9ULL);
    std::vector<ParamRefs<S>*> groups = {&model_->parameters(),
                                         &bank_->parameters()};
    opt_ = std::make_unique<Adam<S>>(groups, cfg_.train);
    build_weights();
    preload();
  }

  Model<S>& model() { return *model_; }
  PrototypeBank<S>& bank() { return *bank_; }
  const ExperimentConfig& config() const { return cfg_; }

  void set_loss_scales(const LossScales& s) { scales_ = s; }

  // One gradient step on the given training-set positions (indices into
  // split_.train order is the caller's choice). Returns the breakdown.
  LossBreakdown<S> train_step(const std::vector<int>& sample_ids, Phase phase) {
    BatchData bd = make_batch(sample_ids, /*augment=*/cfg_.train.augment.rotate90 ||
                                              cfg_.train.augment.small_angle_deg > 0.0);
    typename Model<S>::Cache cache;
    BatchOutput<S> out = model_->forward_batch(bd.image_ptrs(), cache);
    BatchGrads<S> grads;
    LossBreakdown<S> lb =
        supervised_loss(cfg_.model, out, bd.targets, bd.masks, weights_, &grads);
    apply_scales(grads, lb);
    const bool want_proto =
        phase == Phase::Final && !(scales_.skip_disabled && scales_.proto == 0.0);
    if (want_proto) {
      for (int a = 0; a < model_->attribute_count(); ++a)
        grads.d_attr_vectors[a] =
            Mat<S>::Zero(out.attr_vectors[a].rows(), out.attr_vectors[a].cols());
      lb.proto = bank_->loss(
          out.attr_vectors, bd.targets.value_idx_rows, &grads.d_attr_vectors,
          static_cast<S>(cfg_.train.lambda_proto * scales_.proto));
    }
    S total = phase == Phase::Final
                  ? lb.supervised() +
                        static_cast<S>(cfg_.train.lambda_proto * scales_.proto) *
                            lb.proto
                  : lb.supervised();
    if (!std::isfinite(static_cast<double>(total))) {
      dump_breakdown(lb, phase);
      throw NumericalError("non-finite loss");
    }
    opt_->zero_grads();
    bank_->zero_grads();
    model_->backward_batch(grads, cache);
    opt_->step();
    return lb;
  }

  // Full run: epochs, phase schedule, pushes, validation, checkpoints, log.
  void run() {
    std::ofstream log(std::filesystem::path(out_dir_) / "train_log.jsonl");
    if (!log) throw DataError("cannot write training log under " + out_dir_);
    save_config_file(cfg_, (std::filesystem::path(out_dir_) / "config.json").string());

    double best_val = -1.0;
    int best_epoch = -1;
    int first_final = -1;
    for (int epoch = 0; epoch < cfg_.train.epochs; ++epoch) {
      Phase phase = phase_for_epoch(epoch, cfg_.train, std::max(best_val, 0.0));
      if (phase == Phase::Final && first_final < 0) first_final = epoch;
      bool push_now = first_final >= 0 &&
                      should_push(epoch, cfg_.train, phase, first_final);
      if (push_now) do_push(epoch);

      Rng shuffle_rng(static_cast<unsigned long long>(cfg_.train.seed) * 2654435761ULL +
                      static_cast<unsigned long long>(epoch) + 1);
      std::vector<int> order = split_.train;
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng() % i]);

      LossBreakdown<S> epoch_loss;
      epoch_loss.per_attr.assign(model_->attribute_count(), S(0));
      long long seen = 0;
      for (size_t off = 0; off < order.size(); off += cfg_.train.batch_size) {
        size_t end = std::min(order.size(), off + cfg_.train.batch_size);
        std::vector<int> batch(order.begin() + off, order.begin() + end);
        LossBreakdown<S> lb = train_step(batch, phase);
        const long long bsz = static_cast<long long>(batch.size());
        epoch_loss.target += lb.target * bsz;
        epoch_loss.attr += lb.attr * bsz;
        epoch_loss.seg += lb.seg * bsz;
        epoch_loss.proto += lb.proto * bsz;
        seen += bsz;
      }
      const S inv = S(1) / static_cast<S>(seen);
      epoch_loss.target *= inv;
      epoch_loss.attr *= inv;
      epoch_loss.seg *= inv;
      epoch_loss.proto *= inv;

      EvalOutcome<S> val = evaluate_split(split_.val, false);
      double val_acc = headline_accuracy(val.report);
      bool improved = val_acc > best_val;
      if (improved) {
        best_val = val_acc;
        best_epoch = epoch;
        save_ckpt("checkpoint_best.apvt", epoch, best_epoch, best_val);
      }

      nlohmann::json rec;
      rec["epoch"] = epoch;
      rec["phase"] = phase_name(phase);
      rec["push"] = push_now;
      double lam = phase == Phase::Final ? cfg_.train.lambda_proto : 0.0;
      rec["loss"] = {
          {"total", static_cast<double>(epoch_loss.supervised()) +
                        lam * static_cast<double>(epoch_loss.proto)},
          {"tar", static_cast<double>(epoch_loss.target)},
          {"attr", static_cast<double>(epoch_loss.attr)},
          {"seg", static_cast<double>(epoch_loss.seg)},
          {"proto", static_cast<double>(epoch_loss.proto)}};
      nlohmann::json jval;
      for (const auto& e : val.report.entries)
        jval[e.head + ":" + e.metric] = e.value;
      rec["val"] = jval;
      rec["val_headline"] = val_acc;
      rec["best"] = improved;
      log << rec.dump() << "\n";
      log.flush();
    }
    save_ckpt("checkpoint.apvt", cfg_.train.epochs - 1, best_epoch, best_val);
  }

  EvalOutcome<S> evaluate_split(const std::vector<int>& indices,
                                bool proto_inference) const {
    return evaluate<S>(*model_, bank_.get(), ds_, indices, proto_inference,
                       cfg_.train.batch_size);
  }

  // Attribute vectors of every training sample under the current weights.
  struct TrainVectors {
    std::vector<Mat<S>> attr_vecs;            // [a]: n x D
    std::vector<std::vector<int>> value_idx;  // [i][a]
    std::vector<std::string> ids;
  };

  TrainVectors collect_train_vectors() const {
    TrainVectors tv;
    const int A = model_->attribute_count();
    const int n = static_cast<int>(split_.train.size());
    tv.attr_vecs.assign(A, Mat<S>(n, cfg_.model.embed_dim));
    tv.value_idx.resize(n);
    tv.ids.resize(n);
    for (size_t off = 0; off < split_.train.size();
         off += cfg_.train.batch_size) {
      size_t end = std::min(split_.train.size(), off + cfg_.train.batch_size);
      std::vector<int> batch(split_.train.begin() + off,
                             split_.train.begin() + end);
      BatchData bd = make_batch(batch, false);
      typename Model<S>::Cache cache;
      BatchOutput<S> out = model_->forward_batch(bd.image_ptrs(), cache);
      for (size_t j = 0; j < batch.size(); ++j) {
        int row = static_cast<int>(off + j);
        for (int a = 0; a < A; ++a)
          tv.attr_vecs[a].row(row) = out.attr_vectors[a].row(j);
        tv.value_idx[row] = bd.targets.value_idx_rows[j];
        tv.ids[row] = ds_.record(batch[j]).id;
      }
    }
    return tv;
  }

  std::vector<PushRecord> do_push(int epoch) {
    TrainVectors tv = collect_train_vectors();
    std::vector<PushRecord> recs =
        bank_->push(tv.attr_vecs, tv.value_idx, tv.ids, epoch);
    std::ofstream csv(std::filesystem::path(out_dir_) /
                      ("push_epoch_" + std::to_string(epoch) + ".csv"));
    csv << "attribute,value,slot,sample_id,distance\n";
    for (const auto& r : recs) {
      if (!r.updated) {
        std::cerr << "warning: no training sample for attribute "
                  << cfg_.model.schema.at(r.attribute).name << " value index "
                  << r.value << ", slot " << r.slot << " left unchanged\n";
        continue;
      }
      csv << cfg_.model.schema.at(r.attribute).name << "," << r.value << ","
          << r.slot << "," << r.sample_id << "," << r.distance << "\n";
    }
    return recs;
  }

  void save_ckpt(const std::string& name, int epoch, int best_epoch,
                 double best_val) const {
    CheckpointMeta meta;
    meta.config = cfg_;
    meta.stats = ds_.stats();
    meta.trained_epochs = epoch + 1;
    meta.best_epoch = best_epoch;
    meta.best_val_metric = best_val;
    save_checkpoint((std::filesystem::path(out_dir_) / name).string(), *model_,
                    *bank_, meta);
  }

  // Ordinal targets report within-1 accuracy, nominal report accuracy; the
  // headline number drives best-checkpoint retention and the warm-up gate.
  static double headline_accuracy(const MetricReport& r) {
    for (const auto& e : r.entries)
      if (e.head == "target") return e.value;
    return 0.0;
  }

  struct BatchData {
    std::vector<TensorImage> images;
    Mat<S> masks;  // B x (S*S), empty when decoder off
    BatchTargets targets;

    std::vector<const TensorImage*> image_ptrs() const {
      std::vector<const TensorImage*> ps;
      ps.reserve(images.size());
      for (const auto& t : images) ps.push_back(&t);
      return ps;
    }
  };

  // Assembles preprocessed images, masks, and resolved targets for dataset
  // indices. Augmentation (when asked) applies the same transform to image
  // and mask.
  BatchData make_batch(const std::vector<int>& indices, bool augment) const {
    const int A = cfg_.model.schema.count();
    const int B = static_cast<int>(indices.size());
    const int SZ = cfg_.model.image_size;
    BatchData bd;
    bd.images.reserve(B);
    if (cfg_.model.decoder_enabled) bd.masks.resize(B, SZ * SZ);
    bd.targets.attr_labels.assign(A, {});
    bd.targets.attr_idx.assign(A, {});
    bd.targets.value_idx_rows.resize(B);
    for (int b = 0; b < B; ++b) {
      const int i = indices[b];
      ImageU8 img = geo_images_.at(i);
      ImageU8 msk = cfg_.model.decoder_enabled ? geo_masks_.at(i) : ImageU8{};
      if (augment) {
        unsigned long long key =
            static_cast<unsigned long long>(cfg_.train.seed) * 1000003ULL +
            static_cast<unsigned long long>(aug_counter_++) * 7919ULL + i;
        Rng ar(key);
        if (cfg_.train.augment.rotate90) {
          int q = static_cast<int>(ar() % 4);
          img = rotate90(img, q);
          if (msk.h) msk = rotate90(msk, q);
        }
        if (cfg_.train.augment.small_angle_deg > 0.0) {
          double amp = cfg_.train.augment.small_angle_deg;
          double deg = ((ar() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * amp;
          img = rotate_angle(img, deg);
          if (msk.h) msk = rotate_angle(msk, deg);
        }
      }
      TensorImage t = TensorImage::make(img.h, img.w, img.c);
      for (size_t k = 0; k < img.data.size(); ++k)
        t.data[k] = static_cast<float>(img.data[k]) / 255.0f;
      standardize(t, ds_.stats());
      bd.images.push_back(std::move(t));
      if (cfg_.model.decoder_enabled) {
        for (int p = 0; p < SZ * SZ; ++p)
          bd.masks(b, p) = msk.data[p] >= 128 ? S(1) : S(0);
      }
      bd.targets.target_labels.push_back(ds_.target_label(i));
      bd.targets.target_idx.push_back(ds_.target_value_index(i));
      bd.targets.value_idx_rows[b].resize(A);
      for (int a = 0; a < A; ++a) {
        bd.targets.attr_labels[a].push_back(ds_.attr_label(i, a));
        bd.targets.attr_idx[a].push_back(ds_.attr_value_index(i, a));
        bd.targets.value_idx_rows[b][a] = ds_.attr_value_index(i, a);
      }
    }
    return bd;
  }

 private:
  void apply_scales(BatchGrads<S>& grads, LossBreakdown<S>& lb) {
    if (scales_.attr != 1.0) {
      lb.attr *= static_cast<S>(scales_.attr);
      for (auto& d : grads.d_attr_scores) d *= static_cast<S>(scales_.attr);
    }
    if (scales_.seg != 1.0 && grads.d_mask_logits.size() > 0) {
      lb.seg *= static_cast<S>(scales_.seg);
      grads.d_mask_logits *= static_cast<S>(scales_.seg);
    }
  }

  void dump_breakdown(const LossBreakdown<S>& lb, Phase phase) const {
    std::cerr << "loss breakdown at failure: phase=" << phase_name(phase)
              << " tar=" << static_cast<double>(lb.target)
              << " attr=" << static_cast<double>(lb.attr)
              << " seg=" << static_cast<double>(lb.seg)
              << " proto=" << static_cast<double>(lb.proto) << "\n";
  }

  void build_weights() {
    const int A = cfg_.model.schema.count();
    weights_.attrs.assign(A, ClassWeights{});
    auto explicit_for = [&](const std::string& key, const AttributeScale& sc,
                            ClassWeights& out) {
      auto it = cfg_.train.class_weights.find(key);
      if (it == cfg_.train.class_weights.end()) return false;
      if (sc.ordinal)
        throw ConfigError("class_weights." + key +
                          ": weights require a nominal scale");
      if (static_cast<int>(it->second.size()) != sc.value_count())
        throw ConfigError("class_weights." + key + ": expected " +
                          std::to_string(sc.value_count()) + " entries");
      out.active = true;
      out.w = it->second;
      return true;
    };
    bool inv = cfg_.train.class_weighting == "inverse_frequency";
    std::vector<int> target_idx;
    std::vector<std::vector<int>> attr_idx(A);
    if (inv) {
      for (int i : split_.train) {
        target_idx.push_back(ds_.target_value_index(i));
        for (int a = 0; a < A; ++a)
          attr_idx[a].push_back(ds_.attr_value_index(i, a));
      }
    }
    if (!explicit_for("target", cfg_.model.target, weights_.target) && inv &&
        !cfg_.model.target.ordinal) {
      weights_.target.active = true;
      weights_.target.w =
          inverse_frequency_weights(target_idx, cfg_.model.target.value_count());
    }
    for (int a = 0; a < A; ++a) {
      const auto& attr = cfg_.model.schema.at(a);
      if (!explicit_for("attr:" + attr.name, attr.scale, weights_.attrs[a]) &&
          inv && !attr.scale.ordinal) {
        weights_.attrs[a].active = true;
        weights_.attrs[a].w = inverse_frequency_weights(
            attr_idx[a], attr.scale.value_count());
      }
    }
  }

  void preload() {
    if (!ds_.stats_set())
      throw DataError("dataset statistics must be set before training");
    geo_images_.resize(ds_.size());
    if (cfg_.model.decoder_enabled) geo_masks_.resize(ds_.size());
    std::vector<bool> needed(ds_.size(), false);
    for (int i : split_.train) needed[i] = true;
    for (int i : split_.val) needed[i] = true;
    for (int i : split_.test) needed[i] = true;
    for (int i = 0; i < ds_.size(); ++i) {
      if (!needed[i]) continue;
      geo_images_[i] = ds_.display_image(i);
      if (cfg_.model.decoder_enabled) {
        TensorImage m = ds_.mask(i);
        ImageU8 mu = ImageU8::make(m.h, m.w, 1);
        for (size_t k = 0; k < m.data.size(); ++k)
          mu.data[k] = m.data[k] >= 0.5f ? 255 : 0;
        geo_masks_[i] = std::move(mu);
      }
    }
  }

  ExperimentConfig cfg_;
  const Dataset& ds_;
  FoldSplit split_;
  std::string out_dir_;
  std::unique_ptr<Model<S>> model_;
  std::unique_ptr<PrototypeBank<S>> bank_;
  std::unique_ptr<Adam<S>> opt_;
  LossWeights weights_;
  LossScales scales_;
  std::vector<ImageU8> geo_images_, geo_masks_;
  mutable unsigned long long aug_counter_ = 0;
};

// Standalone evaluation over dataset indices. With proto_inference the
// attribute vectors are swapped for nearest prototypes before the target
// branch and attribute predictions are the prototypes' classes.
template <class S>
EvalOutcome<S> evaluate(const Model<S>& model, const PrototypeBank<S>* bank,
                        const Dataset& ds, const std::vector<int>& indices,
                        bool proto_inference, int batch_size) {
  if (indices.empty()) throw DataError("empty evaluation split");
  if (proto_inference && (!bank || !bank->pushed()))
    throw UsageError("proto-inference evaluation requires a pushed prototype bank");
  const ModelConfig& cfg = model.config();
  const int A = cfg.schema.count();
  const int n = static_cast<int>(indices.size());
  const bool do_dice = cfg.decoder_enabled && ds.has_masks();

  EvalOutcome<S> out;
  out.target_pred.resize(n);
  out.attr_pred.assign(A, std::vector<double>(n, 0.0));
  if (do_dice) out.dice_per_sample.resize(n);

  std::vector<double> target_gt(n);
  std::vector<int> target_gt_idx(n), target_pred_idx(n);
  std::vector<std::vector<double>> attr_gt(A, std::vector<double>(n));
  std::vector<std::vector<int>> attr_gt_idx(A, std::vector<int>(n)),
      attr_pred_idx(A, std::vector<int>(n));

  for (int off = 0; off < n; off += batch_size) {
    int end = std::min(n, off + batch_size);
    int B = end - off;
    std::vector<TensorImage> imgs;
    imgs.reserve(B);
    std::vector<const TensorImage*> ptrs;
    for (int j = 0; j < B; ++j) imgs.push_back(ds.input(indices[off + j]));
    for (const auto& t : imgs) ptrs.push_back(&t);
    typename Model<S>::Cache cache;
    BatchOutput<S> bo = model.forward_batch(ptrs, cache);

    Mat<S> target_scores = bo.target_scores;
    if (proto_inference) {
      Mat<S> stacked(static_cast<Eigen::Index>(B) * A, cfg.embed_dim);
      for (int j = 0; j < B; ++j) {
        Mat<S> vecs(A, cfg.embed_dim);
        for (int a = 0; a < A; ++a) vecs.row(a) = bo.attr_vectors[a].row(j);
        auto pi = bank->proto_inference(vecs);
        stacked.middleRows(static_cast<Eigen::Index>(j) * A, A) = pi.replaced;
        for (int a = 0; a < A; ++a) {
          const AttributeScale& sc = cfg.schema.at(a).scale;
          out.attr_pred[a][off + j] = sc.value_label(pi.values[a]);
          attr_pred_idx[a][off + j] = pi.values[a];
        }
      }
      target_scores = model.target_forward_batch(stacked, B);
    }

    for (int j = 0; j < B; ++j) {
      const int i = indices[off + j];
      target_gt[off + j] = ds.target_label(i);
      target_gt_idx[off + j] = ds.target_value_index(i);
      if (cfg.target.ordinal) {
        out.target_pred[off + j] = static_cast<double>(target_scores(j, 0));
      } else {
        std::vector<double> row(cfg.target.value_count());
        for (int k = 0; k < cfg.target.value_count(); ++k)
          row[k] = static_cast<double>(target_scores(j, k));
        target_pred_idx[off + j] = argmax_lowest(row);
        out.target_pred[off + j] = target_pred_idx[off + j];
      }
      for (int a = 0; a < A; ++a) {
        const AttributeScale& sc = cfg.schema.at(a).scale;
        attr_gt[a][off + j] = ds.attr_label(i, a);
        attr_gt_idx[a][off + j] = ds.attr_value_index(i, a);
        if (!proto_inference) {
          if (sc.ordinal) {
            out.attr_pred[a][off + j] =
                static_cast<double>(bo.attr_scores[a](j, 0));
          } else {
            std::vector<double> row(sc.value_count());
            for (int k = 0; k < sc.value_count(); ++k)
              row[k] = static_cast<double>(bo.attr_scores[a](j, k));
            attr_pred_idx[a][off + j] = argmax_lowest(row);
            out.attr_pred[a][off + j] = attr_pred_idx[a][off + j];
          }
        }
      }
      if (do_dice) {
        TensorImage gt = ds.mask(i);
        std::vector<float> pm(cfg.image_size * cfg.image_size);
        for (int p = 0; p < cfg.image_size * cfg.image_size; ++p)
          pm[p] = static_cast<float>(bo.masks(j, p));
        out.dice_per_sample[off + j] = dice(pm, gt.data);
      }
    }
  }

  out.report.mode = proto_inference ? "proto_inference" : "standard";
  auto add_entry = [&](const std::string& head, const std::string& metric,
                       double value) {
    MetricEntry e;
    e.head = head;
    e.metric = metric;
    e.value = value;
    e.n = n;
    auto ci = binomial_ci95(value, n);
    e.ci_low = ci.first;
    e.ci_high = ci.second;
    out.report.entries.push_back(e);
  };
  if (cfg.target.ordinal)
    add_entry("target", "within1_accuracy",
              within1_accuracy(target_gt, out.target_pred, cfg.target.lo,
                               cfg.target.hi));
  else
    add_entry("target", "accuracy", accuracy(target_gt_idx, target_pred_idx));
  for (int a = 0; a < A; ++a) {
    const auto& attr = cfg.schema.at(a);
    if (attr.scale.ordinal) {
      // Proto-inference predictions are integer labels already in range;
      // clamping inside the metric is a no-op for them.
      add_entry(attr.name, "within1_accuracy",
                within1_accuracy(attr_gt[a], out.attr_pred[a], attr.scale.lo,
                                 attr.scale.hi));
    } else {
      add_entry(attr.name, "accuracy",
                accuracy(attr_gt_idx[a], attr_pred_idx[a]));
    }
  }
  if (do_dice) {
    MetricEntry e;
    e.head = "segmentation";
    e.metric = "dice";
    e.value = mean_of(out.dice_per_sample);
    e.n = n;
    e.ci_low = e.value;
    e.ci_high = e.value;
    out.report.entries.push_back(e);
  }
  return out;
}

}  // namespace apvit
