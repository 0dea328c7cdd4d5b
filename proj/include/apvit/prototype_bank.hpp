#pragma once

#include "apvit/config.hpp"
#include "apvit/nn.hpp"

#include <limits>
#include <string>
#include <vector>

namespace apvit {

// Provenance of a prototype slot after a push: which training sample the
// vector was copied from.
struct ProtoProvenance {
  bool valid = false;
  std::string sample_id;
  int epoch = -1;
  double distance = 0.0;
};

struct PushRecord {
  int attribute = 0, value = 0, slot = 0;
  std::string sample_id;
  int epoch = 0;
  double distance = 0.0;
  bool updated = false;  // false: no candidate sample, slot kept as-is
};

// Learnable prototype vectors indexed by (attribute, value, slot). One Param
// per (attribute, value) cell holding slots x dim rows, so the optimizer can
// treat prototypes as a separate group.
template <class S>
class PrototypeBank {
 public:
  static constexpr double kNormEps = 1e-12;

  PrototypeBank(const AttributeSchema& schema, int embed_dim,
                const PrototypeConfig& cfg, unsigned long long seed)
      : schema_(schema), dim_(embed_dim), slots_(cfg.per_class),
        min_reduction_(cfg.loss_reduction == "min") {
    Rng rng(seed);
    const int A = schema_.count();
    cells_.resize(A);
    prov_.resize(A);
    for (int a = 0; a < A; ++a) {
      const int V = schema_.at(a).scale.value_count();
      cells_[a].resize(V);
      prov_[a].resize(V);
      for (int v = 0; v < V; ++v) {
        cells_[a][v].setup("proto.a" + std::to_string(a) + ".v" + std::to_string(v),
                           slots_, dim_);
        cells_[a][v].is_prototype = true;
        fill_normal(cells_[a][v].w, rng, 1.0 / std::sqrt(static_cast<double>(dim_)));
        prov_[a][v].resize(slots_);
      }
    }
    params_.clear();
    for (auto& row : cells_)
      for (auto& p : row) params_.push_back(&p);
  }

  int slots() const { return slots_; }
  int dim() const { return dim_; }
  int attribute_count() const { return schema_.count(); }
  int value_count(int a) const { return schema_.at(a).scale.value_count(); }

  Param<S>& cell(int a, int v) { return cells_.at(a).at(v); }
  const Param<S>& cell(int a, int v) const { return cells_.at(a).at(v); }

  ParamRefs<S>& parameters() { return params_; }
  void zero_grads() {
    for (auto* p : params_) p->g.setZero();
  }

  const ProtoProvenance& provenance(int a, int v, int slot) const {
    return prov_.at(a).at(v).at(slot);
  }
  void set_provenance(int a, int v, int slot, const ProtoProvenance& p) {
    prov_.at(a).at(v).at(slot) = p;
    if (p.valid) pushed_ = true;
  }

  bool pushed() const { return pushed_; }

  struct Nearest {
    int value = -1, slot = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  // Nearest prototype across every value of attribute a. Exact ties resolve
  // to the lowest (value, slot).
  Nearest nearest(int a, const Vec<S>& vec) const {
    Nearest best;
    for (int v = 0; v < value_count(a); ++v) {
      const Mat<S>& W = cells_[a][v].w;
      for (int s = 0; s < slots_; ++s) {
        double d = static_cast<double>((vec.transpose() - W.row(s)).norm());
        if (d < best.distance) {
          best.distance = d;
          best.value = v;
          best.slot = s;
        }
      }
    }
    return best;
  }

  // Grounding loss: per sample, the mean distance from each attribute vector
  // to the prototype slots of its labelled value, averaged over attributes
  // and over the batch. With min reduction only the closest slot counts.
  // Gradients (scaled by grad_scale) flow into both the attribute vectors
  // and the prototypes; pass grad_scale 0 to evaluate only.
  S loss(const std::vector<Mat<S>>& attr_vecs,
         const std::vector<std::vector<int>>& value_idx,
         std::vector<Mat<S>>* d_attr_vecs, S grad_scale) {
    const int A = attribute_count();
    const int B = A > 0 ? static_cast<int>(attr_vecs[0].rows()) : 0;
    if (B == 0) return S(0);
    double total = 0.0;
    const double slot_w = min_reduction_ ? 1.0 : 1.0 / slots_;
    const double sample_w = 1.0 / (static_cast<double>(A) * B);
    for (int a = 0; a < A; ++a) {
      for (int b = 0; b < B; ++b) {
        const int v = value_idx[b][a];
        if (v < 0 || v >= value_count(a))
          throw DataError("attribute " + std::to_string(a) + " label index " +
                          std::to_string(v) + " outside schema range");
        const Mat<S>& W = cells_[a][v].w;
        int lo = 0, hi = slots_;
        if (min_reduction_) {
          double best = std::numeric_limits<double>::infinity();
          int best_s = 0;
          for (int s = 0; s < slots_; ++s) {
            double d = static_cast<double>((attr_vecs[a].row(b) - W.row(s)).norm());
            if (d < best) { best = d; best_s = s; }
          }
          lo = best_s;
          hi = best_s + 1;
        }
        for (int s = lo; s < hi; ++s) {
          Vec<S> diff = (attr_vecs[a].row(b) - W.row(s)).transpose();
          double d = static_cast<double>(diff.norm());
          total += slot_w * sample_w * d;
          if (grad_scale != S(0)) {
            S coeff = grad_scale *
                      static_cast<S>(slot_w * sample_w / std::max(d, kNormEps));
            if (d_attr_vecs) (*d_attr_vecs)[a].row(b) += coeff * diff.transpose();
            cells_[a][v].g.row(s) -= coeff * diff.transpose();
          }
        }
      }
    }
    return static_cast<S>(total);
  }

  // Projection: each slot jumps to the closest training attribute vector that
  // carries the slot's value. Slots whose value never occurs in the training
  // set are left untouched and flagged in the returned records.
  std::vector<PushRecord> push(const std::vector<Mat<S>>& attr_vecs,
                               const std::vector<std::vector<int>>& value_idx,
                               const std::vector<std::string>& sample_ids,
                               int epoch) {
    const int A = attribute_count();
    const int n = static_cast<int>(sample_ids.size());
    std::vector<PushRecord> records;
    for (int a = 0; a < A; ++a) {
      for (int v = 0; v < value_count(a); ++v) {
        Mat<S>& W = cells_[a][v].w;
        for (int s = 0; s < slots_; ++s) {
          PushRecord rec;
          rec.attribute = a;
          rec.value = v;
          rec.slot = s;
          rec.epoch = epoch;
          double best = std::numeric_limits<double>::infinity();
          int best_i = -1;
          for (int i = 0; i < n; ++i) {
            if (value_idx[i][a] != v) continue;
            double d = static_cast<double>((attr_vecs[a].row(i) - W.row(s)).norm());
            if (d < best) { best = d; best_i = i; }
          }
          if (best_i >= 0) {
            W.row(s) = attr_vecs[a].row(best_i);
            rec.sample_id = sample_ids[best_i];
            rec.distance = best;
            rec.updated = true;
            ProtoProvenance pv;
            pv.valid = true;
            pv.sample_id = sample_ids[best_i];
            pv.epoch = epoch;
            pv.distance = best;
            prov_[a][v][s] = pv;
            pushed_ = true;
          }
          records.push_back(rec);
        }
      }
    }
    return records;
  }

  struct ProtoInference {
    Mat<S> replaced;               // A x D
    std::vector<int> values;       // matched prototype's value index per a
    std::vector<Nearest> matches;  // full match info per a
  };

  // Inference variant: every attribute vector is swapped for its unrestricted
  // nearest prototype, whose class becomes the reported attribute value. Only
  // meaningful once prototypes are grounded in real samples.
  ProtoInference proto_inference(const Mat<S>& attr_vectors) const {
    if (!pushed_)
      throw UsageError("proto_inference requires a pushed prototype bank");
    const int A = attribute_count();
    if (attr_vectors.rows() != A || attr_vectors.cols() != dim_)
      throw UsageError("proto_inference: expected " + std::to_string(A) + " x " +
                       std::to_string(dim_) + " attribute vectors");
    ProtoInference out;
    out.replaced.resize(A, dim_);
    out.values.resize(A);
    out.matches.resize(A);
    for (int a = 0; a < A; ++a) {
      Vec<S> q = attr_vectors.row(a).transpose();
      Nearest m = nearest(a, q);
      out.replaced.row(a) = cells_[a][m.value].w.row(m.slot);
      out.values[a] = m.value;
      out.matches[a] = m;
    }
    return out;
  }

 private:
  AttributeSchema schema_;
  int dim_, slots_;
  bool min_reduction_;
  bool pushed_ = false;
  std::vector<std::vector<Param<S>>> cells_;  // [a][v]: slots x dim
  std::vector<std::vector<std::vector<ProtoProvenance>>> prov_;
  ParamRefs<S> params_;
};

}  // namespace apvit
