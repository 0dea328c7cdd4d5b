#pragma once

#include "apvit/config.hpp"
#include "apvit/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace apvit {

// Optional per-class loss weights for one head. Inactive means weight 1.
struct ClassWeights {
  bool active = false;
  std::vector<double> w;

  double at(int idx) const { return active ? w.at(idx) : 1.0; }
};

// Mean squared error of a scalar score column against real-valued labels,
// optionally weighted by the label's class. Gradient accumulates into *d.
template <class S>
S mse_loss(const Mat<S>& scores, const std::vector<double>& gt,
           const std::vector<int>& gt_idx, const ClassWeights& cw, Mat<S>* d) {
  const int B = static_cast<int>(scores.rows());
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    double wgt = cw.at(gt_idx[b]);
    double r = static_cast<double>(scores(b, 0)) - gt[b];
    total += wgt * r * r;
    if (d) (*d)(b, 0) += static_cast<S>(wgt * 2.0 * r / B);
  }
  return static_cast<S>(total / B);
}

// Softmax cross-entropy against integer class labels.
template <class S>
S cross_entropy_loss(const Mat<S>& logits, const std::vector<int>& gt,
                     const ClassWeights& cw, Mat<S>* d) {
  const int B = static_cast<int>(logits.rows());
  const int K = static_cast<int>(logits.cols());
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    double wgt = cw.at(gt[b]);
    S mx = logits.row(b).maxCoeff();
    double denom = 0.0;
    for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(logits(b, k) - mx));
    double log_denom = std::log(denom);
    total += wgt * (log_denom - static_cast<double>(logits(b, gt[b]) - mx));
    if (d) {
      for (int k = 0; k < K; ++k) {
        double p = std::exp(static_cast<double>(logits(b, k) - mx)) / denom;
        double oh = (k == gt[b]) ? 1.0 : 0.0;
        (*d)(b, k) += static_cast<S>(wgt * (p - oh) / B);
      }
    }
  }
  return static_cast<S>(total / B);
}

// Pixelwise mean squared error of mask probabilities against {0,1} targets.
// *d_logits receives the gradient w.r.t. the pre-sigmoid logits,
// 2 (p - m) p (1 - p) / (B * pixels).
template <class S>
S seg_mse_loss(const Mat<S>& probs, const Mat<S>& gt, Mat<S>* d_logits) {
  const double n = static_cast<double>(probs.rows()) * probs.cols();
  double total = 0.0;
  for (Eigen::Index b = 0; b < probs.rows(); ++b)
    for (Eigen::Index i = 0; i < probs.cols(); ++i) {
      double p = static_cast<double>(probs(b, i));
      double m = static_cast<double>(gt(b, i));
      double r = p - m;
      total += r * r;
      if (d_logits)
        (*d_logits)(b, i) += static_cast<S>(2.0 * r * p * (1.0 - p) / n);
    }
  return static_cast<S>(total / n);
}

// Ground-truth bundle for one batch, already resolved to per-head forms.
struct BatchTargets {
  // Per attribute: real labels (ordinal heads) and value indices (nominal
  // heads and prototype lookup).
  std::vector<std::vector<double>> attr_labels;  // [a][b]
  std::vector<std::vector<int>> attr_idx;        // [a][b]
  std::vector<double> target_labels;             // [b]
  std::vector<int> target_idx;                   // [b]
  std::vector<std::vector<int>> value_idx_rows;  // [b][a], for the bank
};

struct LossWeights {
  ClassWeights target;
  std::vector<ClassWeights> attrs;
};

template <class S>
struct LossBreakdown {
  S target = S(0), attr = S(0), seg = S(0), proto = S(0);
  std::vector<S> per_attr;

  S supervised() const { return target + attr + seg; }
  S total(double lambda_proto) const {
    return supervised() + static_cast<S>(lambda_proto) * proto;
  }
};

// Supervised terms of the objective: target head loss + mean attribute head
// loss + segmentation loss. Gradients go into *grads sized for the batch
// (pass nullptr to evaluate only). The prototype term is added separately.
template <class S>
LossBreakdown<S> supervised_loss(const ModelConfig& cfg,
                                 const BatchOutput<S>& out,
                                 const BatchTargets& tgt, const Mat<S>& gt_masks,
                                 const LossWeights& lw, BatchGrads<S>* grads) {
  const int A = cfg.schema.count();
  LossBreakdown<S> lb;
  lb.per_attr.resize(A, S(0));
  if (grads) {
    grads->d_attr_scores.resize(A);
    grads->d_attr_vectors.resize(A);
    grads->d_target_scores = Mat<S>::Zero(out.target_scores.rows(),
                                          out.target_scores.cols());
  }
  for (int a = 0; a < A; ++a) {
    const AttributeScale& sc = cfg.schema.at(a).scale;
    Mat<S>* d = nullptr;
    if (grads) {
      grads->d_attr_scores[a] = Mat<S>::Zero(out.attr_scores[a].rows(),
                                             out.attr_scores[a].cols());
      d = &grads->d_attr_scores[a];
    }
    ClassWeights cw = a < static_cast<int>(lw.attrs.size()) ? lw.attrs[a]
                                                            : ClassWeights{};
    S la = sc.ordinal
               ? mse_loss(out.attr_scores[a], tgt.attr_labels[a], tgt.attr_idx[a],
                          cw, d)
               : cross_entropy_loss(out.attr_scores[a], tgt.attr_idx[a], cw, d);
    lb.per_attr[a] = la;
    lb.attr += la / static_cast<S>(A);
    if (grads && d) *d /= static_cast<S>(A);
  }
  {
    Mat<S>* d = grads ? &grads->d_target_scores : nullptr;
    lb.target = cfg.target.ordinal
                    ? mse_loss(out.target_scores, tgt.target_labels,
                               tgt.target_idx, lw.target, d)
                    : cross_entropy_loss(out.target_scores, tgt.target_idx,
                                         lw.target, d);
  }
  if (cfg.decoder_enabled && gt_masks.size() > 0) {
    Mat<S>* d = nullptr;
    if (grads) {
      grads->d_mask_logits = Mat<S>::Zero(out.masks.rows(), out.masks.cols());
      d = &grads->d_mask_logits;
    }
    lb.seg = seg_mse_loss(out.masks, gt_masks, d);
  }
  return lb;
}

// Inverse-frequency class weights normalized to mean 1 over the classes
// present; absent classes get weight 0. A balanced set yields all ones.
inline std::vector<double> inverse_frequency_weights(const std::vector<int>& idx,
                                                     int K) {
  std::vector<double> counts(K, 0.0);
  for (int v : idx) counts.at(v) += 1.0;
  std::vector<double> w(K, 0.0);
  double inv_sum = 0.0;
  int present = 0;
  for (int k = 0; k < K; ++k)
    if (counts[k] > 0) {
      w[k] = 1.0 / counts[k];
      inv_sum += w[k];
      ++present;
    }
  if (inv_sum > 0)
    for (int k = 0; k < K; ++k) w[k] *= present / inv_sum;
  return w;
}

enum class Phase { Warmup, Final };

inline const char* phase_name(Phase p) {
  return p == Phase::Warmup ? "warmup" : "final";
}

}  // namespace apvit
