#pragma once

#include "apvit/common.hpp"

#include <string>
#include <utility>
#include <vector>

namespace apvit {

// Fraction of predictions within one point of the ground truth after
// clamping to [lo, hi] and rounding both sides.
double within1_accuracy(const std::vector<double>& gt,
                        const std::vector<double>& pred, int lo, int hi);

// Exact-match fraction over class ids.
double accuracy(const std::vector<int>& gt, const std::vector<int>& pred);

// Argmax with ties going to the lowest index.
int argmax_lowest(const std::vector<double>& logits);

// Dice overlap after binarizing pred at threshold; both masks empty -> 1.
double dice(const std::vector<float>& pred, const std::vector<float>& gt,
            double threshold = 0.5);

// 95% binomial confidence interval, clipped to [0,1]. Wald normal
// approximation by default; Wilson score interval as the alternative.
std::pair<double, double> binomial_ci95(double p_hat, long long n,
                                        bool wilson = false);

struct MetricEntry {
  std::string head;    // "target", attribute name, or "segmentation"
  std::string metric;  // within1_accuracy | accuracy | dice
  double value = 0.0;
  long long n = 0;
  double ci_low = 0.0, ci_high = 0.0;
  std::vector<double> fold_values;  // filled under --folds
};

struct MetricReport {
  std::string split = "test";
  std::string mode = "standard";  // standard | proto_inference
  std::vector<MetricEntry> entries;
};

double mean_of(const std::vector<double>& v);
double std_of(const std::vector<double>& v);  // population, 0 for n < 2

std::string metric_report_json(const MetricReport& r, int indent = 2);
MetricReport metric_report_from_json(const std::string& text);

// Plain-text table: value, CI bracket, per-fold mean and std when present.
std::string render_metric_table(const MetricReport& r);

}  // namespace apvit
