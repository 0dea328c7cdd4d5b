#include "apvit/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace apvit {

using nlohmann::json;

double within1_accuracy(const std::vector<double>& gt,
                        const std::vector<double>& pred, int lo, int hi) {
  if (gt.empty() || gt.size() != pred.size())
    throw UsageError("within1_accuracy: empty or mismatched inputs");
  long long hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    long p = iround(clamp(pred[i], lo, hi));
    long g = iround(gt[i]);
    if (std::labs(p - g) <= 1) ++hits;
  }
  return static_cast<double>(hits) / gt.size();
}

double accuracy(const std::vector<int>& gt, const std::vector<int>& pred) {
  if (gt.empty() || gt.size() != pred.size())
    throw UsageError("accuracy: empty or mismatched inputs");
  long long hits = 0;
  for (size_t i = 0; i < gt.size(); ++i)
    if (gt[i] == pred[i]) ++hits;
  return static_cast<double>(hits) / gt.size();
}

int argmax_lowest(const std::vector<double>& logits) {
  if (logits.empty()) throw UsageError("argmax of empty vector");
  int best = 0;
  for (int k = 1; k < static_cast<int>(logits.size()); ++k)
    if (logits[k] > logits[best]) best = k;
  return best;
}

double dice(const std::vector<float>& pred, const std::vector<float>& gt,
            double threshold) {
  if (pred.size() != gt.size()) throw UsageError("dice: shape mismatch");
  long long np = 0, ng = 0, ni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] >= threshold;
    bool g = gt[i] >= 0.5f;
    np += p;
    ng += g;
    ni += p && g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * ni / static_cast<double>(np + ng);
}

std::pair<double, double> binomial_ci95(double p_hat, long long n, bool wilson) {
  if (n < 1) throw UsageError("binomial_ci95: n must be >= 1");
  const double z = 1.96;
  double lo, hi;
  if (!wilson) {
    double half = z * std::sqrt(p_hat * (1.0 - p_hat) / n);
    lo = p_hat - half;
    hi = p_hat + half;
  } else {
    double z2n = z * z / n;
    double center = (p_hat + z2n / 2.0) / (1.0 + z2n);
    double half = z * std::sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) /
                  (1.0 + z2n);
    lo = center - half;
    hi = center + half;
  }
  return {clamp(lo, 0.0, 1.0), clamp(hi, 0.0, 1.0)};
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

std::string metric_report_json(const MetricReport& r, int indent) {
  json j;
  j["split"] = r.split;
  j["mode"] = r.mode;
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    json je;
    je["head"] = e.head;
    je["metric"] = e.metric;
    je["value"] = e.value;
    je["n"] = e.n;
    je["ci_low"] = e.ci_low;
    je["ci_high"] = e.ci_high;
    if (!e.fold_values.empty()) {
      je["fold_values"] = e.fold_values;
      je["fold_mean"] = mean_of(e.fold_values);
      je["fold_std"] = std_of(e.fold_values);
    }
    j["entries"].push_back(je);
  }
  return j.dump(indent) + "\n";
}

MetricReport metric_report_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("entries"))
    throw DataError("not a metric report");
  MetricReport r;
  r.split = j.value("split", "test");
  r.mode = j.value("mode", "standard");
  for (const auto& je : j.at("entries")) {
    MetricEntry e;
    e.head = je.at("head").get<std::string>();
    e.metric = je.at("metric").get<std::string>();
    e.value = je.at("value").get<double>();
    e.n = je.at("n").get<long long>();
    e.ci_low = je.at("ci_low").get<double>();
    e.ci_high = je.at("ci_high").get<double>();
    if (je.contains("fold_values"))
      e.fold_values = je.at("fold_values").get<std::vector<double>>();
    r.entries.push_back(std::move(e));
  }
  return r;
}

std::string render_metric_table(const MetricReport& r) {
  std::ostringstream os;
  os << "split: " << r.split << "  mode: " << r.mode << "\n";
  bool any_folds = false;
  for (const auto& e : r.entries) any_folds |= !e.fold_values.empty();
  size_t head_w = 4;
  for (const auto& e : r.entries) head_w = std::max(head_w, e.head.size());
  os << std::left << std::setw(static_cast<int>(head_w) + 2) << "head"
     << std::setw(18) << "metric" << std::setw(8) << "value"
     << std::setw(16) << "ci95" << std::setw(8) << "n";
  if (any_folds) os << std::setw(16) << "folds (mean std)";
  os << "\n";
  for (const auto& e : r.entries) {
    std::ostringstream ci;
    ci << "[" << std::fixed << std::setprecision(1) << e.ci_low * 100.0 << ", "
       << e.ci_high * 100.0 << "]";
    os << std::left << std::setw(static_cast<int>(head_w) + 2) << e.head
       << std::setw(18) << e.metric << std::setw(8) << std::fixed
       << std::setprecision(1) << e.value * 100.0 << std::setw(16) << ci.str()
       << std::setw(8) << e.n;
    if (!e.fold_values.empty()) {
      std::ostringstream fs;
      fs << std::fixed << std::setprecision(1) << mean_of(e.fold_values) * 100.0
         << " " << std_of(e.fold_values) * 100.0;
      os << std::setw(16) << fs.str();
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace apvit
