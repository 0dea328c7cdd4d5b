#include "apvit/explain.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>

namespace apvit {

using nlohmann::json;

namespace {

// Bilinear upsample of a coarse grid to out x out, half-pixel centers.
MatD upsample(const MatD& in, int out) {
  const int gh = static_cast<int>(in.rows());
  const int gw = static_cast<int>(in.cols());
  MatD o(out, out);
  const double sy = static_cast<double>(gh) / out;
  const double sx = static_cast<double>(gw) / out;
  for (int y = 0; y < out; ++y)
    for (int x = 0; x < out; ++x) {
      double fy = (y + 0.5) * sy - 0.5;
      double fx = (x + 0.5) * sx - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      int x0 = static_cast<int>(std::floor(fx));
      double wy = fy - y0, wx = fx - x0;
      auto at = [&](int yy, int xx) {
        yy = std::max(0, std::min(gh - 1, yy));
        xx = std::max(0, std::min(gw - 1, xx));
        return in(yy, xx);
      };
      o(y, x) = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
    }
  return o;
}

}  // namespace

namespace detail {

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

}  // namespace detail

Heatmap attention_heatmap(const VecD& attention, int patches_per_side,
                          int image_size) {
  const int G = patches_per_side;
  if (attention.size() != static_cast<Eigen::Index>(G) * G)
    throw UsageError("attention length " + std::to_string(attention.size()) +
                     " does not match patch grid " + std::to_string(G) + "x" +
                     std::to_string(G));
  MatD grid(G, G);
  for (int gy = 0; gy < G; ++gy)
    for (int gx = 0; gx < G; ++gx) grid(gy, gx) = attention(gy * G + gx);
  Heatmap h;
  h.grid = upsample(grid, image_size);
  double lo = h.grid.minCoeff(), hi = h.grid.maxCoeff();
  if (hi - lo < 1e-12) {
    h.grid.setZero();
    h.degenerate = true;
  } else {
    h.grid = ((h.grid.array() - lo) / (hi - lo)).matrix();
  }
  return h;
}

VecD rollout_attention(const std::vector<MatD>& backbone_layers,
                       const VecD& branch_attention) {
  if (backbone_layers.empty()) return branch_attention;
  const int T = static_cast<int>(backbone_layers[0].rows());
  const int N = T - 1;
  if (branch_attention.size() != N)
    throw UsageError("branch attention length does not match token count");
  MatD R = MatD::Identity(T, T);
  for (const MatD& A : backbone_layers) {
    MatD mixed = 0.5 * A + 0.5 * MatD::Identity(T, T);
    for (int r = 0; r < T; ++r) {
      double s = mixed.row(r).sum();
      if (s > 0) mixed.row(r) /= s;
    }
    R = mixed * R;
  }
  // Branch attention lives on patch tokens; push it back through the
  // backbone's mixing to input patch positions.
  VecD out = VecD::Zero(N);
  for (int m = 0; m < N; ++m)
    for (int n = 0; n < N; ++n)
      out(n) += branch_attention(m) * R(m + 1, n + 1);
  double s = out.sum();
  if (s > 0) out /= s;
  return out;
}

std::string explanation_report_json(const ExplanationReport& r, int indent) {
  json j;
  j["sample_id"] = r.sample_id;
  j["mode"] = r.mode;
  json jt;
  jt["score"] = r.target_score;
  if (!r.target_logits.empty()) jt["logits"] = r.target_logits;
  jt["value"] = r.target_value;
  j["target"] = jt;
  j["attributes"] = json::array();
  for (const auto& a : r.attributes) {
    json ja;
    ja["name"] = a.name;
    ja["scale"] = a.ordinal ? "ordinal" : "nominal";
    ja["score"] = a.score;
    if (!a.logits.empty()) ja["logits"] = a.logits;
    ja["reported_value"] = a.reported_value;
    ja["heatmap"] = a.heatmap_path;
    ja["overlay"] = a.overlay_path;
    ja["heatmap_degenerate"] = a.heatmap_degenerate;
    json jp;
    jp["value"] = a.prototype.value;
    jp["value_label"] = a.prototype.value_label;
    jp["slot"] = a.prototype.slot;
    jp["distance"] = a.prototype.distance;
    if (!a.prototype.source_sample_id.empty()) {
      jp["source_sample_id"] = a.prototype.source_sample_id;
      jp["push_epoch"] = a.prototype.push_epoch;
      jp["image"] = a.prototype.image_path;
    }
    ja["prototype"] = jp;
    j["attributes"].push_back(ja);
  }
  return j.dump(indent) + "\n";
}

}  // namespace apvit
