#include "apvit/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace apvit {

using nlohmann::json;

TensorImage preprocess_geometry(const ImageU8& raw, const std::string& profile,
                                int crop_size, int out_size) {
  ImageU8 img = raw;
  if (profile == "center_crop") {
    int size = crop_size > 0 ? crop_size : std::min(img.h, img.w);
    img = center_crop(img, size);
  } else if (profile != "none") {
    throw ConfigError("unknown preprocess profile: " + profile);
  }
  if (img.h != out_size || img.w != out_size)
    img = resize_bilinear(img, out_size, out_size);
  TensorImage t = TensorImage::make(img.h, img.w, img.c);
  for (size_t i = 0; i < img.data.size(); ++i)
    t.data[i] = static_cast<float>(img.data[i]) / 255.0f;
  return t;
}

void standardize(TensorImage& img, const DatasetStats& stats) {
  const double eps = 1e-6;
  if (static_cast<int>(stats.mean.size()) != img.c)
    throw DataError("dataset stats cover " + std::to_string(stats.mean.size()) +
                    " channels, image has " + std::to_string(img.c));
  for (int ch = 0; ch < img.c; ++ch) {
    const float m = static_cast<float>(stats.mean[ch]);
    const float s = static_cast<float>(std::max(stats.stdev[ch], eps));
    for (int i = ch; i < static_cast<int>(img.data.size()); i += img.c)
      img.data[i] = (img.data[i] - m) / s;
  }
}

TensorImage preprocess_mask(const ImageU8& raw, const std::string& profile,
                            int crop_size, int out_size) {
  if (raw.c != 1) throw DataError("mask must be single-channel");
  TensorImage t = preprocess_geometry(raw, profile, crop_size, out_size);
  for (auto& v : t.data) v = v >= 0.5f ? 1.0f : 0.0f;
  return t;
}

namespace {

std::string join_errors(const std::vector<std::string>& errs) {
  std::string out;
  for (size_t i = 0; i < errs.size(); ++i) {
    if (i) out += "; ";
    out += errs[i];
  }
  return out;
}

}  // namespace

Dataset Dataset::load(const std::string& manifest_path, const ModelConfig& model,
                      const DataConfig& data) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);

  Dataset ds;
  ds.schema_ = model.schema;
  ds.target_ = model.target;
  ds.root_ = fs::path(manifest_path).parent_path().string();
  ds.profile_ = data.preprocess_profile;
  ds.crop_size_ = data.crop_size;
  ds.out_size_ = model.image_size;
  ds.channels_ = model.channels;

  std::vector<std::string> errs;
  std::map<std::string, int> seen_ids;
  bool first_row = true;
  std::string line;
  int lineno = 0;
  auto resolve = [&](const std::string& rel) {
    fs::path p(rel);
    return p.is_absolute() ? p.string() : (fs::path(ds.root_) / p).string();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string at = "line " + std::to_string(lineno) + ": ";
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      errs.push_back(at + "not a valid record");
      continue;
    }
    bool row_ok = true;
    auto fail = [&](const std::string& msg) {
      errs.push_back(at + msg);
      row_ok = false;
    };
    static const std::vector<std::string> known = {
        "id", "image_path", "attr_labels", "target_label", "mask_path", "group_id"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        fail("unknown field '" + it.key() + "'");

    SampleRecord rec;
    for (const char* f : {"id", "image_path", "group_id"}) {
      if (!j.contains(f) || !j[f].is_string()) {
        fail(std::string("missing or non-string field '") + f + "'");
        continue;
      }
      std::string v = j[f].get<std::string>();
      if (v.empty()) fail(std::string("empty field '") + f + "'");
      if (f == std::string("id")) rec.id = v;
      else if (f == std::string("image_path")) rec.image_path = v;
      else rec.group_id = v;
    }
    if (!rec.id.empty()) {
      auto [it, inserted] = seen_ids.emplace(rec.id, lineno);
      if (!inserted)
        fail("duplicate id '" + rec.id + "' (first seen line " +
             std::to_string(it->second) + ")");
    }
    if (!j.contains("target_label") || !j["target_label"].is_number())
      fail("missing or non-numeric field 'target_label'");
    else {
      rec.target_label = j["target_label"].get<double>();
      if (!ds.target_.label_valid(rec.target_label)) {
        std::ostringstream os;
        os << "target_label " << rec.target_label << " out of range";
        fail(os.str());
      }
    }
    if (!j.contains("attr_labels") || !j["attr_labels"].is_object())
      fail("missing or non-object field 'attr_labels'");
    else {
      const json& al = j["attr_labels"];
      for (auto it = al.begin(); it != al.end(); ++it) {
        bool known_attr = false;
        for (int a = 0; a < ds.schema_.count(); ++a)
          if (ds.schema_.at(a).name == it.key()) known_attr = true;
        if (!known_attr) fail("unknown attribute '" + it.key() + "'");
      }
      for (int a = 0; a < ds.schema_.count(); ++a) {
        const std::string& name = ds.schema_.at(a).name;
        if (!al.contains(name) || !al[name].is_number()) {
          fail("missing or non-numeric attribute '" + name + "'");
          continue;
        }
        double v = al[name].get<double>();
        if (!ds.schema_.at(a).scale.label_valid(v)) {
          std::ostringstream os;
          os << "attribute '" << name << "' = " << v << " out of range";
          fail(os.str());
        }
        rec.attr_labels[name] = v;
      }
    }
    bool has_mask = j.contains("mask_path") && !j["mask_path"].is_null();
    if (has_mask) {
      if (!j["mask_path"].is_string()) {
        fail("field 'mask_path' must be a string");
        has_mask = false;
      } else {
        rec.mask_path = j["mask_path"].get<std::string>();
      }
    }
    if (first_row) {
      ds.has_masks_ = has_mask;
      first_row = false;
    } else if (has_mask != ds.has_masks_) {
      fail("mask_path presence differs from the first record");
    }
    if (!rec.image_path.empty() && !fs::exists(resolve(rec.image_path)))
      fail("image file not found: " + rec.image_path);
    if (has_mask && !rec.mask_path.empty() && !fs::exists(resolve(rec.mask_path)))
      fail("mask file not found: " + rec.mask_path);

    if (row_ok) ds.records_.push_back(std::move(rec));
  }
  if (!errs.empty())
    throw DataError("manifest " + manifest_path + ": " + join_errors(errs));
  if (ds.records_.empty())
    throw DataError("manifest " + manifest_path + ": no samples");
  return ds;
}

TensorImage Dataset::raw_image(int i) const {
  fs::path p(records_.at(i).image_path);
  std::string full = p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
  ImageU8 img = read_pnm(full);
  TensorImage t = TensorImage::make(img.h, img.w, img.c);
  for (size_t k = 0; k < img.data.size(); ++k)
    t.data[k] = static_cast<float>(img.data[k]) / 255.0f;
  return t;
}

ImageU8 Dataset::display_image(int i) const {
  fs::path p(records_.at(i).image_path);
  std::string full = p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
  ImageU8 img = read_pnm(full);
  if (profile_ == "center_crop") {
    int size = crop_size_ > 0 ? crop_size_ : std::min(img.h, img.w);
    img = center_crop(img, size);
  }
  if (img.h != out_size_ || img.w != out_size_)
    img = resize_bilinear(img, out_size_, out_size_);
  return img;
}

TensorImage Dataset::input(int i) const {
  if (!stats_set_) throw DataError("dataset statistics not set");
  fs::path p(records_.at(i).image_path);
  std::string full = p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
  ImageU8 img = read_pnm(full);
  if (img.c != channels_)
    throw DataError("image " + records_.at(i).id + " has " +
                    std::to_string(img.c) + " channels, model expects " +
                    std::to_string(channels_));
  TensorImage t = preprocess_geometry(img, profile_, crop_size_, out_size_);
  standardize(t, stats_);
  return t;
}

TensorImage Dataset::mask(int i) const {
  if (!has_masks_) throw DataError("dataset has no masks");
  fs::path p(records_.at(i).mask_path);
  std::string full = p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
  return preprocess_mask(read_pnm(full), profile_, crop_size_, out_size_);
}

DatasetStats Dataset::compute_stats() const {
  DatasetStats st;
  st.mean.assign(channels_, 0.0);
  st.stdev.assign(channels_, 0.0);
  std::vector<double> sum(channels_, 0.0), sumsq(channels_, 0.0);
  long long count = 0;
  for (int i = 0; i < size(); ++i) {
    fs::path p(records_[i].image_path);
    std::string full = p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
    ImageU8 img = read_pnm(full);
    if (img.c != channels_)
      throw DataError("image " + records_[i].id + " has " +
                      std::to_string(img.c) + " channels, model expects " +
                      std::to_string(channels_));
    TensorImage t = preprocess_geometry(img, profile_, crop_size_, out_size_);
    for (int k = 0; k < static_cast<int>(t.data.size()); k += channels_)
      for (int ch = 0; ch < channels_; ++ch) {
        sum[ch] += t.data[k + ch];
        sumsq[ch] += static_cast<double>(t.data[k + ch]) * t.data[k + ch];
      }
    count += static_cast<long long>(t.h) * t.w;
  }
  for (int ch = 0; ch < channels_; ++ch) {
    st.mean[ch] = sum[ch] / count;
    double var = sumsq[ch] / count - st.mean[ch] * st.mean[ch];
    st.stdev[ch] = std::sqrt(std::max(var, 0.0));
  }
  return st;
}

const DatasetStats& Dataset::stats() const {
  if (!stats_set_) throw DataError("dataset statistics not set");
  return stats_;
}

int Dataset::index_by_id(const std::string& id) const {
  for (int i = 0; i < size(); ++i)
    if (records_[i].id == id) return i;
  return -1;
}

std::string Dataset::resolved_image_path(int i) const {
  fs::path p(records_.at(i).image_path);
  return p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
}

std::string Dataset::resolved_mask_path(int i) const {
  fs::path p(records_.at(i).mask_path);
  return p.is_absolute() ? p.string() : (fs::path(root_) / p).string();
}

double Dataset::attr_label(int i, int a) const {
  return records_.at(i).attr_labels.at(schema_.at(a).name);
}

int Dataset::attr_value_index(int i, int a) const {
  return schema_.at(a).scale.value_index(attr_label(i, a));
}

namespace {

// Deterministic draws independent of library distributions.
double unit(Rng& r) { return static_cast<double>(r() >> 11) * 0x1.0p-53; }
int randint(Rng& r, int lo, int hi) {
  return lo + static_cast<int>(r() % static_cast<unsigned long long>(hi - lo + 1));
}

template <class T>
void fisher_yates(std::vector<T>& v, Rng& r) {
  for (size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[r() % i]);
}

}  // namespace

std::vector<FoldSplit> group_stratified_folds(const Dataset& ds, int k,
                                              double val_fraction, int seed) {
  if (k < 2) throw DataError("need k >= 2 folds");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw DataError("val_fraction must be in [0, 1)");

  std::vector<std::string> group_names;
  std::map<std::string, int> group_of;
  std::vector<std::vector<int>> members;
  for (int i = 0; i < ds.size(); ++i) {
    const std::string& g = ds.record(i).group_id;
    auto it = group_of.find(g);
    if (it == group_of.end()) {
      it = group_of.emplace(g, static_cast<int>(group_names.size())).first;
      group_names.push_back(g);
      members.emplace_back();
    }
    members[it->second].push_back(i);
  }
  const int G = static_cast<int>(group_names.size());
  if (G < k)
    throw DataError("only " + std::to_string(G) + " groups for " +
                    std::to_string(k) + " folds");

  const int K = ds.target_scale().value_count();
  // Modal target class per group, lowest index on ties.
  std::vector<int> modal(G);
  for (int g = 0; g < G; ++g) {
    std::vector<int> counts(K, 0);
    for (int i : members[g]) counts[ds.target_value_index(i)]++;
    modal[g] = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                counts.begin());
  }

  // Greedy assignment: largest groups first within each class, each placed on
  // the fold currently lightest in that class (ties: lightest overall, then
  // lowest index).
  std::vector<int> fold_of(G, -1);
  std::vector<std::vector<int>> fold_class_counts(k, std::vector<int>(K, 0));
  std::vector<int> fold_totals(k, 0);
  Rng rng(static_cast<unsigned long long>(seed));
  for (int c = 0; c < K; ++c) {
    std::vector<int> gs;
    for (int g = 0; g < G; ++g)
      if (modal[g] == c) gs.push_back(g);
    fisher_yates(gs, rng);
    std::stable_sort(gs.begin(), gs.end(), [&](int a, int b) {
      return members[a].size() > members[b].size();
    });
    for (int g : gs) {
      int best = 0;
      for (int f = 1; f < k; ++f) {
        if (fold_class_counts[f][c] < fold_class_counts[best][c] ||
            (fold_class_counts[f][c] == fold_class_counts[best][c] &&
             fold_totals[f] < fold_totals[best]))
          best = f;
      }
      fold_of[g] = best;
      fold_totals[best] += static_cast<int>(members[g].size());
      for (int i : members[g]) fold_class_counts[best][ds.target_value_index(i)]++;
    }
  }

  std::vector<FoldSplit> splits(k);
  for (int f = 0; f < k; ++f) {
    std::vector<int> train_groups;
    long long train_samples = 0;
    for (int g = 0; g < G; ++g) {
      if (fold_of[g] == f) {
        for (int i : members[g]) splits[f].test.push_back(i);
      } else {
        train_groups.push_back(g);
        train_samples += static_cast<long long>(members[g].size());
      }
    }
    Rng vr(static_cast<unsigned long long>(seed) * 31 + f + 1);
    fisher_yates(train_groups, vr);
    long long val_target =
        static_cast<long long>(std::llround(val_fraction * train_samples));
    long long val_count = 0;
    size_t cut = 0;
    while (cut < train_groups.size() - 1 && val_count < val_target) {
      val_count += static_cast<long long>(members[train_groups[cut]].size());
      ++cut;
    }
    for (size_t gi = 0; gi < train_groups.size(); ++gi) {
      auto& dst = gi < cut ? splits[f].val : splits[f].train;
      for (int i : members[train_groups[gi]]) dst.push_back(i);
    }
    std::sort(splits[f].train.begin(), splits[f].train.end());
    std::sort(splits[f].val.begin(), splits[f].val.end());
    std::sort(splits[f].test.begin(), splits[f].test.end());
  }
  return splits;
}

namespace {

struct BlobShape {
  double cx, cy, a, b, theta;
  struct Bump {
    double mu, amp, inv2sig2;
  };
  std::vector<Bump> bumps;

  double radius(double phi) const {
    double psi = phi - theta;
    double cs = std::cos(psi), sn = std::sin(psi);
    double rho = a * b / std::sqrt(b * b * cs * cs + a * a * sn * sn);
    double gain = 1.0;
    for (const auto& u : bumps) {
      double d = std::remainder(phi - u.mu, 2.0 * M_PI);
      gain += u.amp * std::exp(-d * d * u.inv2sig2);
    }
    return rho * gain;
  }
};

}  // namespace

void generate_synthetic(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write manifest under " + out_dir);

  const int S = cfg.image_size;
  static const char* kFactors[4] = {"roundness", "spike_count", "lobe_count",
                                    "texture_noise"};
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng(static_cast<unsigned long long>(cfg.seed) * 1000003ULL +
            static_cast<unsigned long long>(i));
    int f[4];
    for (int j = 0; j < 4; ++j) f[j] = randint(rng, 1, 5);

    BlobShape blob;
    blob.cx = 0.5 * S + (unit(rng) - 0.5) * 0.08 * S;
    blob.cy = 0.5 * S + (unit(rng) - 0.5) * 0.08 * S;
    double r0 = S * (0.26 + 0.05 * unit(rng));
    double q = 0.35 + 0.1625 * (f[0] - 1);  // roundness 5 -> circle
    blob.a = r0 / std::sqrt(q);
    blob.b = r0 * std::sqrt(q);
    blob.theta = unit(rng) * 2.0 * M_PI;
    int n_spikes = 3 * (f[1] - 1);
    for (int j = 0; j < n_spikes; ++j) {
      double sig = 0.05 + 0.02 * unit(rng);
      blob.bumps.push_back(
          {unit(rng) * 2.0 * M_PI, 0.22 + 0.10 * unit(rng), 0.5 / (sig * sig)});
    }
    int n_lobes = f[2] - 1;
    for (int j = 0; j < n_lobes; ++j) {
      double sig = 0.45 + 0.15 * unit(rng);
      blob.bumps.push_back(
          {unit(rng) * 2.0 * M_PI, 0.10 + 0.06 * unit(rng), 0.5 / (sig * sig)});
    }

    double base_in = 0.68 + 0.08 * unit(rng);
    double noise_amp = 0.055 * (f[3] - 1);
    double rho_cap = 0.48 * S;
    ImageU8 img = ImageU8::make(S, S, 1);
    ImageU8 msk = ImageU8::make(S, S, 1);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double dx = x + 0.5 - blob.cx, dy = y + 0.5 - blob.cy;
        double d = std::sqrt(dx * dx + dy * dy);
        double phi = std::atan2(dy, dx);
        bool inside = d <= std::min(blob.radius(phi), rho_cap);
        double v;
        if (inside) {
          v = base_in + noise_amp * (unit(rng) - 0.5) * 2.0;
        } else {
          v = 0.10 + 0.03 * (unit(rng) - 0.5) * 2.0;
        }
        img.data[y * S + x] =
            static_cast<std::uint8_t>(std::lround(clamp(v, 0.0, 1.0) * 255.0));
        msk.data[y * S + x] = inside ? 255 : 0;
      }

    char name[32];
    std::snprintf(name, sizeof(name), "s%05d", i);
    std::string img_rel = std::string("images/") + name + ".pgm";
    std::string msk_rel = std::string("masks/") + name + ".pgm";
    write_pnm(img, (fs::path(out_dir) / img_rel).string());
    write_pnm(msk, (fs::path(out_dir) / msk_rel).string());

    double t = cfg.target_bias;
    for (int j = 0; j < 4; ++j) t += cfg.target_weights[j] * f[j];
    int target = static_cast<int>(iround(clamp(t, 1.0, 5.0)));

    char grp[32];
    std::snprintf(grp, sizeof(grp), "g%05d", i / cfg.group_size);
    json j;
    j["id"] = name;
    j["image_path"] = img_rel;
    j["mask_path"] = msk_rel;
    j["group_id"] = grp;
    j["target_label"] = target;
    json al = json::object();
    for (int a = 0; a < 4; ++a) al[kFactors[a]] = f[a];
    j["attr_labels"] = al;
    manifest << j.dump() << "\n";
  }
}

}  // namespace apvit
