#include "apvit/data.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace apvit;
using testutil::ManifestBuilder;
using testutil::TmpDir;

namespace {

std::string ok_row(const std::string& id, const std::string& group, int shape,
                   const std::string& kind, int target, bool mask = true) {
  nlohmann::json j;
  j["id"] = id;
  j["image_path"] = "images/" + id + ".pgm";
  if (mask) j["mask_path"] = "masks/" + id + ".pgm";
  j["group_id"] = group;
  j["attr_labels"] = {{"shape", shape}, {"kind", kind}};
  j["target_label"] = target;
  return j.dump();
}

Dataset tiny_dataset(ManifestBuilder& mb, const ExperimentConfig& cfg, int n,
                     int groups) {
  for (int i = 0; i < n; ++i) {
    std::string id = "x" + std::to_string(i);
    mb.image(id + ".pgm", cfg.model.image_size, 100 + i);
    mb.row(ok_row(id, "g" + std::to_string(i % groups), 1 + i % 5,
                  i % 2 ? "a" : "b", 1 + (i * 2) % 5));
  }
  return Dataset::load(mb.write(), cfg.model, cfg.data);
}

}  // namespace

TEST_CASE("loader reports every invalid row with its line number") {
  TmpDir tmp("manifest_errors");
  ManifestBuilder mb(tmp.path);
  mb.image("ok.pgm", 16, 1);
  mb.row(ok_row("ok", "g0", 3, "a", 2));
  mb.row("{not json");                                     // line 2
  mb.row(ok_row("dup", "g0", 1, "b", 1));                  // line 3, image missing
  mb.image("dup.pgm", 16, 2);
  mb.row(ok_row("dup", "g1", 2, "a", 3));                  // line 4, duplicate id
  nlohmann::json bad = nlohmann::json::parse(ok_row("bad1", "g2", 9, "a", 2));
  mb.image("bad1.pgm", 16, 3);
  mb.row(bad.dump());                                      // line 5, shape out of range
  nlohmann::json unk = nlohmann::json::parse(ok_row("bad2", "g2", 2, "a", 2));
  unk["extra_field"] = 1;
  mb.image("bad2.pgm", 16, 4);
  mb.row(unk.dump());                                      // line 6, unknown field

  ExperimentConfig cfg = testutil::tiny_config();
  std::string msg;
  try {
    Dataset::load(mb.write(), cfg.model, cfg.data);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    msg = e.what();
  }
  CHECK(msg.find("line 2:") != std::string::npos);
  CHECK(msg.find("line 4:") != std::string::npos);
  CHECK(msg.find("duplicate id") != std::string::npos);
  CHECK(msg.find("line 5:") != std::string::npos);
  CHECK(msg.find("out of range") != std::string::npos);
  CHECK(msg.find("line 6:") != std::string::npos);
  CHECK(msg.find("extra_field") != std::string::npos);
  // The missing-file row must be named too.
  CHECK(msg.find("line 3:") != std::string::npos);
}

TEST_CASE("loader rejects an empty manifest and missing attributes") {
  TmpDir tmp("manifest_empty");
  ExperimentConfig cfg = testutil::tiny_config();
  {
    std::ofstream out(tmp / "empty.jsonl");
  }
  CHECK_THROWS_AS(Dataset::load(tmp / "empty.jsonl", cfg.model, cfg.data),
                  DataError);

  ManifestBuilder mb(tmp.path);
  mb.image("a.pgm", 16, 1);
  nlohmann::json j = nlohmann::json::parse(ok_row("a", "g0", 1, "a", 1));
  j["attr_labels"].erase("kind");
  mb.row(j.dump());
  CHECK_THROWS_AS(Dataset::load(mb.write(), cfg.model, cfg.data), DataError);
}

TEST_CASE("mask presence must be consistent across rows") {
  TmpDir tmp("mask_mix");
  ManifestBuilder mb(tmp.path);
  mb.image("a.pgm", 16, 1, true);
  mb.image("b.pgm", 16, 2, false);
  mb.row(ok_row("a", "g0", 1, "a", 1, true));
  mb.row(ok_row("b", "g1", 2, "b", 2, false));
  ExperimentConfig cfg = testutil::tiny_config();
  CHECK_THROWS_AS(Dataset::load(mb.write(), cfg.model, cfg.data), DataError);
}

TEST_CASE("dataset standardization uses dataset statistics") {
  TmpDir tmp("stats");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  Dataset ds = tiny_dataset(mb, cfg, 8, 3);
  DatasetStats st = ds.compute_stats();
  ds.set_stats(st);

  // Mean and standard deviation of the standardized inputs over the whole
  // dataset are 0 and 1 per channel.
  double sum = 0, sumsq = 0;
  long long n = 0;
  for (int i = 0; i < ds.size(); ++i) {
    TensorImage t = ds.input(i);
    for (float v : t.data) {
      sum += v;
      sumsq += static_cast<double>(v) * v;
      ++n;
    }
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-3));

  // Same raw image standardized twice gives identical tensors.
  TensorImage a = ds.input(0), b = ds.input(0);
  CHECK(a.data == b.data);
}

TEST_CASE("stats must be set before input tensors are served") {
  TmpDir tmp("stats_guard");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  Dataset ds = tiny_dataset(mb, cfg, 4, 2);
  CHECK_THROWS_AS(ds.input(0), DataError);
}

TEST_CASE("masks binarize at one half") {
  TmpDir tmp("maskbin");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  mb.image("a.pgm", 16, 1, false);
  ImageU8 m = ImageU8::make(16, 16, 1);
  for (int i = 0; i < 256; ++i) m.data[i] = static_cast<std::uint8_t>(i);
  write_pnm(m, (tmp.path / "masks" / "a.pgm").string());
  mb.row(ok_row("a", "g0", 1, "a", 1, true));
  Dataset ds = Dataset::load(mb.write(), cfg.model, cfg.data);
  ds.set_stats(ds.compute_stats());
  MatD mask = ds.mask(0);
  // 0.5 maps to u8 128 after the 1/255 scale: values >= 127.5 are foreground.
  int ones = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      double v = mask(y, x);
      CHECK((v == 0.0 || v == 1.0));
      ones += v == 1.0;
    }
  CHECK(ones == 128);  // bytes 128..255
}

TEST_CASE("center crop profile composes with resize") {
  TmpDir tmp("cropprof");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  cfg.data.preprocess_profile = "center_crop";
  cfg.data.crop_size = 24;
  mb.image("a.pgm", 32, 5);
  mb.row(ok_row("a", "g0", 2, "b", 3));
  Dataset ds = Dataset::load(mb.write(), cfg.model, cfg.data);
  ds.set_stats(ds.compute_stats());
  TensorImage t = ds.input(0);
  CHECK(t.h == cfg.model.image_size);
  CHECK(t.w == cfg.model.image_size);

  ImageU8 raw = read_pnm((tmp.path / "images" / "a.pgm").string());
  ImageU8 manual = resize_bilinear(center_crop(raw, 24), 16, 16);
  TensorImage geo = preprocess_geometry(raw, "center_crop", 24, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      CHECK(geo.at(y, x, 0) == doctest::Approx(manual.at(y, x) / 255.0));
}

TEST_CASE("synthetic generation is byte identical per seed") {
  TmpDir tmp("synthdet");
  SynthConfig cfg;
  cfg.n_samples = 12;
  cfg.image_size = 32;
  cfg.seed = 5;
  generate_synthetic(cfg, tmp / "a");
  generate_synthetic(cfg, tmp / "b");
  for (const char* leaf : {"manifest.jsonl", "images/s00003.pgm", "masks/s00007.pgm"}) {
    std::ifstream fa(tmp.path / "a" / leaf, std::ios::binary);
    std::ifstream fb(tmp.path / "b" / leaf, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }
  cfg.seed = 6;
  generate_synthetic(cfg, tmp / "c");
  std::ifstream fa(tmp.path / "a" / "images/s00003.pgm", std::ios::binary);
  std::ifstream fc(tmp.path / "c" / "images/s00003.pgm", std::ios::binary);
  std::stringstream sa, sc;
  sa << fa.rdbuf();
  sc << fc.rdbuf();
  CHECK(sa.str() != sc.str());
}

TEST_CASE("synthetic targets follow the weighted label rule") {
  TmpDir tmp("synthtar");
  SynthConfig cfg;
  cfg.n_samples = 40;
  cfg.image_size = 32;
  cfg.seed = 11;
  generate_synthetic(cfg, tmp.str());
  std::ifstream in(tmp.path / "manifest.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    double t = cfg.target_bias;
    t += cfg.target_weights[0] * j["attr_labels"]["roundness"].get<double>();
    t += cfg.target_weights[1] * j["attr_labels"]["spike_count"].get<double>();
    t += cfg.target_weights[2] * j["attr_labels"]["lobe_count"].get<double>();
    t += cfg.target_weights[3] * j["attr_labels"]["texture_noise"].get<double>();
    long long want = iround(clamp(t, 1.0, 5.0));
    CHECK(j["target_label"].get<long long>() == want);
    ++rows;
  }
  CHECK(rows == 40);
}

TEST_CASE("synthetic roundness is recoverable from mask geometry") {
  // Rank correlation between the roundness label and the measured
  // minor/major axis ratio of the mask must be strong.
  TmpDir tmp("synthrho");
  SynthConfig cfg;
  cfg.n_samples = 200;
  cfg.image_size = 48;
  cfg.seed = 21;
  generate_synthetic(cfg, tmp.str());
  ExperimentConfig ecfg = preset_config("synthetic");
  ecfg.model.image_size = 48;
  ecfg.model.patch_size = 8;
  Dataset ds = Dataset::load((tmp.path / "manifest.jsonl").string(), ecfg.model,
                             ecfg.data);
  ds.set_stats(ds.compute_stats());

  std::vector<double> label(ds.size()), ratio(ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    label[i] = ds.attr_label(i, 0);
    MatD m = ds.mask(i);
    double n = 0, my = 0, mx = 0;
    for (int y = 0; y < m.rows(); ++y)
      for (int x = 0; x < m.cols(); ++x)
        if (m(y, x) > 0.5) {
          n += 1;
          my += y;
          mx += x;
        }
    REQUIRE(n > 0);
    my /= n;
    mx /= n;
    double syy = 0, sxx = 0, sxy = 0;
    for (int y = 0; y < m.rows(); ++y)
      for (int x = 0; x < m.cols(); ++x)
        if (m(y, x) > 0.5) {
          syy += (y - my) * (y - my);
          sxx += (x - mx) * (x - mx);
          sxy += (y - my) * (x - mx);
        }
    syy /= n;
    sxx /= n;
    sxy /= n;
    double tr = syy + sxx, det = syy * sxx - sxy * sxy;
    double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
    double l1 = tr / 2.0 + disc, l2 = tr / 2.0 - disc;
    ratio[i] = std::sqrt(std::max(l2, 1e-9) / std::max(l1, 1e-9));
  }

  auto ranks = [](std::vector<double> v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < idx.size();) {
      size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> rl = ranks(label), rr = ranks(ratio);
  double ml = 0, mr = 0;
  for (size_t i = 0; i < rl.size(); ++i) {
    ml += rl[i];
    mr += rr[i];
  }
  ml /= rl.size();
  mr /= rr.size();
  double num = 0, dl = 0, dr = 0;
  for (size_t i = 0; i < rl.size(); ++i) {
    num += (rl[i] - ml) * (rr[i] - mr);
    dl += (rl[i] - ml) * (rl[i] - ml);
    dr += (rr[i] - mr) * (rr[i] - mr);
  }
  double rho = num / std::sqrt(dl * dr);
  INFO("spearman rho = ", rho);
  CHECK(rho > 0.9);
}

TEST_CASE("folds partition samples and respect groups") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    TmpDir tmp("folds" + std::to_string(trial));
    ManifestBuilder mb(tmp.path);
    ExperimentConfig cfg = testutil::tiny_config();
    int n = 24 + static_cast<int>(rng() % 40);
    int groups = 5 + static_cast<int>(rng() % 8);
    Dataset ds = tiny_dataset(mb, cfg, n, groups);
    int k = 2 + static_cast<int>(rng() % 4);
    if (k > groups) k = groups;
    unsigned seed = static_cast<unsigned>(rng() % 1000);
    auto folds = group_stratified_folds(ds, k, 0.1, seed);
    REQUIRE(static_cast<int>(folds.size()) == k);

    for (int f = 0; f < k; ++f) {
      const FoldSplit& sp = folds[f];
      std::set<int> seen;
      for (int i : sp.train) CHECK(seen.insert(i).second);
      for (int i : sp.val) CHECK(seen.insert(i).second);
      for (int i : sp.test) CHECK(seen.insert(i).second);
      CHECK(static_cast<int>(seen.size()) == n);

      // No group straddles two parts of the split.
      auto groups_of = [&](const std::vector<int>& part) {
        std::set<std::string> g;
        for (int i : part) g.insert(ds.record(i).group_id);
        return g;
      };
      auto gt = groups_of(sp.train), gv = groups_of(sp.val), ge = groups_of(sp.test);
      for (const auto& g : gv) CHECK(gt.find(g) == gt.end());
      for (const auto& g : ge) {
        CHECK(gt.find(g) == gt.end());
        CHECK(gv.find(g) == gv.end());
      }
    }

    // Same seed reproduces the same folds; test folds cover all samples.
    auto again = group_stratified_folds(ds, k, 0.1, seed);
    std::set<int> all_test;
    for (int f = 0; f < k; ++f) {
      CHECK(again[f].test == folds[f].test);
      for (int i : folds[f].test) CHECK(all_test.insert(i).second);
    }
    CHECK(static_cast<int>(all_test.size()) == n);
  }
}

TEST_CASE("validation split holds out whole groups worth ten percent") {
  TmpDir tmp("valfrac");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  Dataset ds = tiny_dataset(mb, cfg, 60, 20);
  auto folds = group_stratified_folds(ds, 5, 0.1, 3);
  for (const auto& sp : folds) {
    CHECK(!sp.val.empty());
    CHECK(sp.val.size() * 10 >= sp.train.size());
  }
}

TEST_CASE("fold construction rejects bad arguments") {
  TmpDir tmp("foldbad");
  ManifestBuilder mb(tmp.path);
  ExperimentConfig cfg = testutil::tiny_config();
  Dataset ds = tiny_dataset(mb, cfg, 8, 2);
  CHECK_THROWS_AS(group_stratified_folds(ds, 1, 0.1, 3), UsageError);
  CHECK_THROWS_AS(group_stratified_folds(ds, 5, 0.1, 3), DataError);
}
