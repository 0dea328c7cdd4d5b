#pragma once

#include "apvit/config.hpp"
#include "apvit/data.hpp"
#include "apvit/model.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TmpDir {
  std::filesystem::path path;
  explicit TmpDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path() / "apvit_tests";
    std::filesystem::create_directories(base);
    for (int i = 0;; ++i) {
      auto cand = base / (tag + "_" + std::to_string(i));
      if (!std::filesystem::exists(cand)) {
        std::filesystem::create_directories(cand);
        path = cand;
        break;
      }
    }
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string operator/(const std::string& leaf) const {
    return (path / leaf).string();
  }
};

// Small desk-scale config used across the unit tests.
inline apvit::ExperimentConfig tiny_config(int image_size = 16, int patch = 8,
                                           int dim = 16, int layers = 1,
                                           int heads = 2) {
  apvit::ExperimentConfig cfg;
  cfg.model.image_size = image_size;
  cfg.model.patch_size = patch;
  cfg.model.channels = 1;
  cfg.model.embed_dim = dim;
  cfg.model.backbone_layers = layers;
  cfg.model.attr_layers_per_branch = 1;
  cfg.model.target_layers = 1;
  cfg.model.heads = heads;
  cfg.model.decoder_enabled = true;
  cfg.model.decoder_layers = 1;
  cfg.model.schema.attributes = {
      {"shape", {true, 1, 5, {}}},
      {"kind", {false, 0, 0, {"a", "b", "c"}}},
  };
  cfg.model.target = {true, 1, 5, {}};
  cfg.prototypes.per_class = 2;
  cfg.train.epochs = 4;
  cfg.train.warmup_epochs = 1;
  cfg.train.push_step = 1;
  cfg.train.batch_size = 4;
  return cfg;
}

inline apvit::TensorImage random_image(int size, int channels, unsigned seed) {
  apvit::TensorImage img = apvit::TensorImage::make(size, size, channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : img.data) v = static_cast<float>(u(rng));
  return img;
}

// Writes a manifest plus PGM images for hand-built rows.
struct ManifestBuilder {
  std::filesystem::path root;
  std::vector<std::string> rows;
  explicit ManifestBuilder(const std::filesystem::path& dir) : root(dir) {
    std::filesystem::create_directories(root / "images");
    std::filesystem::create_directories(root / "masks");
  }
  void image(const std::string& name, int size, unsigned seed,
             bool mask = true) {
    apvit::ImageU8 img = apvit::ImageU8::make(size, size, 1);
    std::mt19937_64 rng(seed);
    for (auto& v : img.data) v = static_cast<unsigned char>(rng() % 256);
    apvit::write_pnm((root / "images" / name).string(), img);
    if (mask) {
      apvit::ImageU8 m = apvit::ImageU8::make(size, size, 1);
      for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = i % 2 ? 255 : 0;
      apvit::write_pnm((root / "masks" / name).string(), m);
    }
  }
  void row(const std::string& line) { rows.push_back(line); }
  std::string write() {
    auto p = root / "manifest.jsonl";
    std::ofstream out(p);
    for (const auto& r : rows) out << r << "\n";
    return p.string();
  }
};

// Central finite difference of a scalar function with respect to one
// parameter coordinate.
template <class F>
double central_diff(apvit::Param<double>& p, int r, int c, F&& value,
                    double h) {
  const double orig = p.w(r, c);
  p.w(r, c) = orig + h;
  const double up = value();
  p.w(r, c) = orig - h;
  const double dn = value();
  p.w(r, c) = orig;
  return (up - dn) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  double denom = std::max({std::abs(got), std::abs(want), 1e-10});
  return std::abs(got - want) / denom;
}

}  // namespace testutil
