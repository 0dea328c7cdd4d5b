#pragma once

#include "apvit/config.hpp"
#include "apvit/image.hpp"
#include "apvit/schema.hpp"

#include <map>
#include <string>
#include <vector>

namespace apvit {

struct SampleRecord {
  std::string id;
  std::string image_path;                    // relative to the manifest dir
  std::map<std::string, double> attr_labels; // keyed by attribute name
  double target_label = 0.0;
  std::string mask_path;                     // empty if the dataset has no masks
  std::string group_id;
};

// Channel-wise statistics of the geometry-preprocessed dataset.
struct DatasetStats {
  std::vector<double> mean, stdev;
};

// Geometry part of preprocessing: optional crop, resize to out_size, scale
// to [0,1]. Standardization is applied separately with dataset statistics.
TensorImage preprocess_geometry(const ImageU8& raw, const std::string& profile,
                                int crop_size, int out_size);

// (x - mean_c) / max(std_c, eps) in place.
void standardize(TensorImage& img, const DatasetStats& stats);

// Crop + resize + threshold at 0.5 into a {0,1} single-channel image.
TensorImage preprocess_mask(const ImageU8& raw, const std::string& profile,
                            int crop_size, int out_size);

class Dataset {
 public:
  // Parses and validates the whole manifest; throws DataError listing every
  // invalid row at once.
  static Dataset load(const std::string& manifest_path, const ModelConfig& model,
                      const DataConfig& data);

  int size() const { return static_cast<int>(records_.size()); }
  const SampleRecord& record(int i) const { return records_.at(i); }
  bool has_masks() const { return has_masks_; }
  const AttributeSchema& schema() const { return schema_; }
  const TargetScale& target_scale() const { return target_; }

  TensorImage raw_image(int i) const;  // decoded, no preprocessing
  TensorImage input(int i) const;      // full preprocessing; needs stats set
  TensorImage mask(int i) const;       // {0,1}, model resolution
  ImageU8 display_image(int i) const;  // geometry only, for overlays

  // Pass over every image; call once, then set_stats.
  DatasetStats compute_stats() const;
  void set_stats(const DatasetStats& s) { stats_ = s; stats_set_ = true; }
  const DatasetStats& stats() const;
  bool stats_set() const { return stats_set_; }

  int index_by_id(const std::string& id) const;  // -1 when absent
  std::string resolved_image_path(int i) const;
  std::string resolved_mask_path(int i) const;

  // Label accessors resolved against the schema.
  double attr_label(int i, int a) const;
  int attr_value_index(int i, int a) const;
  double target_label(int i) const { return records_.at(i).target_label; }
  int target_value_index(int i) const {
    return target_.value_index(records_.at(i).target_label);
  }

  const std::string& root() const { return root_; }

 private:
  AttributeSchema schema_;
  TargetScale target_;
  std::string root_;
  std::string profile_;
  int crop_size_ = 0;
  int out_size_ = 0;
  int channels_ = 1;
  bool has_masks_ = false;
  std::vector<SampleRecord> records_;
  DatasetStats stats_;
  bool stats_set_ = false;
};

struct FoldSplit {
  std::vector<int> train, val, test;
};

// Splits groups into k folds, approximately stratified by target class;
// within each fold's training portion, whole groups amounting to about
// val_fraction of the training samples are held out for validation.
std::vector<FoldSplit> group_stratified_folds(const Dataset& ds, int k,
                                              double val_fraction, int seed);

// Writes images/, masks/, and manifest.jsonl under out_dir. Deterministic
// per seed.
void generate_synthetic(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace apvit
