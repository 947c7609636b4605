#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slsr/rng.hpp"
#include "slsr/tensor.hpp"

namespace slsr::data {

enum class Split { train, query, gallery, generated };

struct ImageRecord {
  std::string image_id;   // filename stem, unique within a bundle
  int64_t identity = 0;   // person label as parsed (junk/distractor may be <= 0)
  int64_t camera = 0;
  int64_t sequence = 1;
  int64_t cluster = -1;   // source cluster for generated records
  Split split = Split::train;
  std::string path;       // on-disk location, empty for in-memory records
  Tensor pixels;          // (H, W, 3) in [0,1]; generated records use [-1,1]
};

struct DatasetBundle {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> query;
  std::vector<ImageRecord> gallery;
  std::map<int64_t, int64_t> class_of_identity;  // train identities -> [0, n)
  int64_t n_classes = 0;

  void rebuild_class_index();
};

// Parses "<identity>_c<camera>s<sequence>_..." stems. Returns false when the
// name does not follow the convention.
bool parse_reid_name(const std::string& stem, int64_t& identity, int64_t& camera,
                     int64_t& sequence);

// Loads a directory tree with bounding_box_train/, query/ and
// bounding_box_test/ children. Identities <= 0 are distractor/junk entries:
// they are always dropped from train, and dropped from the gallery too
// unless keep_junk is set.
DatasetBundle load_reid_dir(const std::string& root, bool keep_junk = false);

void load_pixels(ImageRecord& rec);
void save_png(const std::string& path, const Tensor& hwc);
Tensor load_png(const std::string& path);

struct SynthConfig {
  int64_t n_identities = 30;
  int64_t n_families = 3;   // colour families the identities group into
  int64_t images_per_id = 10;
  int64_t queries_per_id = 2;
  int64_t gallery_per_id = 2;
  int64_t image_size = 32;
  int64_t n_cameras = 4;
  uint64_t seed = 7;
};

// Procedural person-like corpus: each identity has a family hue, its own
// clothing bands and a badge; cameras apply distinct photometric transforms
// so cross-camera retrieval is non-trivial.
DatasetBundle make_synthetic_corpus(const SynthConfig& cfg);

// Writes the bundle as a reid directory tree (PNG files named by the
// standard stem convention); record paths are filled in as files land.
void save_bundle_tree(DatasetBundle& bundle, const std::string& root);

std::string bundle_to_json(const DatasetBundle& bundle);
DatasetBundle bundle_from_json(const std::string& json);

struct PreprocessConfig {
  int64_t resize_size = 256;
  int64_t crop_size = 224;
  double flip_prob = 0.5;
  double erase_prob = 0.0;       // random-erasing occlusion, off by default
  double erase_area_lo = 0.02;
  double erase_area_hi = 0.2;
  double erase_aspect_lo = 0.3;
  std::vector<double> mean = {0.5, 0.5, 0.5};
  std::vector<double> stdev = {0.5, 0.5, 0.5};
};

Tensor resize_bilinear(const Tensor& hwc, int64_t out_h, int64_t out_w);

// Training-time view: resize, random crop, random horizontal flip, optional
// random erasing, then per-channel normalisation. Output is (3, crop, crop).
Tensor preprocess_train(const Tensor& hwc, const PreprocessConfig& cfg, Rng& rng);

// Deterministic view: resize, centre crop, normalisation.
Tensor preprocess_eval(const Tensor& hwc, const PreprocessConfig& cfg);

}  // namespace slsr::data
