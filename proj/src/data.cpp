#include "slsr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "slsr/common.hpp"

namespace fs = std::filesystem;

namespace slsr::data {

void DatasetBundle::rebuild_class_index() {
  std::set<int64_t> ids;
  for (const auto& r : train) ids.insert(r.identity);
  class_of_identity.clear();
  int64_t next = 0;
  for (int64_t id : ids) class_of_identity[id] = next++;
  n_classes = next;
}

bool parse_reid_name(const std::string& stem, int64_t& identity, int64_t& camera,
                     int64_t& sequence) {
  static const std::regex re(R"(^(-?\d+)_c(\d+)s(\d+)_)");
  std::smatch m;
  if (!std::regex_search(stem, m, re)) return false;
  identity = std::stoll(m[1]);
  camera = std::stoll(m[2]);
  sequence = std::stoll(m[3]);
  return true;
}

namespace {

std::vector<ImageRecord> scan_split(const fs::path& dir, Split split, bool keep_junk) {
  std::vector<ImageRecord> out;
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    ImageRecord rec;
    rec.image_id = p.stem().string();
    if (!parse_reid_name(rec.image_id, rec.identity, rec.camera, rec.sequence)) continue;
    if (rec.identity <= 0) {
      if (split == Split::train) continue;             // never train on junk
      if (split == Split::gallery && !keep_junk) continue;
      if (split == Split::query) continue;             // junk is never queried
    }
    rec.split = split;
    rec.path = p.string();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

DatasetBundle load_reid_dir(const std::string& root, bool keep_junk) {
  const fs::path base(root);
  if (!fs::exists(base)) throw MissingInputError("dataset directory not found: " + root);
  DatasetBundle b;
  b.train = scan_split(base / "bounding_box_train", Split::train, keep_junk);
  b.query = scan_split(base / "query", Split::query, keep_junk);
  b.gallery = scan_split(base / "bounding_box_test", Split::gallery, keep_junk);
  if (b.train.empty())
    throw DataError("no usable training images under " + root);
  b.rebuild_class_index();
  return b;
}

void save_png(const std::string& path, const Tensor& hwc) {
  if (hwc.shape.size() != 3 || hwc.shape[2] != 3)
    throw ConfigError("save_png: expected (H, W, 3) tensor");
  const int h = static_cast<int>(hwc.shape[0]);
  const int w = static_cast<int>(hwc.shape[1]);
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = img.ptr<uint8_t>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(hwc.at3(y, x, c), 0.0, 1.0);
        row[x * 3 + (2 - c)] = static_cast<uint8_t>(std::lround(v * 255.0));  // RGB -> BGR
      }
    }
  }
  if (!cv::imwrite(path, img)) throw DataError("failed to write image: " + path);
}

Tensor load_png(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw MissingInputError("failed to read image: " + path);
  Tensor t;
  t.shape = {img.rows, img.cols, 3};
  t.data.resize(t.numel());
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<uint8_t>(y);
    for (int x = 0; x < img.cols; ++x)
      for (int c = 0; c < 3; ++c)
        t.at3(y, x, c) = row[x * 3 + (2 - c)] / 255.0;  // BGR -> RGB
  }
  return t;
}

void load_pixels(ImageRecord& rec) {
  if (!rec.pixels.data.empty()) return;
  if (rec.path.empty()) throw MissingInputError("record has no pixels and no path: " + rec.image_id);
  rec.pixels = load_png(rec.path);
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

struct IdentityStyle {
  Rgb shirt, pants, stripe, badge, skin;
  double stripe_pos;   // fraction of torso height
  double badge_x;      // fraction of torso width
  double build;        // body width multiplier
};

IdentityStyle make_style(uint64_t seed, int64_t identity, int64_t family, int64_t n_families) {
  Rng rng(derive_seed(seed, "synth_id", static_cast<uint64_t>(identity)));
  const double fam_hue = static_cast<double>(family) / static_cast<double>(n_families);
  IdentityStyle st;
  st.shirt = hsv_to_rgb(fam_hue + rng.uniform(-0.06, 0.06), rng.uniform(0.55, 0.95),
                        rng.uniform(0.45, 0.9));
  st.pants = hsv_to_rgb(fam_hue + rng.uniform(0.04, 0.14), rng.uniform(0.3, 0.8),
                        rng.uniform(0.2, 0.6));
  st.stripe = hsv_to_rgb(fam_hue + rng.uniform(-0.18, 0.18), rng.uniform(0.4, 1.0),
                         rng.uniform(0.5, 1.0));
  st.badge = hsv_to_rgb(rng.uniform(0.0, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0));
  const double skin_v = rng.uniform(0.55, 0.95);
  st.skin = {0.92 * skin_v, 0.78 * skin_v, 0.62 * skin_v};
  st.stripe_pos = rng.uniform(0.15, 0.8);
  st.badge_x = rng.uniform(0.1, 0.75);
  st.build = rng.uniform(0.85, 1.1);
  return st;
}

struct CameraStyle {
  double brightness, contrast;
  double gain[3];
};

CameraStyle make_camera(uint64_t seed, int64_t camera) {
  Rng rng(derive_seed(seed, "synth_cam", static_cast<uint64_t>(camera)));
  CameraStyle cs;
  cs.brightness = rng.uniform(-0.09, 0.09);
  cs.contrast = rng.uniform(0.82, 1.18);
  for (int c = 0; c < 3; ++c) cs.gain[c] = rng.uniform(0.88, 1.12);
  return cs;
}

void fill_rect(Tensor& img, int64_t y0, int64_t y1, int64_t x0, int64_t x1, const Rgb& col) {
  const int64_t h = img.shape[0], w = img.shape[1];
  y0 = std::clamp<int64_t>(y0, 0, h);
  y1 = std::clamp<int64_t>(y1, 0, h);
  x0 = std::clamp<int64_t>(x0, 0, w);
  x1 = std::clamp<int64_t>(x1, 0, w);
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) {
      img.at3(y, x, 0) = col.r;
      img.at3(y, x, 1) = col.g;
      img.at3(y, x, 2) = col.b;
    }
}

Tensor render_instance(const SynthConfig& cfg, const IdentityStyle& st, const CameraStyle& cam,
                       Rng& rng) {
  const int64_t s = cfg.image_size;
  Tensor img;
  img.shape = {s, s, 3};
  img.data.assign(img.numel(), 0.0);

  const double bgv = 0.78 + rng.uniform(-0.05, 0.05);
  fill_rect(img, 0, s, 0, s, {bgv, bgv, bgv});

  const int64_t dx = rng.range(-s / 12, s / 12);
  const double w_body = st.build * rng.uniform(0.95, 1.05);
  const int64_t cx = s / 2 + dx;
  auto X = [&](double frac_half_width) {
    return cx + static_cast<int64_t>(std::lround(frac_half_width * w_body * s));
  };

  const int64_t head_t = s * 6 / 100 + rng.range(-1, 1);
  const int64_t head_b = s * 20 / 100;
  const int64_t torso_t = s * 22 / 100;
  const int64_t torso_b = s * 55 / 100 + rng.range(-1, 1);
  const int64_t legs_b = s * 92 / 100;

  fill_rect(img, head_t, head_b, X(-0.15), X(0.15), st.skin);
  fill_rect(img, torso_t, torso_b, X(-0.28), X(0.28), st.shirt);
  const int64_t stripe_y = torso_t + static_cast<int64_t>(st.stripe_pos * (torso_b - torso_t));
  fill_rect(img, stripe_y, stripe_y + std::max<int64_t>(1, s / 16), X(-0.28), X(0.28), st.stripe);
  const int64_t bx = X(-0.28) + static_cast<int64_t>(st.badge_x * (X(0.28) - X(-0.28)));
  const int64_t bs = std::max<int64_t>(2, s / 10);
  fill_rect(img, torso_t + s / 20, torso_t + s / 20 + bs, bx, bx + bs, st.badge);
  fill_rect(img, torso_b, legs_b, X(-0.2), X(0.2), st.pants);

  const double jitter = rng.uniform(-0.05, 0.05);
  for (auto& v : img.data) {
    v = (v - 0.5) * cam.contrast + 0.5 + cam.brightness + jitter;
  }
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        double v = img.at3(y, x, c) * cam.gain[c] + 0.03 * rng.normal();
        img.at3(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
  return img;
}

std::string make_stem(int64_t identity, int64_t camera, int64_t sequence, int64_t frame,
                      int64_t counter) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%04lld_c%llds%lld_%06lld_%02lld",
                static_cast<long long>(identity), static_cast<long long>(camera),
                static_cast<long long>(sequence), static_cast<long long>(frame),
                static_cast<long long>(counter));
  return buf;
}

}  // namespace

DatasetBundle make_synthetic_corpus(const SynthConfig& cfg) {
  if (cfg.n_identities <= 0 || cfg.images_per_id <= 0 || cfg.image_size < 16)
    throw ConfigError("synthetic corpus: invalid size parameters");
  if (cfg.n_cameras < 2) throw ConfigError("synthetic corpus: need at least two cameras");

  DatasetBundle b;
  std::vector<CameraStyle> cams;
  for (int64_t c = 1; c <= cfg.n_cameras; ++c) cams.push_back(make_camera(cfg.seed, c));

  int64_t frame = 0;
  for (int64_t id = 1; id <= cfg.n_identities; ++id) {
    const int64_t family = (id - 1) * cfg.n_families / cfg.n_identities;
    const IdentityStyle st = make_style(cfg.seed, id, family, cfg.n_families);

    auto emit = [&](Split split, int64_t camera, int64_t counter) {
      Rng rng(derive_seed(cfg.seed, "synth_img", static_cast<uint64_t>(frame)));
      ImageRecord rec;
      rec.identity = id;
      rec.camera = camera;
      rec.sequence = 1;
      rec.split = split;
      rec.pixels = render_instance(cfg, st, cams[static_cast<size_t>(camera - 1)], rng);
      rec.image_id = make_stem(id, camera, 1, ++frame, counter);
      switch (split) {
        case Split::train: b.train.push_back(std::move(rec)); break;
        case Split::query: b.query.push_back(std::move(rec)); break;
        case Split::gallery: b.gallery.push_back(std::move(rec)); break;
        case Split::generated: break;  // synthesis never emits generated records
      }
    };

    for (int64_t i = 0; i < cfg.images_per_id; ++i)
      emit(Split::train, 1 + (i % cfg.n_cameras), i);
    for (int64_t i = 0; i < cfg.queries_per_id; ++i)
      emit(Split::query, 1 + (i % cfg.n_cameras), i);
    for (int64_t i = 0; i < cfg.gallery_per_id; ++i)
      emit(Split::gallery, 1 + (i % cfg.n_cameras), i);
  }
  b.rebuild_class_index();
  return b;
}

void save_bundle_tree(DatasetBundle& bundle, const std::string& root) {
  const fs::path base(root);
  const std::map<Split, fs::path> dirs = {
      {Split::train, base / "bounding_box_train"},
      {Split::query, base / "query"},
      {Split::gallery, base / "bounding_box_test"},
  };
  for (const auto& [_, d] : dirs) fs::create_directories(d);
  auto write_split = [&](std::vector<ImageRecord>& recs, Split split) {
    for (auto& rec : recs) {
      load_pixels(rec);
      const fs::path p = dirs.at(split) / (rec.image_id + ".png");
      save_png(p.string(), rec.pixels);
      rec.path = p.string();
    }
  };
  write_split(bundle.train, Split::train);
  write_split(bundle.query, Split::query);
  write_split(bundle.gallery, Split::gallery);
}

namespace {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
    case Split::generated: return "generated";
  }
  return "train";
}

nlohmann::json record_to_json(const ImageRecord& r) {
  return {{"image_id", r.image_id}, {"identity", r.identity}, {"camera", r.camera},
          {"sequence", r.sequence}, {"cluster", r.cluster},
          {"split", split_name(r.split)}, {"path", r.path}};
}

ImageRecord record_from_json(const nlohmann::json& j) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.identity = j.at("identity").get<int64_t>();
  r.camera = j.at("camera").get<int64_t>();
  r.sequence = j.at("sequence").get<int64_t>();
  r.cluster = j.value("cluster", int64_t{-1});
  r.path = j.value("path", std::string());
  const std::string s = j.at("split").get<std::string>();
  if (s == "train") r.split = Split::train;
  else if (s == "query") r.split = Split::query;
  else if (s == "gallery") r.split = Split::gallery;
  else if (s == "generated") r.split = Split::generated;
  else throw DataError("bundle JSON: unknown split " + s);
  return r;
}

}  // namespace

std::string bundle_to_json(const DatasetBundle& bundle) {
  nlohmann::json j;
  j["n_classes"] = bundle.n_classes;
  for (const char* key : {"train", "query", "gallery"}) j[key] = nlohmann::json::array();
  for (const auto& r : bundle.train) j["train"].push_back(record_to_json(r));
  for (const auto& r : bundle.query) j["query"].push_back(record_to_json(r));
  for (const auto& r : bundle.gallery) j["gallery"].push_back(record_to_json(r));
  return j.dump(2);
}

DatasetBundle bundle_from_json(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bundle JSON parse failure: ") + e.what());
  }
  DatasetBundle b;
  for (const auto& r : j.at("train")) b.train.push_back(record_from_json(r));
  for (const auto& r : j.at("query")) b.query.push_back(record_from_json(r));
  for (const auto& r : j.at("gallery")) b.gallery.push_back(record_from_json(r));
  b.rebuild_class_index();
  if (j.contains("n_classes") && j["n_classes"].get<int64_t>() != b.n_classes)
    throw DataError("bundle JSON: stored class count disagrees with records");
  return b;
}

Tensor resize_bilinear(const Tensor& hwc, int64_t out_h, int64_t out_w) {
  if (hwc.shape.size() != 3) throw ConfigError("resize: expected (H, W, C) tensor");
  const int64_t h = hwc.shape[0], w = hwc.shape[1], ch = hwc.shape[2];
  Tensor out;
  out.shape = {out_h, out_w, ch};
  out.data.resize(out.numel());
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (int64_t c = 0; c < ch; ++c) {
        const double top = hwc.at3(y0, x0, c) * (1 - wx) + hwc.at3(y0, x1, c) * wx;
        const double bot = hwc.at3(y1, x0, c) * (1 - wx) + hwc.at3(y1, x1, c) * wx;
        out.at3(y, x, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

namespace {

void check_norm(const PreprocessConfig& cfg) {
  if (cfg.mean.size() != 3 || cfg.stdev.size() != 3)
    throw ConfigError("preprocess: mean/stdev must have 3 channels");
  for (double s : cfg.stdev)
    if (s <= 0.0) throw ConfigError("preprocess: stdev must be positive");
  if (cfg.crop_size > cfg.resize_size)
    throw ConfigError("preprocess: crop larger than resize target");
}

Tensor crop_normalize(const Tensor& hwc, const PreprocessConfig& cfg, int64_t top, int64_t left,
                      bool flip) {
  const int64_t cs = cfg.crop_size;
  Tensor out;
  out.shape = {3, cs, cs};
  out.data.resize(out.numel());
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < cs; ++y)
      for (int64_t x = 0; x < cs; ++x) {
        const int64_t sx = flip ? (cs - 1 - x) : x;
        const double v = hwc.at3(top + y, left + sx, c);
        out.data[static_cast<size_t>((c * cs + y) * cs + x)] = (v - cfg.mean[static_cast<size_t>(c)]) / cfg.stdev[static_cast<size_t>(c)];
      }
  return out;
}

}  // namespace

Tensor preprocess_train(const Tensor& hwc, const PreprocessConfig& cfg, Rng& rng) {
  check_norm(cfg);
  const Tensor resized = resize_bilinear(hwc, cfg.resize_size, cfg.resize_size);
  const int64_t slack = cfg.resize_size - cfg.crop_size;
  // RNG draw order is fixed: crop top, crop left, flip, erase gate, erase
  // shape, erase fill. Keeping the order stable makes batches reproducible
  // regardless of which records sit beside each other.
  const int64_t top = static_cast<int64_t>(rng.index(static_cast<uint64_t>(slack + 1)));
  const int64_t left = static_cast<int64_t>(rng.index(static_cast<uint64_t>(slack + 1)));
  const bool flip = rng.uniform() < cfg.flip_prob;
  Tensor out = crop_normalize(resized, cfg, top, left, flip);

  if (cfg.erase_prob > 0.0 && rng.uniform() < cfg.erase_prob) {
    const int64_t cs = cfg.crop_size;
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double area = rng.uniform(cfg.erase_area_lo, cfg.erase_area_hi) *
                          static_cast<double>(cs * cs);
      const double aspect = rng.uniform(cfg.erase_aspect_lo, 1.0 / cfg.erase_aspect_lo);
      const int64_t eh = static_cast<int64_t>(std::lround(std::sqrt(area * aspect)));
      const int64_t ew = static_cast<int64_t>(std::lround(std::sqrt(area / aspect)));
      if (eh <= 0 || ew <= 0 || eh >= cs || ew >= cs) continue;
      const int64_t ey = static_cast<int64_t>(rng.index(static_cast<uint64_t>(cs - eh + 1)));
      const int64_t ex = static_cast<int64_t>(rng.index(static_cast<uint64_t>(cs - ew + 1)));
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = ey; y < ey + eh; ++y)
          for (int64_t x = ex; x < ex + ew; ++x)
            out.data[static_cast<size_t>((c * cs + y) * cs + x)] =
                (rng.uniform() - cfg.mean[static_cast<size_t>(c)]) / cfg.stdev[static_cast<size_t>(c)];
      break;
    }
  }
  return out;
}

Tensor preprocess_eval(const Tensor& hwc, const PreprocessConfig& cfg) {
  check_norm(cfg);
  const Tensor resized = resize_bilinear(hwc, cfg.resize_size, cfg.resize_size);
  const int64_t off = (cfg.resize_size - cfg.crop_size) / 2;
  return crop_normalize(resized, cfg, off, off, false);
}

}  // namespace slsr::data
