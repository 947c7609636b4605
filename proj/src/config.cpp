#include "slsr/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "slsr/common.hpp"
#include "slsr/labels.hpp"

namespace slsr::config {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown config key: " + path + it.key());
  }
}

const json* child(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) return nullptr;
  if (!it->is_object())
    throw ConfigError("config field " + path + key + ": expected an object");
  return &*it;
}

double get_num(const json& j, const std::string& path, const char* key, double dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number())
    throw ConfigError("config field " + path + key + ": expected a number");
  return it->get<double>();
}

int64_t get_int(const json& j, const std::string& path, const char* key, int64_t dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number_integer() && !it->is_number_unsigned())
    throw ConfigError("config field " + path + key + ": expected an integer");
  return it->get<int64_t>();
}

uint64_t get_u64(const json& j, const std::string& path, const char* key, uint64_t dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<int64_t>() >= 0))
    throw ConfigError("config field " + path + key + ": expected a nonnegative integer");
  return it->get<uint64_t>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_boolean())
    throw ConfigError("config field " + path + key + ": expected a boolean");
  return it->get<bool>();
}

std::string get_str(const json& j, const std::string& path, const char* key,
                    const std::string& dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_string())
    throw ConfigError("config field " + path + key + ": expected a string");
  return it->get<std::string>();
}

std::vector<double> get_vec3(const json& j, const std::string& path, const char* key,
                             const std::vector<double>& dflt) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_array() || it->size() != 3)
    throw ConfigError("config field " + path + key + ": expected an array of 3 numbers");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number())
      throw ConfigError("config field " + path + key + ": expected an array of 3 numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

template <typename Enum, typename Parser>
Enum get_enum(const json& j, const std::string& path, const char* key, Enum dflt,
              Parser parse) {
  const auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_string())
    throw ConfigError("config field " + path + key + ": expected a string");
  try {
    return parse(it->get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError("config field " + path + key + ": " + e.what());
  }
}

void parse_train(const json& j, trainer::TrainConfig& c) {
  const std::string path = "train.";
  check_keys(j, path,
             {"base_lr", "inv_gamma", "inv_power", "momentum", "weight_decay", "batch_size",
              "epochs", "k", "generated_total", "generated_scheme", "generated_loss_scale",
              "real_label_smoothing"});
  c.base_lr = get_num(j, path, "base_lr", c.base_lr);
  c.inv_gamma = get_num(j, path, "inv_gamma", c.inv_gamma);
  c.inv_power = get_num(j, path, "inv_power", c.inv_power);
  c.momentum = get_num(j, path, "momentum", c.momentum);
  c.weight_decay = get_num(j, path, "weight_decay", c.weight_decay);
  c.batch_size = get_int(j, path, "batch_size", c.batch_size);
  c.epochs = get_int(j, path, "epochs", c.epochs);
  c.k = get_int(j, path, "k", c.k);
  c.generated_total = get_int(j, path, "generated_total", c.generated_total);
  c.generated_scheme =
      get_enum(j, path, "generated_scheme", c.generated_scheme, labels::scheme_from_name);
  c.generated_loss_scale = get_num(j, path, "generated_loss_scale", c.generated_loss_scale);
  c.real_label_smoothing = get_num(j, path, "real_label_smoothing", c.real_label_smoothing);
}

void parse_backbone(const json& j, backbone::BackboneConfig& c) {
  const std::string path = "backbone.";
  check_keys(j, path,
             {"architecture", "embedding_dim", "input_size", "base_channels", "feature_source",
              "noise_adapter"});
  c.architecture = get_enum(j, path, "architecture", c.architecture, backbone::arch_from_name);
  c.embedding_dim = get_int(j, path, "embedding_dim", c.embedding_dim);
  c.input_size = get_int(j, path, "input_size", c.input_size);
  c.base_channels = get_int(j, path, "base_channels", c.base_channels);
  c.feature_source =
      get_enum(j, path, "feature_source", c.feature_source, backbone::feature_source_from_name);
  c.noise_adapter = get_bool(j, path, "noise_adapter", c.noise_adapter);
}

void parse_stage1(const json& j, backbone::StageOneOptions& c) {
  const std::string path = "stage1.";
  check_keys(j, path, {"epochs", "lr", "momentum", "weight_decay", "batch_size"});
  c.epochs = get_int(j, path, "epochs", c.epochs);
  c.lr = get_num(j, path, "lr", c.lr);
  c.momentum = get_num(j, path, "momentum", c.momentum);
  c.weight_decay = get_num(j, path, "weight_decay", c.weight_decay);
  c.batch_size = get_int(j, path, "batch_size", c.batch_size);
}

void parse_gan(const json& j, gan::GanConfig& c) {
  const std::string path = "gan.";
  check_keys(j, path,
             {"latent_dim", "image_size", "base_channels", "epochs", "adam_lr", "adam_beta1",
              "batch_size", "strict_minimax"});
  c.latent_dim = get_int(j, path, "latent_dim", c.latent_dim);
  c.image_size = get_int(j, path, "image_size", c.image_size);
  c.base_channels = get_int(j, path, "base_channels", c.base_channels);
  c.epochs = get_int(j, path, "epochs", c.epochs);
  c.adam_lr = get_num(j, path, "adam_lr", c.adam_lr);
  c.adam_beta1 = get_num(j, path, "adam_beta1", c.adam_beta1);
  c.batch_size = get_int(j, path, "batch_size", c.batch_size);
  c.strict_minimax = get_bool(j, path, "strict_minimax", c.strict_minimax);
}

void parse_preprocess(const json& j, data::PreprocessConfig& c) {
  const std::string path = "preprocess.";
  check_keys(j, path,
             {"resize_size", "crop_size", "flip_prob", "erase_prob", "erase_area_lo",
              "erase_area_hi", "erase_aspect_lo", "mean", "stdev"});
  c.resize_size = get_int(j, path, "resize_size", c.resize_size);
  c.crop_size = get_int(j, path, "crop_size", c.crop_size);
  c.flip_prob = get_num(j, path, "flip_prob", c.flip_prob);
  c.erase_prob = get_num(j, path, "erase_prob", c.erase_prob);
  c.erase_area_lo = get_num(j, path, "erase_area_lo", c.erase_area_lo);
  c.erase_area_hi = get_num(j, path, "erase_area_hi", c.erase_area_hi);
  c.erase_aspect_lo = get_num(j, path, "erase_aspect_lo", c.erase_aspect_lo);
  c.mean = get_vec3(j, path, "mean", c.mean);
  c.stdev = get_vec3(j, path, "stdev", c.stdev);
}

void parse_synth(const json& j, data::SynthConfig& c) {
  const std::string path = "synth.";
  check_keys(j, path,
             {"n_identities", "n_families", "images_per_id", "queries_per_id", "gallery_per_id",
              "image_size", "n_cameras"});
  c.n_identities = get_int(j, path, "n_identities", c.n_identities);
  c.n_families = get_int(j, path, "n_families", c.n_families);
  c.images_per_id = get_int(j, path, "images_per_id", c.images_per_id);
  c.queries_per_id = get_int(j, path, "queries_per_id", c.queries_per_id);
  c.gallery_per_id = get_int(j, path, "gallery_per_id", c.gallery_per_id);
  c.image_size = get_int(j, path, "image_size", c.image_size);
  c.n_cameras = get_int(j, path, "n_cameras", c.n_cameras);
}

void parse_eval(const json& j, EvalConfig& c) {
  const std::string path = "eval.";
  check_keys(j, path, {"protocol", "rerank", "rerank_k1", "rerank_k2", "rerank_lambda"});
  c.protocol = get_enum(j, path, "protocol", c.protocol, eval::protocol_from_name);
  c.rerank = get_bool(j, path, "rerank", c.rerank);
  c.rerank_k1 = get_int(j, path, "rerank_k1", c.rerank_k1);
  c.rerank_k2 = get_int(j, path, "rerank_k2", c.rerank_k2);
  c.rerank_lambda = get_num(j, path, "rerank_lambda", c.rerank_lambda);
}

void parse_paths(const json& j, PathsConfig& c) {
  const std::string path = "paths.";
  check_keys(j, path, {"dataset_dir", "output_dir"});
  c.dataset_dir = get_str(j, path, "dataset_dir", c.dataset_dir);
  c.output_dir = get_str(j, path, "output_dir", c.output_dir);
}

}  // namespace

PipelineConfig from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(j, "",
             {"seed", "workers", "uniform_generation", "train", "backbone", "stage1", "gan",
              "preprocess", "synth", "eval", "paths"});

  PipelineConfig cfg;
  cfg.seed = get_u64(j, "", "seed", cfg.seed);
  cfg.workers = get_int(j, "", "workers", cfg.workers);
  cfg.uniform_generation = get_bool(j, "", "uniform_generation", cfg.uniform_generation);
  if (const json* s = child(j, "", "train")) parse_train(*s, cfg.train);
  if (const json* s = child(j, "", "backbone")) parse_backbone(*s, cfg.backbone);
  if (const json* s = child(j, "", "stage1")) parse_stage1(*s, cfg.stage1);
  if (const json* s = child(j, "", "gan")) parse_gan(*s, cfg.gan);
  if (const json* s = child(j, "", "preprocess")) parse_preprocess(*s, cfg.preprocess);
  if (const json* s = child(j, "", "synth")) parse_synth(*s, cfg.synth);
  if (const json* s = child(j, "", "eval")) parse_eval(*s, cfg.eval);
  if (const json* s = child(j, "", "paths")) parse_paths(*s, cfg.paths);
  return cfg;
}

PipelineConfig load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("config file not readable: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string to_json(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["uniform_generation"] = cfg.uniform_generation;
  j["train"] = {{"base_lr", cfg.train.base_lr},
                {"inv_gamma", cfg.train.inv_gamma},
                {"inv_power", cfg.train.inv_power},
                {"momentum", cfg.train.momentum},
                {"weight_decay", cfg.train.weight_decay},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"k", cfg.train.k},
                {"generated_total", cfg.train.generated_total},
                {"generated_scheme", labels::scheme_name(cfg.train.generated_scheme)},
                {"generated_loss_scale", cfg.train.generated_loss_scale},
                {"real_label_smoothing", cfg.train.real_label_smoothing}};
  j["backbone"] = {{"architecture", backbone::arch_name(cfg.backbone.architecture)},
                   {"embedding_dim", cfg.backbone.embedding_dim},
                   {"input_size", cfg.backbone.input_size},
                   {"base_channels", cfg.backbone.base_channels},
                   {"feature_source", backbone::feature_source_name(cfg.backbone.feature_source)},
                   {"noise_adapter", cfg.backbone.noise_adapter}};
  j["stage1"] = {{"epochs", cfg.stage1.epochs},
                 {"lr", cfg.stage1.lr},
                 {"momentum", cfg.stage1.momentum},
                 {"weight_decay", cfg.stage1.weight_decay},
                 {"batch_size", cfg.stage1.batch_size}};
  j["gan"] = {{"latent_dim", cfg.gan.latent_dim},
              {"image_size", cfg.gan.image_size},
              {"base_channels", cfg.gan.base_channels},
              {"epochs", cfg.gan.epochs},
              {"adam_lr", cfg.gan.adam_lr},
              {"adam_beta1", cfg.gan.adam_beta1},
              {"batch_size", cfg.gan.batch_size},
              {"strict_minimax", cfg.gan.strict_minimax}};
  j["preprocess"] = {{"resize_size", cfg.preprocess.resize_size},
                     {"crop_size", cfg.preprocess.crop_size},
                     {"flip_prob", cfg.preprocess.flip_prob},
                     {"erase_prob", cfg.preprocess.erase_prob},
                     {"erase_area_lo", cfg.preprocess.erase_area_lo},
                     {"erase_area_hi", cfg.preprocess.erase_area_hi},
                     {"erase_aspect_lo", cfg.preprocess.erase_aspect_lo},
                     {"mean", cfg.preprocess.mean},
                     {"stdev", cfg.preprocess.stdev}};
  j["synth"] = {{"n_identities", cfg.synth.n_identities},
                {"n_families", cfg.synth.n_families},
                {"images_per_id", cfg.synth.images_per_id},
                {"queries_per_id", cfg.synth.queries_per_id},
                {"gallery_per_id", cfg.synth.gallery_per_id},
                {"image_size", cfg.synth.image_size},
                {"n_cameras", cfg.synth.n_cameras}};
  j["eval"] = {{"protocol", eval::protocol_name(cfg.eval.protocol)},
               {"rerank", cfg.eval.rerank},
               {"rerank_k1", cfg.eval.rerank_k1},
               {"rerank_k2", cfg.eval.rerank_k2},
               {"rerank_lambda", cfg.eval.rerank_lambda}};
  j["paths"] = {{"dataset_dir", cfg.paths.dataset_dir}, {"output_dir", cfg.paths.output_dir}};
  return j.dump(2);
}

std::string config_hash(const PipelineConfig& cfg) {
  PipelineConfig canon = cfg;
  canon.workers = 1;  // execution width never affects results
  const std::string text = to_json(canon);
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate(const PipelineConfig& cfg) {
  trainer::validate(cfg.train);
  if (cfg.workers < 1) throw ConfigError("config field workers: must be at least 1");
  if (cfg.paths.output_dir.empty())
    throw ConfigError("config field paths.output_dir: must not be empty");
  if (cfg.preprocess.crop_size < 1 || cfg.preprocess.resize_size < cfg.preprocess.crop_size)
    throw ConfigError("config field preprocess: resize_size must be >= crop_size >= 1");
  if (cfg.preprocess.flip_prob < 0.0 || cfg.preprocess.flip_prob > 1.0)
    throw ConfigError("config field preprocess.flip_prob: must lie in [0,1]");
  if (cfg.preprocess.erase_prob < 0.0 || cfg.preprocess.erase_prob > 1.0)
    throw ConfigError("config field preprocess.erase_prob: must lie in [0,1]");
  if (cfg.synth.n_identities < 1 || cfg.synth.images_per_id < 1 || cfg.synth.n_families < 1 ||
      cfg.synth.n_cameras < 2)
    throw ConfigError("config field synth: needs >=1 identity/image/family and >=2 cameras");
  if (cfg.eval.rerank) {
    if (cfg.eval.rerank_k2 < 1 || cfg.eval.rerank_k1 <= cfg.eval.rerank_k2)
      throw ConfigError("config field eval: rerank needs k1 > k2 >= 1");
    if (cfg.eval.rerank_lambda < 0.0 || cfg.eval.rerank_lambda > 1.0)
      throw ConfigError("config field eval.rerank_lambda: must lie in [0,1]");
  }
}

PipelineConfig desk_preset() {
  PipelineConfig cfg;
  cfg.seed = 7;

  cfg.synth.n_identities = 30;
  cfg.synth.n_families = 3;
  cfg.synth.images_per_id = 10;
  cfg.synth.queries_per_id = 2;
  cfg.synth.gallery_per_id = 2;
  cfg.synth.image_size = 32;
  cfg.synth.n_cameras = 4;

  cfg.backbone.architecture = backbone::Arch::small_convnet;
  cfg.backbone.embedding_dim = 64;
  cfg.backbone.input_size = 32;
  cfg.backbone.base_channels = 16;
  cfg.backbone.feature_source = backbone::FeatureSource::pooled;

  cfg.stage1.epochs = 15;
  cfg.stage1.lr = 0.01;
  cfg.stage1.batch_size = 32;

  cfg.gan.latent_dim = 32;
  cfg.gan.image_size = 32;
  cfg.gan.base_channels = 16;
  cfg.gan.epochs = 12;
  cfg.gan.batch_size = 32;

  cfg.preprocess.resize_size = 36;
  cfg.preprocess.crop_size = 32;
  cfg.preprocess.flip_prob = 0.5;
  cfg.preprocess.erase_prob = 0.0;

  cfg.train.epochs = 20;
  cfg.train.batch_size = 32;
  cfg.train.k = 3;
  cfg.train.generated_total = 300;  // one generated image per real one

  cfg.paths.output_dir = "out/desk";
  return cfg;
}

PipelineConfig market_preset() {
  PipelineConfig cfg;
  cfg.seed = 7;

  cfg.backbone.architecture = backbone::Arch::resnet_style;
  cfg.backbone.embedding_dim = 512;
  cfg.backbone.input_size = 224;
  cfg.backbone.base_channels = 32;
  cfg.backbone.feature_source = backbone::FeatureSource::pooled;

  cfg.stage1.epochs = 40;
  cfg.stage1.lr = 0.001;
  cfg.stage1.batch_size = 32;

  cfg.gan.latent_dim = 100;
  cfg.gan.image_size = 64;
  cfg.gan.base_channels = 64;
  cfg.gan.epochs = 30;
  cfg.gan.batch_size = 32;

  cfg.preprocess.resize_size = 256;
  cfg.preprocess.crop_size = 224;
  cfg.preprocess.flip_prob = 0.5;
  cfg.preprocess.erase_prob = 0.5;

  cfg.train.epochs = 130;
  cfg.train.batch_size = 32;
  cfg.train.k = 3;
  cfg.train.generated_total = 12000;

  cfg.paths.dataset_dir = "data/market1501";
  cfg.paths.output_dir = "out/market";
  return cfg;
}

}  // namespace slsr::config
