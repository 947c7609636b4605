#include "slsr/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "slsr/common.hpp"
#include "slsr/labels.hpp"
#include "slsr/loss.hpp"

namespace slsr::backbone {

const char* arch_name(Arch a) {
  return a == Arch::resnet_style ? "resnet_style" : "small_convnet";
}

Arch arch_from_name(const std::string& name) {
  if (name == "small_convnet") return Arch::small_convnet;
  if (name == "resnet_style") return Arch::resnet_style;
  throw ConfigError("unknown architecture: " + name);
}

const char* feature_source_name(FeatureSource s) {
  return s == FeatureSource::conv_map ? "conv_map" : "pooled";
}

FeatureSource feature_source_from_name(const std::string& name) {
  if (name == "pooled") return FeatureSource::pooled;
  if (name == "conv_map") return FeatureSource::conv_map;
  throw ConfigError("unknown feature source: " + name);
}

std::vector<nn::Param*> ModelState::trainable_params() {
  std::vector<nn::Param*> out;
  for (nn::Network* n : {&trunk, &pool, &head, &adapter}) {
    auto p = n->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Param*> ModelState::checkpoint_segments() {
  std::vector<nn::Param*> out;
  for (nn::Network* n : {&trunk, &pool, &head, &adapter}) {
    auto p = n->all_segments();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

namespace {

void add_conv_block(nn::Network& net, const std::string& name, int64_t cin, int64_t cout,
                    Rng& rng, bool pool) {
  auto conv = std::make_unique<nn::Conv2d>(name + ".conv", cin, cout, 3, 1, 1);
  conv->init_kaiming(rng);
  net.add(std::move(conv));
  net.add(std::make_unique<nn::BatchNorm2d>(name + ".bn", cout));
  net.add(std::make_unique<nn::ReLU>(name + ".relu"));
  if (pool) net.add(std::make_unique<nn::MaxPool2d>(name + ".pool", 2, 2));
}

std::unique_ptr<nn::Residual> make_residual(const std::string& name, int64_t ch, Rng& rng) {
  std::vector<std::unique_ptr<nn::Layer>> body;
  auto c1 = std::make_unique<nn::Conv2d>(name + ".c1", ch, ch, 3, 1, 1);
  c1->init_kaiming(rng);
  body.push_back(std::move(c1));
  body.push_back(std::make_unique<nn::BatchNorm2d>(name + ".bn1", ch));
  body.push_back(std::make_unique<nn::ReLU>(name + ".r1"));
  auto c2 = std::make_unique<nn::Conv2d>(name + ".c2", ch, ch, 3, 1, 1);
  c2->init_kaiming(rng);
  body.push_back(std::move(c2));
  body.push_back(std::make_unique<nn::BatchNorm2d>(name + ".bn2", ch));
  std::vector<std::unique_ptr<nn::Layer>> shortcut;  // identity
  return std::make_unique<nn::Residual>(name, std::move(body), std::move(shortcut));
}

}  // namespace

ModelState build_model(const BackboneConfig& cfg, uint64_t seed) {
  if (cfg.n_classes <= 0) throw ConfigError("backbone: n_classes must be positive");
  if (cfg.embedding_dim <= 0) throw ConfigError("backbone: embedding_dim must be positive");
  if (cfg.input_size < 16 || cfg.input_size % 8 != 0)
    throw ConfigError("backbone: input_size must be a multiple of 8, at least 16");

  ModelState m;
  m.config = cfg;
  Rng rng(derive_seed(seed, "backbone_init"));
  const int64_t b = cfg.base_channels;

  if (cfg.architecture == Arch::small_convnet) {
    add_conv_block(m.trunk, "b1", 3, b, rng, true);
    add_conv_block(m.trunk, "b2", b, 2 * b, rng, true);
    add_conv_block(m.trunk, "b3", 2 * b, 4 * b, rng, true);
    m.trunk_channels = 4 * b;
  } else {
    add_conv_block(m.trunk, "stem", 3, b, rng, true);
    m.trunk.add(make_residual("res1", b, rng));
    m.trunk.add(std::make_unique<nn::MaxPool2d>("down1", 2, 2));
    auto widen = std::make_unique<nn::Conv2d>("widen.conv", b, 2 * b, 1, 1, 0);
    widen->init_kaiming(rng);
    m.trunk.add(std::move(widen));
    m.trunk.add(std::make_unique<nn::BatchNorm2d>("widen.bn", 2 * b));
    m.trunk.add(std::make_unique<nn::ReLU>("widen.relu"));
    m.trunk.add(make_residual("res2", 2 * b, rng));
    m.trunk.add(std::make_unique<nn::MaxPool2d>("down2", 2, 2));
    m.trunk_channels = 2 * b;
  }

  m.pool.add(std::make_unique<nn::GlobalAvgPool>("gap"));

  auto bottleneck = std::make_unique<nn::Linear>("bottleneck", m.trunk_channels,
                                                 cfg.embedding_dim);
  bottleneck->init_kaiming(rng);
  m.head.add(std::move(bottleneck));
  m.head.add(std::make_unique<nn::ReLU>("bottleneck.relu"));
  auto classifier = std::make_unique<nn::Linear>("classifier", cfg.embedding_dim,
                                                 cfg.output_dim());
  classifier->init_xavier(rng);
  m.head.add(std::move(classifier));

  // Adapter starts as the identity so the adapted path initially reproduces
  // the plain softmax output exactly.
  auto ad = std::make_unique<nn::Linear>("adapter", cfg.output_dim(), cfg.output_dim());
  ad->weight.value.zero();
  for (int64_t i = 0; i < cfg.output_dim(); ++i)
    ad->weight.value[i * cfg.output_dim() + i] = 1.0;
  ad->bias.value.zero();
  m.adapter.add(std::move(ad));
  return m;
}

Matrix forward_logits(ModelState& m, const Tensor& batch, bool train) {
  if (batch.shape.size() != 4 || batch.shape[1] != 3 || batch.shape[2] != m.config.input_size ||
      batch.shape[3] != m.config.input_size)
    throw ConfigError("backbone: batch does not match the configured input size");
  const Tensor conv = m.trunk.forward(batch, train);
  const Tensor pooled = m.pool.forward(conv, train);
  const Tensor logits = m.head.forward(pooled, train);
  Matrix out(logits.shape[0], logits.shape[1]);
  std::copy(logits.data.begin(), logits.data.end(), out.data());
  return out;
}

Matrix forward_probs(ModelState& m, const Tensor& batch, bool use_adapter) {
  if (use_adapter && !m.config.noise_adapter)
    throw ConfigError("backbone: adapter requested but noise_adapter is off");
  const Matrix logits = forward_logits(m, batch, false);
  Matrix logp = loss::log_softmax(logits);
  if (use_adapter) {
    Tensor in({logp.rows(), logp.cols()});
    std::copy(logp.data(), logp.data() + logp.size(), in.data.begin());
    const Tensor mapped = m.adapter.forward(in, false);
    Matrix mm(logp.rows(), logp.cols());
    std::copy(mapped.data.begin(), mapped.data.end(), mm.data());
    logp = loss::log_softmax(mm);
  }
  return logp.array().exp().matrix();
}

Tensor stack_batch(const std::vector<Tensor>& views) {
  if (views.empty()) throw ConfigError("stack_batch: empty batch");
  const auto& s = views.front().shape;
  Tensor batch({static_cast<int64_t>(views.size()), s[0], s[1], s[2]});
  const int64_t stride = s[0] * s[1] * s[2];
  for (size_t i = 0; i < views.size(); ++i) {
    if (views[i].shape != s) throw ConfigError("stack_batch: inconsistent view shapes");
    std::copy(views[i].data.begin(), views[i].data.end(),
              batch.data.begin() + static_cast<int64_t>(i) * stride);
  }
  return batch;
}

ModelState train_feature_model(const data::DatasetBundle& bundle, const BackboneConfig& cfg,
                               const data::PreprocessConfig& pp, const StageOneOptions& opt,
                               uint64_t seed, TrainCurve* curve) {
  if (bundle.train.empty()) throw ConfigError("train_feature_model: no training records");
  std::vector<int64_t> images_per_class(static_cast<size_t>(bundle.n_classes), 0);
  for (const auto& r : bundle.train)
    ++images_per_class[static_cast<size_t>(bundle.class_of_identity.at(r.identity))];
  for (size_t c = 0; c < images_per_class.size(); ++c)
    if (images_per_class[c] == 0)
      throw DataError("train_feature_model: class " + std::to_string(c) + " has no images");

  ModelState m = build_model(cfg, seed);
  nn::SgdMomentum optim(opt.momentum, opt.weight_decay);
  auto params = m.trunk.params();
  auto head_params = m.head.params();
  params.insert(params.end(), head_params.begin(), head_params.end());

  const int64_t n = static_cast<int64_t>(bundle.train.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  // Records keep their own preprocessing stream keyed by (seed, epoch,
  // original index) so batch composition never changes the pixels a record
  // sees.
  for (int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, "stage1_order", static_cast<uint64_t>(epoch)));
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += opt.batch_size) {
      const int64_t stop = std::min(n, start + opt.batch_size);
      std::vector<Tensor> views;
      std::vector<labels::LabelTarget> targets;
      for (int64_t k = start; k < stop; ++k) {
        const int64_t idx = order[static_cast<size_t>(k)];
        data::ImageRecord rec = bundle.train[static_cast<size_t>(idx)];
        data::load_pixels(rec);
        Rng pp_rng(derive_seed(seed, "stage1_pp",
                               static_cast<uint64_t>(epoch) * static_cast<uint64_t>(n) +
                                   static_cast<uint64_t>(idx)));
        views.push_back(data::preprocess_train(rec.pixels, pp, pp_rng));
        targets.push_back(
            labels::one_hot(bundle.class_of_identity.at(rec.identity), cfg.output_dim()));
      }
      const Tensor batch = stack_batch(views);
      m.trunk.zero_grad();
      m.pool.zero_grad();
      m.head.zero_grad();
      const Matrix logits = forward_logits(m, batch, true);
      const loss::BatchLossResult lr = loss::combined_batch_loss(logits, targets);
      Tensor dlogits({lr.dlogits.rows(), lr.dlogits.cols()});
      std::copy(lr.dlogits.data(), lr.dlogits.data() + lr.dlogits.size(),
                dlogits.data.begin());
      const Tensor dpooled = m.head.backward(dlogits);
      const Tensor dconv = m.pool.backward(dpooled);
      m.trunk.backward(dconv);
      optim.step(params, opt.lr);
      ++m.training_step;
      loss_sum += lr.total;
      ++batches;
    }
    if (curve) curve->epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return m;
}

EmbeddingResult extract_features(ModelState& m, const std::vector<data::ImageRecord>& records,
                                 const data::PreprocessConfig& pp) {
  if (records.empty()) throw ConfigError("extract_features: no records");
  EmbeddingResult out;
  out.row_ids.reserve(records.size());

  const int64_t chunk = 32;
  for (size_t start = 0; start < records.size(); start += chunk) {
    const size_t stop = std::min(records.size(), start + chunk);
    std::vector<Tensor> views;
    for (size_t i = start; i < stop; ++i) {
      data::ImageRecord rec = records[i];
      data::load_pixels(rec);
      views.push_back(data::preprocess_eval(rec.pixels, pp));
      out.row_ids.push_back(rec.image_id);
    }
    const Tensor batch = stack_batch(views);
    const Tensor conv = m.trunk.forward(batch, false);
    Tensor feats;
    if (m.config.feature_source == FeatureSource::pooled) {
      feats = m.pool.forward(conv, false);
    } else {
      feats = conv;  // flattened below
    }
    const int64_t rows = static_cast<int64_t>(stop - start);
    const int64_t cols = feats.numel() / rows;
    if (out.values.size() == 0)
      out.values.resize(static_cast<Eigen::Index>(records.size()), cols);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        out.values(static_cast<Eigen::Index>(start) + r, c) =
            feats.data[static_cast<size_t>(r * cols + c)];
  }
  return out;
}

void save_model(const std::string& path, ModelState& m) {
  nlohmann::json j;
  j["architecture"] = arch_name(m.config.architecture);
  j["embedding_dim"] = m.config.embedding_dim;
  j["n_classes"] = m.config.n_classes;
  j["extra_class"] = m.config.extra_class;
  j["noise_adapter"] = m.config.noise_adapter;
  j["input_size"] = m.config.input_size;
  j["base_channels"] = m.config.base_channels;
  j["feature_source"] = feature_source_name(m.config.feature_source);
  j["training_step"] = m.training_step;
  nn::save_checkpoint(path, j.dump(), m.checkpoint_segments());
}

ModelState load_model(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model checkpoint config unreadable: ") + e.what());
  }
  BackboneConfig cfg;
  cfg.architecture = arch_from_name(j.at("architecture").get<std::string>());
  cfg.embedding_dim = j.at("embedding_dim").get<int64_t>();
  cfg.n_classes = j.at("n_classes").get<int64_t>();
  cfg.extra_class = j.at("extra_class").get<bool>();
  cfg.noise_adapter = j.at("noise_adapter").get<bool>();
  cfg.input_size = j.at("input_size").get<int64_t>();
  cfg.base_channels = j.at("base_channels").get<int64_t>();
  cfg.feature_source = feature_source_from_name(j.at("feature_source").get<std::string>());
  ModelState m = build_model(cfg, 0);  // weights are overwritten below
  m.training_step = j.value("training_step", int64_t{0});
  nn::assign_segments(ckpt, m.checkpoint_segments());
  return m;
}

}  // namespace slsr::backbone
