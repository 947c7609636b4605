#include "slsr/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "slsr/common.hpp"
#include "slsr/rng.hpp"

namespace slsr::gan {

namespace {

constexpr double kProbFloor = 1e-12;

void validate_config(const GanConfig& cfg) {
  if (cfg.latent_dim < 1) throw ConfigError("gan: latent_dim must be >= 1");
  if (cfg.image_size < 16 || cfg.image_size % 16 != 0)
    throw ConfigError("gan: image_size must be a positive multiple of 16");
  if (cfg.base_channels < 8 || cfg.base_channels % 8 != 0)
    throw ConfigError("gan: base_channels must be a positive multiple of 8");
  if (cfg.epochs < 0) throw ConfigError("gan: epochs must be >= 0");
  if (cfg.batch_size < 2) throw ConfigError("gan: batch_size must be >= 2");
  if (!(cfg.adam_lr > 0.0)) throw ConfigError("gan: adam_lr must be positive");
}

int64_t cluster_of(const std::vector<data::ImageRecord>& records) {
  const int64_t tag = records.front().cluster;
  for (const auto& r : records)
    if (r.cluster != tag) throw DataError("gan: images carry mixed cluster tags");
  return tag;
}

// Gathers records[order[from .. from+count)] into an (count, 3, S, S) batch.
Tensor gather_batch(const std::vector<data::ImageRecord>& records,
                    const std::vector<int64_t>& order, int64_t from, int64_t count, int64_t s) {
  Tensor batch({count, 3, s, s});
  for (int64_t i = 0; i < count; ++i) {
    const Tensor& px = records[static_cast<size_t>(order[static_cast<size_t>(from + i)])].pixels;
    for (int64_t h = 0; h < s; ++h)
      for (int64_t w = 0; w < s; ++w)
        for (int64_t c = 0; c < 3; ++c) batch.at4(i, c, h, w) = px.at3(h, w, c);
  }
  return batch;
}

Tensor sample_latent(Rng& rng, int64_t n, int64_t latent_dim) {
  Tensor z({n, latent_dim});
  for (double& v : z.data) v = rng.uniform(-1.0, 1.0);
  return z;
}

double clamp_prob(double y) { return std::clamp(y, kProbFloor, 1.0 - kProbFloor); }

// loss = -mean log y with d/dy written into dy; the "real" half of Eq. 2 and
// also the non-saturating generator objective.
double bce_accept(const Tensor& y, Tensor& dy) {
  const double n = static_cast<double>(y.data.size());
  double loss = 0.0;
  dy = Tensor(y.shape);
  for (size_t i = 0; i < y.data.size(); ++i) {
    const double p = clamp_prob(y.data[i]);
    loss -= std::log(p);
    dy.data[i] = -1.0 / (n * p);
  }
  return loss / n;
}

// loss = -mean log(1-y): the "fake" half of Eq. 2.
double bce_reject(const Tensor& y, Tensor& dy) {
  const double n = static_cast<double>(y.data.size());
  double loss = 0.0;
  dy = Tensor(y.shape);
  for (size_t i = 0; i < y.data.size(); ++i) {
    const double q = clamp_prob(1.0 - y.data[i]);
    loss -= std::log(q);
    dy.data[i] = 1.0 / (n * q);
  }
  return loss / n;
}

// loss = mean log(1-y): the literal minimax generator objective.
double minimax_gen(const Tensor& y, Tensor& dy) {
  const double n = static_cast<double>(y.data.size());
  double loss = 0.0;
  dy = Tensor(y.shape);
  for (size_t i = 0; i < y.data.size(); ++i) {
    const double q = clamp_prob(1.0 - y.data[i]);
    loss += std::log(q);
    dy.data[i] = -1.0 / (n * q);
  }
  return loss / n;
}

}  // namespace

std::vector<nn::Param*> GanPair::checkpoint_segments() {
  std::vector<nn::Param*> out = generator.all_segments();
  for (nn::Param* p : discriminator.all_segments()) out.push_back(p);
  return out;
}

GanPair build_gan(const GanConfig& cfg, int64_t cluster_id) {
  validate_config(cfg);
  const int64_t s16 = cfg.image_size / 16;
  const int64_t base = cfg.base_channels;
  Rng rng(derive_seed(cfg.seed, "gan_init", static_cast<uint64_t>(cluster_id)));

  GanPair pair;
  pair.config = cfg;
  pair.cluster_id = cluster_id;

  auto& g = pair.generator;
  {
    auto proj = std::make_unique<nn::Linear>("gen.proj", cfg.latent_dim, base * s16 * s16);
    proj->init_normal(rng, 0.02);
    g.add(std::move(proj));
    g.add(std::make_unique<nn::Reshape4d>("gen.reshape", base, s16, s16));
    g.add(std::make_unique<nn::BatchNorm2d>("gen.bn0", base));
    g.add(std::make_unique<nn::ReLU>("gen.relu0"));
    int64_t cin = base;
    for (int i = 1; i <= 3; ++i) {
      const int64_t cout = cin / 2;
      auto up = std::make_unique<nn::ConvTranspose2d>("gen.up" + std::to_string(i), cin, cout, 5,
                                                      2, 2, 1);
      up->init_normal(rng, 0.02);
      g.add(std::move(up));
      g.add(std::make_unique<nn::BatchNorm2d>("gen.bn" + std::to_string(i), cout));
      g.add(std::make_unique<nn::ReLU>("gen.relu" + std::to_string(i)));
      cin = cout;
    }
    auto out = std::make_unique<nn::ConvTranspose2d>("gen.up4", cin, 3, 5, 2, 2, 1);
    out->init_normal(rng, 0.02);
    g.add(std::move(out));
    g.add(std::make_unique<nn::BatchNorm2d>("gen.bn4", 3));
    g.add(std::make_unique<nn::Tanh>("gen.tanh"));
  }

  auto& d = pair.discriminator;
  {
    int64_t cin = 3;
    for (int i = 1; i <= 4; ++i) {
      const int64_t cout = base >> (4 - i);  // base/8, base/4, base/2, base
      auto conv =
          std::make_unique<nn::Conv2d>("disc.c" + std::to_string(i), cin, cout, 5, 2, 2);
      conv->init_normal(rng, 0.02);
      d.add(std::move(conv));
      d.add(std::make_unique<nn::BatchNorm2d>("disc.bn" + std::to_string(i), cout));
      d.add(std::make_unique<nn::LeakyReLU>("disc.lrelu" + std::to_string(i), 0.2));
      cin = cout;
    }
    d.add(std::make_unique<nn::Flatten>("disc.flatten"));
    auto fc = std::make_unique<nn::Linear>("disc.fc", base * s16 * s16, 1);
    fc->init_normal(rng, 0.02);
    d.add(std::move(fc));
    d.add(std::make_unique<nn::Sigmoid>("disc.sigmoid"));
  }
  return pair;
}

GanPair train_gan(const std::vector<data::ImageRecord>& cluster_images, const GanConfig& cfg,
                  GanTrainLog* log) {
  validate_config(cfg);
  if (cluster_images.empty()) throw DataError("gan: cluster has no images");
  const int64_t s = cfg.image_size;
  for (const auto& rec : cluster_images) {
    if (rec.pixels.shape != std::vector<int64_t>{s, s, 3})
      throw ConfigError("gan: image size mismatch for " + rec.image_id + " (expected " +
                        std::to_string(s) + "x" + std::to_string(s) + "x3)");
    for (double v : rec.pixels.data)
      if (!(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9))
        throw DataError("gan: pixels of " + rec.image_id + " are not scaled to [-1,1]");
  }

  GanPair pair = build_gan(cfg, cluster_of(cluster_images));
  if (cfg.epochs == 0) return pair;
  const int64_t n = static_cast<int64_t>(cluster_images.size());
  if (n < 2) throw DataError("gan: training needs at least two images");

  Rng rng(derive_seed(cfg.seed, "gan_train", static_cast<uint64_t>(pair.cluster_id)));
  nn::Adam adam_d(cfg.adam_lr, cfg.adam_beta1);
  nn::Adam adam_g(cfg.adam_lr, cfg.adam_beta1);
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t nb = std::min<int64_t>(cfg.batch_size, n - start);
      if (nb < 2) continue;  // batch statistics need company

      // Discriminator step: real batch up, detached fake batch down.
      pair.discriminator.zero_grad();
      Tensor real = gather_batch(cluster_images, order, start, nb, s);
      Tensor dy;
      const Tensor y_real = pair.discriminator.forward(real, true);
      const double d_real = bce_accept(y_real, dy);
      pair.discriminator.backward(dy);
      Tensor fake = pair.generator.forward(sample_latent(rng, nb, cfg.latent_dim), true);
      const Tensor y_fake = pair.discriminator.forward(fake, true);
      const double d_fake = bce_reject(y_fake, dy);
      pair.discriminator.backward(dy);
      adam_d.step(pair.discriminator.params());

      // Generator step: gradient flows through the discriminator but only
      // the generator moves; stale discriminator grads die at zero_grad.
      pair.generator.zero_grad();
      Tensor fake2 = pair.generator.forward(sample_latent(rng, nb, cfg.latent_dim), true);
      const Tensor y_gen = pair.discriminator.forward(fake2, true);
      const double g_loss =
          cfg.strict_minimax ? minimax_gen(y_gen, dy) : bce_accept(y_gen, dy);
      pair.generator.backward(pair.discriminator.backward(dy));
      adam_g.step(pair.generator.params());

      if (!std::isfinite(d_real) || !std::isfinite(d_fake) || !std::isfinite(g_loss))
        throw NumericError("gan: adversarial loss diverged at step " +
                           std::to_string(pair.steps_trained));
      if (log) {
        log->d_real_loss.push_back(d_real);
        log->d_fake_loss.push_back(d_fake);
        log->g_loss.push_back(g_loss);
      }
      ++pair.steps_trained;
    }
  }
  return pair;
}

std::vector<data::ImageRecord> sample(GanPair& pair, int64_t n, uint64_t seed) {
  if (n < 1) throw ConfigError("gan: sample count must be >= 1");
  const int64_t s = pair.config.image_size;
  Rng rng(derive_seed(seed, "gan_sample", static_cast<uint64_t>(pair.cluster_id)));
  std::vector<data::ImageRecord> out;
  out.reserve(static_cast<size_t>(n));
  const int64_t chunk = 64;
  char stem[64];
  for (int64_t done = 0; done < n; done += chunk) {
    const int64_t nb = std::min(chunk, n - done);
    Tensor images = pair.generator.forward(sample_latent(rng, nb, pair.config.latent_dim), false);
    for (int64_t i = 0; i < nb; ++i) {
      data::ImageRecord rec;
      std::snprintf(stem, sizeof(stem), "gen_c%lld_%06lld",
                    static_cast<long long>(pair.cluster_id),
                    static_cast<long long>(done + i));
      rec.image_id = stem;
      rec.identity = -1;
      rec.camera = 0;
      rec.sequence = 0;
      rec.cluster = pair.cluster_id;
      rec.split = data::Split::generated;
      rec.pixels = Tensor({s, s, 3});
      for (int64_t h = 0; h < s; ++h)
        for (int64_t w = 0; w < s; ++w)
          for (int64_t c = 0; c < 3; ++c) rec.pixels.at3(h, w, c) = images.at4(i, c, h, w);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<data::ImageRecord> pseudo_generator_sample(
    const std::vector<data::ImageRecord>& cluster_images, int64_t n, double noise_scale,
    uint64_t seed) {
  if (cluster_images.empty()) throw DataError("gan: cluster has no images to sample from");
  if (noise_scale < 0.0) throw ConfigError("gan: noise_scale must be >= 0");
  if (n < 1) throw ConfigError("gan: sample count must be >= 1");
  const int64_t cluster_id = cluster_of(cluster_images);
  Rng rng(derive_seed(seed, "pseudo_sample", static_cast<uint64_t>(cluster_id)));
  std::vector<data::ImageRecord> out;
  out.reserve(static_cast<size_t>(n));
  char stem[64];
  for (int64_t i = 0; i < n; ++i) {
    const size_t pick = rng.index(cluster_images.size());
    data::ImageRecord rec;
    std::snprintf(stem, sizeof(stem), "pgen_c%lld_%06lld", static_cast<long long>(cluster_id),
                  static_cast<long long>(i));
    rec.image_id = stem;
    rec.identity = -1;
    rec.camera = 0;
    rec.sequence = 0;
    rec.cluster = cluster_id;
    rec.split = data::Split::generated;
    rec.pixels = cluster_images[pick].pixels;
    if (noise_scale > 0.0) {
      for (double& v : rec.pixels.data)
        v = std::clamp(v + rng.uniform(-noise_scale, noise_scale), -1.0, 1.0);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void save_gan(const std::string& path, GanPair& pair) {
  nlohmann::json j;
  j["latent_dim"] = pair.config.latent_dim;
  j["image_size"] = pair.config.image_size;
  j["base_channels"] = pair.config.base_channels;
  j["epochs"] = pair.config.epochs;
  j["adam_lr"] = pair.config.adam_lr;
  j["adam_beta1"] = pair.config.adam_beta1;
  j["batch_size"] = pair.config.batch_size;
  j["strict_minimax"] = pair.config.strict_minimax;
  j["seed"] = pair.config.seed;
  j["cluster_id"] = pair.cluster_id;
  j["steps_trained"] = pair.steps_trained;
  nn::save_checkpoint(path, j.dump(), pair.checkpoint_segments());
}

GanPair load_gan(const std::string& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("gan checkpoint config unreadable: ") + e.what());
  }
  GanConfig cfg;
  cfg.latent_dim = j.at("latent_dim").get<int64_t>();
  cfg.image_size = j.at("image_size").get<int64_t>();
  cfg.base_channels = j.at("base_channels").get<int64_t>();
  cfg.epochs = j.at("epochs").get<int64_t>();
  cfg.adam_lr = j.at("adam_lr").get<double>();
  cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  cfg.batch_size = j.at("batch_size").get<int64_t>();
  cfg.strict_minimax = j.at("strict_minimax").get<bool>();
  cfg.seed = j.at("seed").get<uint64_t>();
  GanPair pair = build_gan(cfg, j.at("cluster_id").get<int64_t>());
  pair.steps_trained = j.value("steps_trained", int64_t{0});
  nn::assign_segments(ckpt, pair.checkpoint_segments());
  return pair;
}

}  // namespace slsr::gan
