#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsr/data.hpp"
#include "slsr/nn.hpp"

namespace slsr::gan {

struct GanConfig {
  int64_t latent_dim = 100;
  int64_t image_size = 32;     // multiple of 16 (four stride-2 stages); 128 at full scale
  int64_t base_channels = 64;  // generator stem width, halved per upsampling stage
  int64_t epochs = 30;
  double adam_lr = 2e-4;
  double adam_beta1 = 0.5;
  int64_t batch_size = 32;
  bool strict_minimax = false;  // literal minimax generator loss (property-test mode)
  uint64_t seed = 0;
};

struct GanPair {
  GanConfig config;
  nn::Network generator;      // (N, latent_dim) -> images (N, 3, S, S) in [-1,1]
  nn::Network discriminator;  // images -> realness scores (N, 1) in (0,1)
  int64_t cluster_id = -1;
  int64_t steps_trained = 0;

  std::vector<nn::Param*> checkpoint_segments();
};

// Per-iteration adversarial loss streams.
struct GanTrainLog {
  std::vector<double> d_real_loss;  // -mean log D(x)
  std::vector<double> d_fake_loss;  // -mean log(1 - D(G(z)))
  std::vector<double> g_loss;       // generator objective (mode-dependent)
};

GanPair build_gan(const GanConfig& cfg, int64_t cluster_id);

// Alternating discriminator/generator updates on one cluster's images.
// Images must be (S, S, 3) with pixels already scaled to [-1,1]; the cluster
// id is read from the records (all must agree). Deterministic given cfg.seed.
GanPair train_gan(const std::vector<data::ImageRecord>& cluster_images, const GanConfig& cfg,
                  GanTrainLog* log = nullptr);

// Draws n images from the generator with batch statistics frozen. Records are
// tagged split=generated, camera 0, cluster id set; pixels (S, S, 3) in [-1,1].
std::vector<data::ImageRecord> sample(GanPair& pair, int64_t n, uint64_t seed);

// Stand-in sampler for tests and fast runs: real cluster images perturbed by
// bounded uniform noise and clipped to [-1,1]. noise_scale 0 copies exactly.
std::vector<data::ImageRecord> pseudo_generator_sample(
    const std::vector<data::ImageRecord>& cluster_images, int64_t n, double noise_scale,
    uint64_t seed);

void save_gan(const std::string& path, GanPair& pair);
GanPair load_gan(const std::string& path);

}  // namespace slsr::gan
