#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsr/data.hpp"
#include "slsr/nn.hpp"
#include "slsr/rng.hpp"
#include "slsr/tensor.hpp"

namespace slsr::backbone {

enum class Arch { small_convnet, resnet_style };
enum class FeatureSource { pooled, conv_map };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);
const char* feature_source_name(FeatureSource s);
FeatureSource feature_source_from_name(const std::string& name);

struct BackboneConfig {
  Arch architecture = Arch::small_convnet;
  int64_t embedding_dim = 512;  // bottleneck width before the classifier
  int64_t n_classes = 0;
  bool extra_class = false;     // one additional output column
  bool noise_adapter = false;   // affine map on log-probabilities
  int64_t input_size = 224;
  int64_t base_channels = 32;   // width of the first conv stage
  FeatureSource feature_source = FeatureSource::pooled;

  int64_t output_dim() const { return n_classes + (extra_class ? 1 : 0); }
};

// The classifier is kept in three pieces so feature extraction can tap the
// trunk output (conv map) or the pooled vector without re-running anything.
struct ModelState {
  BackboneConfig config;
  nn::Network trunk;    // conv stages, output (N, C, H', W')
  nn::Network pool;     // global average pooling, output (N, C)
  nn::Network head;     // bottleneck + classifier, output (N, output_dim)
  nn::Network adapter;  // identity-initialised affine on log-probs
  int64_t training_step = 0;
  int64_t trunk_channels = 0;  // C at the trunk output

  std::vector<nn::Param*> trainable_params();
  std::vector<nn::Param*> checkpoint_segments();
};

ModelState build_model(const BackboneConfig& cfg, uint64_t seed);

// Raw class scores for a preprocessed batch (N, 3, S, S).
Matrix forward_logits(ModelState& m, const Tensor& batch, bool train);

// Softmax probabilities; with use_adapter the affine adapter transforms the
// log-probabilities before renormalisation (the generated-sample path).
Matrix forward_probs(ModelState& m, const Tensor& batch, bool use_adapter = false);

struct StageOneOptions {
  int64_t epochs = 40;
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int64_t batch_size = 32;
};

struct TrainCurve {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Supervised warm-up run that produces the feature extractor used for
// clustering. Deterministic for a fixed seed.
ModelState train_feature_model(const data::DatasetBundle& bundle, const BackboneConfig& cfg,
                               const data::PreprocessConfig& pp, const StageOneOptions& opt,
                               uint64_t seed, TrainCurve* curve = nullptr);

struct EmbeddingResult {
  Matrix values;                     // (N, M)
  std::vector<std::string> row_ids;  // aligned image ids
};

// Deterministic eval-mode embeddings for the given records, in input order.
EmbeddingResult extract_features(ModelState& m, const std::vector<data::ImageRecord>& records,
                                 const data::PreprocessConfig& pp);

void save_model(const std::string& path, ModelState& m);
ModelState load_model(const std::string& path);

// Stacks preprocessed (3, S, S) views into an (N, 3, S, S) batch.
Tensor stack_batch(const std::vector<Tensor>& views);

}  // namespace slsr::backbone
