#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slsr/backbone.hpp"
#include "slsr/data.hpp"
#include "slsr/labels.hpp"
#include "slsr/loss.hpp"
#include "slsr/nn.hpp"
#include "slsr/tensor.hpp"

namespace slsr::trainer {

struct TrainConfig {
  double base_lr = 0.01;
  double inv_gamma = 0.1;    // inverse-policy curvature
  double inv_power = 0.025;  // inverse-policy exponent
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int64_t batch_size = 32;
  int64_t epochs = 130;
  uint64_t seed = 0;
  int64_t k = 3;                // cluster count driving the generation stage
  int64_t generated_total = 0;  // generated images mixed into the pool
  labels::Scheme generated_scheme = labels::Scheme::slsr;
  double generated_loss_scale = 1.0;  // extra weight on generated rows
  double real_label_smoothing = 0.0;  // epsilon for smoothed real targets
};

void validate(const TrainConfig& cfg);

// Inverse-policy rate eta(i) = base_lr * (1 + inv_gamma*i)^(-inv_power).
double lr_schedule(const TrainConfig& cfg, int64_t iteration);

struct TrainLogRow {
  int64_t step = 0;  // mini-batch iteration the row describes
  double lr = 0.0;
  double loss = 0.0;
  double real_loss = 0.0;
  double gen_loss = 0.0;
};

struct JointLog {
  std::vector<TrainLogRow> rows;
  std::vector<double> epoch_loss;  // mean combined loss per epoch
};

// step,lr,loss,real_loss,gen_loss rows under a header.
std::string log_to_csv(const JointLog& log);
JointLog log_from_csv(const std::string& text);

// One optimisation step on a mixed batch: forward, provenance-weighted loss,
// backward through head, pooling and trunk, then SGD through `opt` (momentum
// plus coupled L2 decay). Increments the model's step counter and returns
// the loss breakdown for logging.
loss::BatchLossResult sgd_step(backbone::ModelState& model, nn::SgdMomentum& opt,
                               const Tensor& batch,
                               const std::vector<labels::LabelTarget>& targets, double lr,
                               double generated_scale = 1.0);

// cluster -> sorted distinct class indices, from per-record cluster
// assignments and the identity->class map.
std::map<int64_t, std::vector<int64_t>> class_support(
    const std::vector<int64_t>& assignments, const std::vector<int64_t>& identities,
    const std::map<int64_t, int64_t>& class_of_identity);

// Target for one generated record under the configured scheme. `support`
// maps cluster -> class indices; `probs` carries the model's current
// prediction for the record (consulted by the pseudo scheme only).
labels::LabelTarget generated_target(const TrainConfig& cfg, int64_t n_classes,
                                     const std::map<int64_t, std::vector<int64_t>>& support,
                                     int64_t cluster_id, const std::vector<double>& probs);

// Final classification run over the pooled real + generated set under the
// inverse learning-rate policy. Generated records arrive in [-1,1] pixel
// range and are shifted to [0,1] before the shared augmentation pipeline.
backbone::ModelState joint_train(const data::DatasetBundle& bundle,
                                 const std::vector<data::ImageRecord>& generated,
                                 const std::map<int64_t, std::vector<int64_t>>& support,
                                 const backbone::BackboneConfig& bcfg, const TrainConfig& cfg,
                                 const data::PreprocessConfig& pp, JointLog* log = nullptr);

}  // namespace slsr::trainer
