#include "slsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "slsr/cluster.hpp"
#include "slsr/common.hpp"
#include "slsr/rng.hpp"

namespace slsr::trainer {

void validate(const TrainConfig& cfg) {
  if (cfg.base_lr <= 0.0) throw ConfigError("train: base_lr must be positive");
  if (cfg.inv_gamma < 0.0) throw ConfigError("train: inv_gamma must be nonnegative");
  if (cfg.inv_power < 0.0) throw ConfigError("train: inv_power must be nonnegative");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("train: momentum must lie in [0,1)");
  if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be nonnegative");
  if (cfg.k < 1) throw ConfigError("train: cluster count must be at least 1");
  if (cfg.generated_total < 0) throw ConfigError("train: generated_total must be nonnegative");
  if (cfg.generated_loss_scale < 0.0)
    throw ConfigError("train: generated_loss_scale must be nonnegative");
  if (cfg.real_label_smoothing < 0.0 || cfg.real_label_smoothing > 1.0)
    throw ConfigError("train: real_label_smoothing must lie in [0,1]");
  switch (cfg.generated_scheme) {
    case labels::Scheme::slsr:
    case labels::Scheme::lsro:
    case labels::Scheme::pseudo:
    case labels::Scheme::all_in_one:
      break;
    default:
      throw ConfigError("train: generated_scheme needs no ground-truth identity; "
                        "one_hot/lsr apply to real labels only");
  }
}

double lr_schedule(const TrainConfig& cfg, int64_t iteration) {
  if (iteration < 0) throw ConfigError("lr_schedule: iteration must be nonnegative");
  return cfg.base_lr *
         std::pow(1.0 + cfg.inv_gamma * static_cast<double>(iteration), -cfg.inv_power);
}

std::string log_to_csv(const JointLog& log) {
  std::string out = "step,lr,loss,real_loss,gen_loss\n";
  char buf[192];
  for (const auto& r : log.rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.step), r.lr, r.loss, r.real_loss, r.gen_loss);
    out += buf;
  }
  return out;
}

JointLog log_from_csv(const std::string& text) {
  JointLog log;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,lr,loss,real_loss,gen_loss")
    throw DataError("training log: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TrainLogRow row;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lg,%lg,%lg,%lg", &step, &row.lr, &row.loss,
                    &row.real_loss, &row.gen_loss) != 5)
      throw DataError("training log: malformed row '" + line + "'");
    row.step = step;
    log.rows.push_back(row);
  }
  return log;
}

loss::BatchLossResult sgd_step(backbone::ModelState& model, nn::SgdMomentum& opt,
                               const Tensor& batch,
                               const std::vector<labels::LabelTarget>& targets, double lr,
                               double generated_scale) {
  model.trunk.zero_grad();
  model.pool.zero_grad();
  model.head.zero_grad();
  const Matrix logits = backbone::forward_logits(model, batch, true);
  const loss::BatchLossResult result = loss::combined_batch_loss(logits, targets, generated_scale);

  Tensor dlogits({result.dlogits.rows(), result.dlogits.cols()});
  std::copy(result.dlogits.data(), result.dlogits.data() + result.dlogits.size(),
            dlogits.data.begin());
  const Tensor dpooled = model.head.backward(dlogits);
  const Tensor dconv = model.pool.backward(dpooled);
  model.trunk.backward(dconv);

  auto params = model.trunk.params();
  auto head_params = model.head.params();
  params.insert(params.end(), head_params.begin(), head_params.end());
  for (const nn::Param* p : params)
    if (!nn::all_finite(p->grad))
      throw NumericError("sgd_step: non-finite gradient in " + p->name + " at step " +
                         std::to_string(model.training_step));

  opt.step(params, lr);
  ++model.training_step;
  return result;
}

std::map<int64_t, std::vector<int64_t>> class_support(
    const std::vector<int64_t>& assignments, const std::vector<int64_t>& identities,
    const std::map<int64_t, int64_t>& class_of_identity) {
  const auto by_identity = cluster::cluster_support(assignments, identities);
  std::map<int64_t, std::vector<int64_t>> out;
  for (const auto& [cid, ids] : by_identity) {
    std::vector<int64_t> classes;
    classes.reserve(ids.size());
    for (int64_t id : ids) {
      const auto it = class_of_identity.find(id);
      if (it == class_of_identity.end())
        throw DataError("class_support: identity " + std::to_string(id) +
                        " missing from the class index");
      classes.push_back(it->second);
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    out.emplace(cid, std::move(classes));
  }
  return out;
}

labels::LabelTarget generated_target(const TrainConfig& cfg, int64_t n_classes,
                                     const std::map<int64_t, std::vector<int64_t>>& support,
                                     int64_t cluster_id, const std::vector<double>& probs) {
  switch (cfg.generated_scheme) {
    case labels::Scheme::slsr: {
      const auto it = support.find(cluster_id);
      if (it == support.end())
        throw DataError("generated_target: no support for cluster " +
                        std::to_string(cluster_id));
      return labels::slsr_target(it->second, n_classes, cluster_id);
    }
    case labels::Scheme::lsro:
      return labels::lsro(n_classes);
    case labels::Scheme::pseudo:
      return labels::pseudo_label(probs);
    case labels::Scheme::all_in_one:
      return labels::all_in_one(n_classes);
    default:
      throw ConfigError("generated_target: scheme needs a ground-truth identity");
  }
}

namespace {

labels::LabelTarget real_target(const TrainConfig& cfg, int64_t cls, int64_t n_out) {
  if (cfg.real_label_smoothing > 0.0)
    return labels::lsr(cls, n_out, cfg.real_label_smoothing);
  return labels::one_hot(cls, n_out);
}

Tensor generated_to_unit_range(const Tensor& pixels) {
  Tensor out = pixels;
  for (double& v : out.data) v = (v + 1.0) / 2.0;
  return out;
}

}  // namespace

backbone::ModelState joint_train(const data::DatasetBundle& bundle,
                                 const std::vector<data::ImageRecord>& generated,
                                 const std::map<int64_t, std::vector<int64_t>>& support,
                                 const backbone::BackboneConfig& bcfg, const TrainConfig& cfg,
                                 const data::PreprocessConfig& pp, JointLog* log) {
  validate(cfg);
  if (bundle.train.empty()) throw ConfigError("joint_train: no training records");
  if (bundle.n_classes != bcfg.n_classes)
    throw ConfigError("joint_train: model class count disagrees with the bundle");
  const bool wants_extra = cfg.generated_scheme == labels::Scheme::all_in_one;
  if (bcfg.extra_class != wants_extra)
    throw ConfigError(wants_extra
                          ? "joint_train: the all_in_one scheme needs the extra model class"
                          : "joint_train: extra model class is only used by all_in_one");
  const bool pseudo = cfg.generated_scheme == labels::Scheme::pseudo;
  for (const auto& rec : bundle.train)
    if (bundle.class_of_identity.find(rec.identity) == bundle.class_of_identity.end())
      throw DataError("joint_train: identity " + std::to_string(rec.identity) +
                      " missing from the class index");
  if (cfg.generated_scheme == labels::Scheme::slsr)
    for (const auto& rec : generated)
      if (rec.cluster < 0)
        throw DataError("joint_train: generated record " + rec.image_id +
                        " carries no cluster tag");

  const int64_t n_classes = bundle.n_classes;
  const int64_t n_out = bcfg.output_dim();
  const int64_t n_real = static_cast<int64_t>(bundle.train.size());
  const int64_t n_total = n_real + static_cast<int64_t>(generated.size());

  backbone::ModelState model =
      backbone::build_model(bcfg, derive_seed(cfg.seed, "joint_model", 0));
  nn::SgdMomentum optim(cfg.momentum, cfg.weight_decay);

  std::vector<int64_t> order(static_cast<size_t>(n_total));
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, "joint_order", static_cast<uint64_t>(epoch)));
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n_total; start += cfg.batch_size) {
      const int64_t stop = std::min(n_total, start + cfg.batch_size);
      std::vector<Tensor> views;
      std::vector<labels::LabelTarget> targets;
      std::vector<int64_t> gen_rows;  // batch rows needing pseudo resolution
      for (int64_t k = start; k < stop; ++k) {
        const int64_t idx = order[static_cast<size_t>(k)];
        // Preprocessing streams are keyed by (seed, epoch, pool index) so
        // batch boundaries never change the pixels a record sees.
        Rng pp_rng(derive_seed(cfg.seed, "joint_pp",
                               static_cast<uint64_t>(epoch) * static_cast<uint64_t>(n_total) +
                                   static_cast<uint64_t>(idx)));
        if (idx < n_real) {
          data::ImageRecord rec = bundle.train[static_cast<size_t>(idx)];
          data::load_pixels(rec);
          views.push_back(data::preprocess_train(rec.pixels, pp, pp_rng));
          targets.push_back(
              real_target(cfg, bundle.class_of_identity.at(rec.identity), n_out));
        } else {
          data::ImageRecord rec = generated[static_cast<size_t>(idx - n_real)];
          data::load_pixels(rec);
          views.push_back(
              data::preprocess_train(generated_to_unit_range(rec.pixels), pp, pp_rng));
          gen_rows.push_back(static_cast<int64_t>(targets.size()));
          targets.push_back(pseudo ? labels::lsro(n_out)  // placeholder until resolved
                                   : generated_target(cfg, n_classes, support, rec.cluster, {}));
        }
      }
      const Tensor batch = backbone::stack_batch(views);
      if (pseudo && !gen_rows.empty()) {
        // Dynamic assignment: label each generated row with the model's own
        // current prediction, frozen for the gradient step.
        const Matrix probs = backbone::forward_probs(model, batch, false);
        for (int64_t row : gen_rows) {
          std::vector<double> p(static_cast<size_t>(probs.cols()));
          for (Eigen::Index c = 0; c < probs.cols(); ++c)
            p[static_cast<size_t>(c)] = probs(row, c);
          targets[static_cast<size_t>(row)] = generated_target(cfg, n_classes, support, -1, p);
        }
      }
      const int64_t step = model.training_step;
      const double lr = lr_schedule(cfg, step);
      const loss::BatchLossResult result =
          sgd_step(model, optim, batch, targets, lr, cfg.generated_loss_scale);
      loss_sum += result.total;
      ++batches;
      if (log)
        log->rows.push_back({step, lr, result.total, result.real_part, result.gen_part});
    }
    if (log && batches > 0) log->epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return model;
}

}  // namespace slsr::trainer
