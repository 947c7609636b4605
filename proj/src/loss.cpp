#include "slsr/loss.hpp"

#include <algorithm>
#include <cmath>

#include "slsr/common.hpp"

namespace slsr::loss {

double cross_entropy(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw ConfigError("cross_entropy: prediction/target size mismatch");
  if (pred.empty()) throw ConfigError("cross_entropy: empty distributions");
  double acc = 0.0;
  for (size_t k = 0; k < pred.size(); ++k) {
    if (target[k] == 0.0) continue;
    acc -= target[k] * std::log(std::max(pred[k], kLogFloor));
  }
  return acc;
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = std::log((logits.row(r).array() - m).exp().sum()) + m;
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

BatchLossResult combined_batch_loss(const Matrix& logits,
                                    const std::vector<labels::LabelTarget>& targets,
                                    double generated_scale) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw ConfigError("combined_batch_loss: row/target count mismatch");

  BatchLossResult res;
  res.dlogits = Matrix::Zero(n, c);
  const Matrix logp = log_softmax(logits);

  double real_sum = 0.0;
  double gen_sum = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& t = targets[static_cast<size_t>(r)];
    if (static_cast<Eigen::Index>(t.probs.size()) != c)
      throw ConfigError("combined_batch_loss: target width mismatch");
    double row_loss = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      const double tk = t.probs[static_cast<size_t>(k)];
      if (tk != 0.0) row_loss -= tk * logp(r, k);
    }
    const bool gen = t.provenance == labels::Provenance::generated;
    const double scale = gen ? generated_scale : 1.0;
    if (gen) {
      gen_sum += row_loss;
      ++res.n_gen;
    } else {
      real_sum += row_loss;
      ++res.n_real;
    }
    // d/dlogits of -sum t*logp is softmax(logits) - t (times the row weight).
    const double w = scale / static_cast<double>(n);
    Eigen::RowVectorXd p = (logp.row(r).array().exp()).matrix();
    res.dlogits.row(r) = w * p;
    for (Eigen::Index k = 0; k < c; ++k)
      res.dlogits(r, k) -= w * t.probs[static_cast<size_t>(k)];
    res.total += scale * row_loss;
  }
  res.total /= static_cast<double>(n);
  res.real_part = res.n_real > 0 ? real_sum / static_cast<double>(res.n_real) : 0.0;
  res.gen_part = res.n_gen > 0 ? gen_sum / static_cast<double>(res.n_gen) : 0.0;
  if (!std::isfinite(res.total))
    throw NumericError("combined_batch_loss: non-finite loss");
  return res;
}

}  // namespace slsr::loss
