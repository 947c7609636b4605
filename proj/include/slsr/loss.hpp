#pragma once

#include <vector>

#include "slsr/labels.hpp"
#include "slsr/tensor.hpp"

namespace slsr::loss {

// Floor applied inside every log() so zero-probability predictions yield a
// large finite penalty instead of inf.
inline constexpr double kLogFloor = 1e-12;

// -sum_k t_k log p_k over an explicit predicted distribution.
double cross_entropy(const std::vector<double>& pred, const std::vector<double>& target);

// Row-wise softmax of raw scores, numerically stabilised by max subtraction.
Matrix softmax(const Matrix& logits);
Matrix log_softmax(const Matrix& logits);

struct BatchLossResult {
  double total = 0.0;      // mean over rows of the combined per-row loss
  double real_part = 0.0;  // mean over real rows of their loss (0 if none)
  double gen_part = 0.0;   // mean over generated rows of their loss (0 if none)
  int64_t n_real = 0;
  int64_t n_gen = 0;
  Matrix dlogits;          // gradient of `total` w.r.t. the raw scores
};

// Per-row loss (1-lambda)*xent + lambda*smooth where lambda is 1 for
// generated rows and 0 for real ones; generated rows are additionally scaled
// by `generated_scale`. Targets must match the logits' column count.
BatchLossResult combined_batch_loss(const Matrix& logits,
                                    const std::vector<labels::LabelTarget>& targets,
                                    double generated_scale = 1.0);

}  // namespace slsr::loss
