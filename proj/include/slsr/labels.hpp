#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slsr::labels {

enum class Scheme { one_hot, lsr, lsro, pseudo, all_in_one, slsr };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

enum class Provenance { real, generated };

// Probability vector over the identity classes (+1 when the model carries
// the all-in-one extra class). Targets are always proper distributions.
struct LabelTarget {
  std::vector<double> probs;
  Provenance provenance = Provenance::real;
  std::optional<int64_t> cluster_id;
  Scheme scheme = Scheme::one_hot;

  double sum() const;
};

LabelTarget one_hot(int64_t y, int64_t n);

// Smoothed target (1-eps)*delta_{k,y} + eps/n. The raw printed form that
// leaves the distribution unnormalized ((1-eps) on y, eps/n elsewhere) is
// available behind `raw_form` for fidelity experiments.
LabelTarget lsr(int64_t y, int64_t n, double eps, bool raw_form = false);

// Uniform 1/n over all classes, tagged as a generated-sample target.
LabelTarget lsro(int64_t n);

// One-hot at the argmax of a model's predicted distribution; ties go to the
// lowest index.
LabelTarget pseudo_label(const std::vector<double>& probs);

// One-hot at the extra (n+1)-th class; the vector has n+1 entries.
LabelTarget all_in_one(int64_t n);

// Sparse target: 1/p_c on each identity in the cluster's support, 0
// elsewhere. `support` holds class indices in [0, n).
LabelTarget slsr_target(const std::vector<int64_t>& support, int64_t n, int64_t cluster_id);

// Sparse serialized form {indices, values, scheme, cluster}.
std::string to_sparse_json(const LabelTarget& t);
LabelTarget from_sparse_json(const std::string& json, int64_t n);

}  // namespace slsr::labels
