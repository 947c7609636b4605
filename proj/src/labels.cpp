#include "slsr/labels.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "slsr/common.hpp"

namespace slsr::labels {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::one_hot: return "one_hot";
    case Scheme::lsr: return "lsr";
    case Scheme::lsro: return "lsro";
    case Scheme::pseudo: return "pseudo";
    case Scheme::all_in_one: return "all_in_one";
    case Scheme::slsr: return "slsr";
  }
  return "one_hot";
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "one_hot") return Scheme::one_hot;
  if (name == "lsr") return Scheme::lsr;
  if (name == "lsro") return Scheme::lsro;
  if (name == "pseudo") return Scheme::pseudo;
  if (name == "all_in_one") return Scheme::all_in_one;
  if (name == "slsr") return Scheme::slsr;
  throw ConfigError("unknown label scheme: " + name);
}

double LabelTarget::sum() const {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

LabelTarget one_hot(int64_t y, int64_t n) {
  if (n <= 0) throw ConfigError("one_hot: class count must be positive");
  if (y < 0 || y >= n) throw ConfigError("one_hot: label out of range");
  LabelTarget t;
  t.probs.assign(static_cast<size_t>(n), 0.0);
  t.probs[static_cast<size_t>(y)] = 1.0;
  t.scheme = Scheme::one_hot;
  return t;
}

LabelTarget lsr(int64_t y, int64_t n, double eps, bool raw_form) {
  if (n <= 0) throw ConfigError("lsr: class count must be positive");
  if (y < 0 || y >= n) throw ConfigError("lsr: label out of range");
  if (eps < 0.0 || eps > 1.0) throw ConfigError("lsr: epsilon must lie in [0,1]");
  LabelTarget t;
  t.scheme = Scheme::lsr;
  const double off = eps / static_cast<double>(n);
  t.probs.assign(static_cast<size_t>(n), off);
  if (raw_form) {
    // Printed form: (1-eps) on the true class, eps/n elsewhere; mass sums to
    // 1 - eps + eps/n rather than 1.
    t.probs[static_cast<size_t>(y)] = 1.0 - eps;
  } else {
    t.probs[static_cast<size_t>(y)] = 1.0 - eps + off;
  }
  return t;
}

LabelTarget lsro(int64_t n) {
  if (n <= 0) throw ConfigError("lsro: class count must be positive");
  LabelTarget t;
  t.probs.assign(static_cast<size_t>(n), 1.0 / static_cast<double>(n));
  t.provenance = Provenance::generated;
  t.scheme = Scheme::lsro;
  return t;
}

LabelTarget pseudo_label(const std::vector<double>& probs) {
  if (probs.empty()) throw ConfigError("pseudo_label: empty distribution");
  size_t best = 0;
  for (size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  LabelTarget t;
  t.probs.assign(probs.size(), 0.0);
  t.probs[best] = 1.0;
  t.provenance = Provenance::generated;
  t.scheme = Scheme::pseudo;
  return t;
}

LabelTarget all_in_one(int64_t n) {
  if (n <= 0) throw ConfigError("all_in_one: class count must be positive");
  LabelTarget t;
  t.probs.assign(static_cast<size_t>(n) + 1, 0.0);
  t.probs.back() = 1.0;
  t.provenance = Provenance::generated;
  t.scheme = Scheme::all_in_one;
  return t;
}

LabelTarget slsr_target(const std::vector<int64_t>& support, int64_t n, int64_t cluster_id) {
  if (n <= 0) throw ConfigError("slsr_target: class count must be positive");
  if (support.empty()) throw ConfigError("slsr_target: cluster support is empty");
  std::vector<int64_t> uniq = support;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.front() < 0 || uniq.back() >= n)
    throw ConfigError("slsr_target: support index out of range");
  LabelTarget t;
  t.probs.assign(static_cast<size_t>(n), 0.0);
  const double v = 1.0 / static_cast<double>(uniq.size());
  for (int64_t k : uniq) t.probs[static_cast<size_t>(k)] = v;
  t.provenance = Provenance::generated;
  t.cluster_id = cluster_id;
  t.scheme = Scheme::slsr;
  return t;
}

std::string to_sparse_json(const LabelTarget& t) {
  nlohmann::json j;
  j["scheme"] = scheme_name(t.scheme);
  j["provenance"] = t.provenance == Provenance::generated ? "generated" : "real";
  if (t.cluster_id) j["cluster"] = *t.cluster_id;
  nlohmann::json idx = nlohmann::json::array();
  nlohmann::json val = nlohmann::json::array();
  for (size_t k = 0; k < t.probs.size(); ++k) {
    if (t.probs[k] != 0.0) {
      idx.push_back(k);
      val.push_back(t.probs[k]);
    }
  }
  j["indices"] = std::move(idx);
  j["values"] = std::move(val);
  j["n"] = t.probs.size();
  return j.dump();
}

LabelTarget from_sparse_json(const std::string& json, int64_t n) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sparse label parse failure: ") + e.what());
  }
  LabelTarget t;
  const int64_t stored_n = j.value("n", n);
  if (n > 0 && stored_n != n)
    throw DataError("sparse label class count mismatch");
  t.probs.assign(static_cast<size_t>(stored_n), 0.0);
  t.scheme = scheme_from_name(j.value("scheme", std::string("one_hot")));
  t.provenance = j.value("provenance", std::string("real")) == "generated"
                     ? Provenance::generated
                     : Provenance::real;
  if (j.contains("cluster")) t.cluster_id = j["cluster"].get<int64_t>();
  const auto& idx = j.at("indices");
  const auto& val = j.at("values");
  if (idx.size() != val.size()) throw DataError("sparse label index/value length mismatch");
  for (size_t k = 0; k < idx.size(); ++k) {
    const int64_t i = idx[k].get<int64_t>();
    if (i < 0 || i >= stored_n) throw DataError("sparse label index out of range");
    t.probs[static_cast<size_t>(i)] = val[k].get<double>();
  }
  return t;
}

}  // namespace slsr::labels
