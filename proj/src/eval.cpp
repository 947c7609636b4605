#include "slsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "slsr/common.hpp"

namespace slsr::eval {

const char* protocol_name(Protocol p) {
  return p == Protocol::market_multi ? "market_multi" : "market_single";
}

Protocol protocol_from_name(const std::string& name) {
  if (name == "market_single") return Protocol::market_single;
  if (name == "market_multi") return Protocol::market_multi;
  throw ConfigError("unknown evaluation protocol: " + name);
}

Matrix pairwise_l2(const Matrix& queries, const Matrix& gallery) {
  if (queries.cols() != gallery.cols())
    throw ConfigError("pairwise_l2: feature widths differ (" +
                      std::to_string(queries.cols()) + " vs " +
                      std::to_string(gallery.cols()) + ")");
  Matrix out(queries.rows(), gallery.rows());
  for (int64_t i = 0; i < queries.rows(); ++i)
    for (int64_t j = 0; j < gallery.rows(); ++j)
      out(i, j) = (queries.row(i) - gallery.row(j)).norm();
  return out;
}

RankingResult cmc_map(const Matrix& distmat, const std::vector<int64_t>& query_ids,
                      const std::vector<int64_t>& query_cams,
                      const std::vector<int64_t>& gallery_ids,
                      const std::vector<int64_t>& gallery_cams, Protocol protocol) {
  const int64_t nq = distmat.rows();
  const int64_t ng = distmat.cols();
  if (static_cast<int64_t>(query_ids.size()) != nq ||
      static_cast<int64_t>(query_cams.size()) != nq)
    throw ConfigError("cmc_map: query id/camera arrays do not match the distance matrix");
  if (static_cast<int64_t>(gallery_ids.size()) != ng ||
      static_cast<int64_t>(gallery_cams.size()) != ng)
    throw ConfigError("cmc_map: gallery id/camera arrays do not match the distance matrix");
  if (ng == 0) throw ConfigError("cmc_map: empty gallery");

  RankingResult res;
  res.distmat = distmat;
  res.protocol = protocol;
  res.cmc.assign(static_cast<size_t>(ng), 0.0);

  std::vector<int64_t> order(static_cast<size_t>(ng));
  double ap_sum = 0.0;
  int64_t used = 0;

  for (int64_t i = 0; i < nq; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      if (distmat(i, a) != distmat(i, b)) return distmat(i, a) < distmat(i, b);
      return a < b;
    });

    int64_t visible = 0;  // 1-indexed rank within the filtered gallery
    int64_t hits = 0;
    int64_t first_hit = -1;
    double ap = 0.0;
    for (int64_t j : order) {
      if (gallery_ids[static_cast<size_t>(j)] <= 0) continue;  // junk/distractor
      if (gallery_ids[static_cast<size_t>(j)] == query_ids[static_cast<size_t>(i)] &&
          gallery_cams[static_cast<size_t>(j)] == query_cams[static_cast<size_t>(i)])
        continue;  // same identity seen by the same camera is invisible
      ++visible;
      if (gallery_ids[static_cast<size_t>(j)] == query_ids[static_cast<size_t>(i)]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(visible);
        if (first_hit < 0) first_hit = visible;
      }
    }
    if (hits == 0) {
      ++res.n_excluded;
      continue;
    }
    ++used;
    ap_sum += ap / static_cast<double>(hits);
    for (int64_t k = first_hit - 1; k < ng; ++k) res.cmc[static_cast<size_t>(k)] += 1.0;
  }

  res.n_queries = used;
  if (used > 0) {
    for (double& c : res.cmc) c /= static_cast<double>(used);
    res.mAP = ap_sum / static_cast<double>(used);
  }
  return res;
}

namespace {

// First k+1 ranked neighbors of i (self included) that also rank i within
// their own first k+1: the k-reciprocal set of the published method.
std::vector<int64_t> reciprocal_set(const std::vector<std::vector<int64_t>>& rank, int64_t i,
                                    int64_t k) {
  const int64_t n = static_cast<int64_t>(rank.size());
  std::vector<int64_t> out;
  for (int64_t t = 0; t <= k && t < n; ++t) {
    const int64_t j = rank[static_cast<size_t>(i)][static_cast<size_t>(t)];
    for (int64_t s = 0; s <= k && s < n; ++s)
      if (rank[static_cast<size_t>(j)][static_cast<size_t>(s)] == i) {
        out.push_back(j);
        break;
      }
  }
  return out;
}

}  // namespace

Matrix rerank_k_reciprocal(const Matrix& query_feats, const Matrix& gallery_feats, int64_t k1,
                           int64_t k2, double lambda) {
  if (query_feats.cols() != gallery_feats.cols())
    throw ConfigError("rerank: feature widths differ");
  if (k2 < 1 || k1 <= k2) throw ConfigError("rerank: need k1 > k2 >= 1");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("rerank: lambda must lie in [0,1]");
  const int64_t q = query_feats.rows();
  const int64_t g = gallery_feats.rows();
  if (k1 >= g) throw ConfigError("rerank: k1 must be smaller than the gallery size");
  const int64_t n = q + g;

  Matrix all(n, query_feats.cols());
  all.topRows(q) = query_feats;
  all.bottomRows(g) = gallery_feats;

  // Squared distances, max-normalized per row (a per-query monotone rescale).
  Matrix dist = pairwise_l2(all, all);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) dist(i, j) = dist(i, j) * dist(i, j);
  for (int64_t i = 0; i < n; ++i) {
    const double rowmax = dist.row(i).maxCoeff();
    if (rowmax > 0.0) dist.row(i) /= rowmax;
  }

  std::vector<std::vector<int64_t>> rank(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    auto& r = rank[static_cast<size_t>(i)];
    r.resize(static_cast<size_t>(n));
    std::iota(r.begin(), r.end(), 0);
    std::sort(r.begin(), r.end(), [&](int64_t a, int64_t b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;
    });
  }

  // Reciprocal neighbor weights with the 2/3-overlap expansion.
  const int64_t half = k1 / 2;
  std::vector<std::vector<double>> V(static_cast<size_t>(n),
                                     std::vector<double>(static_cast<size_t>(n), 0.0));
  for (int64_t i = 0; i < n; ++i) {
    const std::vector<int64_t> base = reciprocal_set(rank, i, k1);
    std::vector<int64_t> expanded = base;
    for (int64_t c : base) {
      const std::vector<int64_t> cand = reciprocal_set(rank, c, half);
      int64_t overlap = 0;
      for (int64_t x : cand)
        if (std::find(base.begin(), base.end(), x) != base.end()) ++overlap;
      if (3 * overlap > 2 * static_cast<int64_t>(cand.size()))
        expanded.insert(expanded.end(), cand.begin(), cand.end());
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());

    double sum = 0.0;
    for (int64_t j : expanded) sum += std::exp(-dist(i, j));
    for (int64_t j : expanded)
      V[static_cast<size_t>(i)][static_cast<size_t>(j)] = std::exp(-dist(i, j)) / sum;
  }

  // Local query expansion: blend each point's weights with its k2 nearest.
  if (k2 > 1) {
    std::vector<std::vector<double>> blended(
        static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int64_t i = 0; i < n; ++i) {
      auto& row = blended[static_cast<size_t>(i)];
      for (int64_t t = 0; t < k2; ++t) {
        const auto& src = V[static_cast<size_t>(rank[static_cast<size_t>(i)][static_cast<size_t>(t)])];
        for (int64_t j = 0; j < n; ++j) row[static_cast<size_t>(j)] += src[static_cast<size_t>(j)];
      }
      for (double& v : row) v /= static_cast<double>(k2);
    }
    V.swap(blended);
  }

  Matrix final_dist(q, g);
  for (int64_t i = 0; i < q; ++i) {
    const auto& vp = V[static_cast<size_t>(i)];
    for (int64_t j = 0; j < g; ++j) {
      const auto& vg = V[static_cast<size_t>(q + j)];
      double overlap = 0.0;
      for (int64_t t = 0; t < n; ++t)
        overlap += std::min(vp[static_cast<size_t>(t)], vg[static_cast<size_t>(t)]);
      // rows of V sum to 1, so sum(max) = 2 - sum(min)
      const double jaccard = 1.0 - overlap / (2.0 - overlap);
      final_dist(i, j) = lambda * dist(i, q + j) + (1.0 - lambda) * jaccard;
    }
  }
  return final_dist;
}

MergedQueries merge_multi_query(const Matrix& query_feats, const std::vector<int64_t>& ids,
                                const std::vector<int64_t>& cams) {
  const int64_t nq = query_feats.rows();
  if (static_cast<int64_t>(ids.size()) != nq || static_cast<int64_t>(cams.size()) != nq)
    throw ConfigError("merge_multi_query: id/camera arrays do not match the features");

  std::map<std::pair<int64_t, int64_t>, int64_t> slot;
  std::vector<int64_t> counts;
  MergedQueries out;
  for (int64_t i = 0; i < nq; ++i) {
    const std::pair<int64_t, int64_t> key{ids[static_cast<size_t>(i)],
                                          cams[static_cast<size_t>(i)]};
    if (slot.find(key) == slot.end()) {
      slot[key] = static_cast<int64_t>(out.ids.size());
      out.ids.push_back(key.first);
      out.cams.push_back(key.second);
      counts.push_back(0);
    }
  }
  out.features = Matrix::Zero(static_cast<Eigen::Index>(out.ids.size()), query_feats.cols());
  for (int64_t i = 0; i < nq; ++i) {
    const int64_t s = slot[{ids[static_cast<size_t>(i)], cams[static_cast<size_t>(i)]}];
    out.features.row(s) += query_feats.row(i);
    ++counts[static_cast<size_t>(s)];
  }
  for (int64_t s = 0; s < out.features.rows(); ++s)
    out.features.row(s) /= static_cast<double>(counts[static_cast<size_t>(s)]);
  return out;
}

std::string report_to_json(const RankingResult& r) {
  nlohmann::json j;
  j["protocol"] = protocol_name(r.protocol);
  j["cmc"] = r.cmc;
  j["mAP"] = r.mAP;
  j["n_queries"] = r.n_queries;
  j["n_excluded"] = r.n_excluded;
  return j.dump(2);
}

RankingResult report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report JSON unreadable: ") + e.what());
  }
  RankingResult r;
  try {
    r.protocol = protocol_from_name(j.at("protocol").get<std::string>());
    r.cmc = j.at("cmc").get<std::vector<double>>();
    r.mAP = j.at("mAP").get<double>();
    r.n_queries = j.at("n_queries").get<int64_t>();
    r.n_excluded = j.at("n_excluded").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report JSON malformed: ") + e.what());
  }
  return r;
}

}  // namespace slsr::eval
