#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsr/tensor.hpp"

namespace slsr::eval {

enum class Protocol { market_single, market_multi };

const char* protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& name);

struct RankingResult {
  Matrix distmat;           // the Q×G distances the ranking was computed from
  std::vector<double> cmc;  // rank-k accuracy for k = 1..G
  double mAP = 0.0;
  Protocol protocol = Protocol::market_single;
  int64_t n_queries = 0;    // queries contributing to the metrics
  int64_t n_excluded = 0;   // queries dropped for having no valid match
};

// Exact row-difference L2 distances (zero diagonal and symmetry are exact
// when the two sides are the same matrix).
Matrix pairwise_l2(const Matrix& queries, const Matrix& gallery);

// Cross-camera retrieval metrics. For each query, gallery entries with the
// same identity AND the same camera are invisible, as are junk entries
// (identity <= 0); ties in distance break toward the lower gallery index.
RankingResult cmc_map(const Matrix& distmat, const std::vector<int64_t>& query_ids,
                      const std::vector<int64_t>& query_cams,
                      const std::vector<int64_t>& gallery_ids,
                      const std::vector<int64_t>& gallery_cams,
                      Protocol protocol = Protocol::market_single);

// k-reciprocal re-ranking: final = lambda * original + (1-lambda) * Jaccard
// distance over expanded reciprocal neighbor sets, with local query
// expansion over k2. The "original" term is the per-row max-normalized
// squared distance, a per-query monotone rescaling of L2.
Matrix rerank_k_reciprocal(const Matrix& query_feats, const Matrix& gallery_feats,
                           int64_t k1 = 20, int64_t k2 = 6, double lambda = 0.3);

// Multi-query condensation: rows sharing (id, camera) are averaged, output
// ordered by first appearance. With unique pairs this is the identity.
struct MergedQueries {
  Matrix features;
  std::vector<int64_t> ids;
  std::vector<int64_t> cams;
};
MergedQueries merge_multi_query(const Matrix& query_feats, const std::vector<int64_t>& ids,
                                const std::vector<int64_t>& cams);

// {protocol, cmc, mAP, n_queries, n_excluded} with the full CMC curve.
std::string report_to_json(const RankingResult& r);
RankingResult report_from_json(const std::string& text);

}  // namespace slsr::eval
