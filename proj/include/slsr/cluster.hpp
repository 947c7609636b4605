#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slsr/rng.hpp"
#include "slsr/tensor.hpp"

namespace slsr::cluster {

struct KmeansConfig {
  int64_t k = 3;
  int64_t max_iters = 300;
  double tol = 1e-7;        // stop when the objective improves by less than this
  bool plusplus_init = true;  // false selects plain uniform sampling of rows
};

struct KmeansResult {
  Matrix centroids;               // (k, dim)
  std::vector<int64_t> assignments;  // row -> cluster, ties to lowest index
  double objective = 0.0;         // sum of squared distances to own centroid
  std::vector<double> objective_history;  // one entry per assignment pass
  int64_t iterations = 0;
};

KmeansResult kmeans_fit(const Matrix& points, const KmeansConfig& cfg, Rng& rng);

// Mean silhouette over all points using plain Euclidean distance; points in
// singleton clusters contribute 0.
double silhouette_score(const Matrix& points, const std::vector<int64_t>& assignments);

// cluster -> sorted distinct identity labels occurring in it.
std::map<int64_t, std::vector<int64_t>> cluster_support(
    const std::vector<int64_t>& assignments, const std::vector<int64_t>& identities);

// image_id,identity,cluster rows with a header.
std::string assignments_to_csv(const std::vector<std::string>& image_ids,
                               const std::vector<int64_t>& identities,
                               const std::vector<int64_t>& assignments);
void parse_assignments_csv(const std::string& text, std::vector<std::string>& image_ids,
                           std::vector<int64_t>& identities, std::vector<int64_t>& assignments);

// Embedding matrix container: u64 rows, u64 cols, row-major f32 payload.
void save_embeddings(const std::string& path, const Matrix& m);
Matrix load_embeddings(const std::string& path);

}  // namespace slsr::cluster
