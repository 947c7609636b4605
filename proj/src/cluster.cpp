#include "slsr/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "slsr/common.hpp"

namespace slsr::cluster {

namespace {

// Index of the nearest centroid under squared Euclidean distance, lowest
// index winning ties.
int64_t nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& p, double* dist_out) {
  int64_t best = 0;
  double best_d = (centroids.row(0) - p).squaredNorm();
  for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

Matrix init_centroids(const Matrix& points, const KmeansConfig& cfg, Rng& rng) {
  const int64_t n = points.rows();
  Matrix centroids(cfg.k, points.cols());
  if (!cfg.plusplus_init) {
    // Plain init: k distinct rows sampled without replacement.
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    for (int64_t c = 0; c < cfg.k; ++c) centroids.row(c) = points.row(order[static_cast<size_t>(c)]);
    return centroids;
  }
  // k-means++: first centre uniform, then proportional to squared distance
  // to the nearest already-chosen centre.
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.index(static_cast<uint64_t>(n))));
  std::vector<double> d2(static_cast<size_t>(n));
  for (int64_t c = 1; c < cfg.k; ++c) {
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (int64_t j = 0; j < c; ++j)
        best = std::min(best, (centroids.row(j) - points.row(i)).squaredNorm());
      d2[static_cast<size_t>(i)] = best;
      total += best;
    }
    int64_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int64_t i = 0; i < n; ++i) {
        acc += d2[static_cast<size_t>(i)];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int64_t>(rng.index(static_cast<uint64_t>(n)));
    }
    centroids.row(c) = points.row(pick);
  }
  return centroids;
}

}  // namespace

KmeansResult kmeans_fit(const Matrix& points, const KmeansConfig& cfg, Rng& rng) {
  const int64_t n = points.rows();
  if (cfg.k <= 0) throw ConfigError("kmeans: k must be positive");
  if (n < cfg.k) throw ConfigError("kmeans: fewer points than clusters");

  KmeansResult res;
  res.centroids = init_centroids(points, cfg, rng);
  res.assignments.assign(static_cast<size_t>(n), 0);

  double prev_obj = std::numeric_limits<double>::max();
  for (int64_t it = 0; it < cfg.max_iters; ++it) {
    // Assignment step.
    double obj = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double d = 0.0;
      res.assignments[static_cast<size_t>(i)] = nearest_centroid(res.centroids, points.row(i), &d);
      obj += d;
    }
    if (obj > prev_obj + 1e-9)
      throw NumericError("kmeans: objective increased between iterations");
    res.objective = obj;
    res.objective_history.push_back(obj);
    res.iterations = it + 1;
    if (prev_obj - obj < cfg.tol && it > 0) break;
    prev_obj = obj;

    // Update step.
    Matrix sums = Matrix::Zero(cfg.k, points.cols());
    std::vector<int64_t> counts(static_cast<size_t>(cfg.k), 0);
    for (int64_t i = 0; i < n; ++i) {
      sums.row(res.assignments[static_cast<size_t>(i)]) += points.row(i);
      ++counts[static_cast<size_t>(res.assignments[static_cast<size_t>(i)])];
    }
    for (int64_t c = 0; c < cfg.k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
      } else {
        // Empty cluster: reseed at the point farthest from its own centroid.
        int64_t far_i = 0;
        double far_d = -1.0;
        for (int64_t i = 0; i < n; ++i) {
          const double d =
              (points.row(i) - res.centroids.row(res.assignments[static_cast<size_t>(i)]))
                  .squaredNorm();
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        res.centroids.row(c) = points.row(far_i);
        res.assignments[static_cast<size_t>(far_i)] = c;
        prev_obj = std::numeric_limits<double>::max();
      }
    }
  }

  // Final assignment pass so assignments match the returned centroids.
  double obj = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = 0.0;
    res.assignments[static_cast<size_t>(i)] = nearest_centroid(res.centroids, points.row(i), &d);
    obj += d;
  }
  res.objective = obj;
  res.objective_history.push_back(obj);
  return res;
}

double silhouette_score(const Matrix& points, const std::vector<int64_t>& assignments) {
  const int64_t n = points.rows();
  if (static_cast<int64_t>(assignments.size()) != n)
    throw ConfigError("silhouette: point/assignment count mismatch");
  if (n == 0) return 0.0;

  const int64_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  std::vector<int64_t> counts(static_cast<size_t>(k), 0);
  for (int64_t a : assignments) ++counts[static_cast<size_t>(a)];
  int64_t nonempty = 0;
  for (int64_t c : counts)
    if (c > 0) ++nonempty;
  if (nonempty < 2)
    throw ConfigError("silhouette: undefined for a single cluster");

  double total = 0.0;
  std::vector<double> mean_to(static_cast<size_t>(k));
  for (int64_t i = 0; i < n; ++i) {
    const int64_t ci = assignments[static_cast<size_t>(i)];
    if (counts[static_cast<size_t>(ci)] <= 1) continue;  // singleton contributes 0
    std::fill(mean_to.begin(), mean_to.end(), 0.0);
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_to[static_cast<size_t>(assignments[static_cast<size_t>(j)])] +=
          (points.row(i) - points.row(j)).norm();
    }
    double a = mean_to[static_cast<size_t>(ci)] / static_cast<double>(counts[static_cast<size_t>(ci)] - 1);
    double b = std::numeric_limits<double>::max();
    for (int64_t c = 0; c < k; ++c) {
      if (c == ci || counts[static_cast<size_t>(c)] == 0) continue;
      b = std::min(b, mean_to[static_cast<size_t>(c)] / static_cast<double>(counts[static_cast<size_t>(c)]));
    }
    if (b == std::numeric_limits<double>::max()) continue;  // single cluster overall
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

std::map<int64_t, std::vector<int64_t>> cluster_support(
    const std::vector<int64_t>& assignments, const std::vector<int64_t>& identities) {
  if (assignments.size() != identities.size())
    throw ConfigError("cluster_support: assignment/identity count mismatch");
  std::map<int64_t, std::set<int64_t>> acc;
  for (size_t i = 0; i < assignments.size(); ++i)
    acc[assignments[i]].insert(identities[i]);
  std::map<int64_t, std::vector<int64_t>> out;
  for (auto& [c, ids] : acc) out[c] = std::vector<int64_t>(ids.begin(), ids.end());
  return out;
}

std::string assignments_to_csv(const std::vector<std::string>& image_ids,
                               const std::vector<int64_t>& identities,
                               const std::vector<int64_t>& assignments) {
  if (image_ids.size() != identities.size() || image_ids.size() != assignments.size())
    throw ConfigError("assignments_to_csv: column length mismatch");
  std::ostringstream os;
  os << "image_id,identity,cluster\n";
  for (size_t i = 0; i < image_ids.size(); ++i)
    os << image_ids[i] << ',' << identities[i] << ',' << assignments[i] << '\n';
  return os.str();
}

void parse_assignments_csv(const std::string& text, std::vector<std::string>& image_ids,
                           std::vector<int64_t>& identities, std::vector<int64_t>& assignments) {
  image_ids.clear();
  identities.clear();
  assignments.clear();
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "image_id,identity,cluster")
    throw DataError("assignments CSV: bad header");
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t p1 = line.find(',');
    const size_t p2 = line.find(',', p1 == std::string::npos ? p1 : p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw DataError("assignments CSV: malformed row at line " + std::to_string(lineno));
    try {
      image_ids.push_back(line.substr(0, p1));
      identities.push_back(std::stoll(line.substr(p1 + 1, p2 - p1 - 1)));
      assignments.push_back(std::stoll(line.substr(p2 + 1)));
    } catch (const std::exception&) {
      throw DataError("assignments CSV: unparsable numbers at line " + std::to_string(lineno));
    }
  }
}

void save_embeddings(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  const uint64_t rows = static_cast<uint64_t>(m.rows());
  const uint64_t cols = static_cast<uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  for (uint64_t r = 0; r < rows; ++r)
    for (uint64_t c = 0; c < cols; ++c)
      buf[r * cols + c] = static_cast<float>(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw DataError("short write: " + path);
}

Matrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("embeddings file not found: " + path);
  uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!in) throw DataError("embeddings file truncated header: " + path);
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw DataError("embeddings file truncated payload: " + path);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (uint64_t r = 0; r < rows; ++r)
    for (uint64_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buf[r * cols + c];
  return m;
}

}  // namespace slsr::cluster
