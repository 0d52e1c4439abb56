#include "idbr/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "idbr/rng.hpp"

namespace idbr {

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index row_a,
                        const Eigen::MatrixXd& b, Eigen::Index row_b) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double diff = a(row_a, c) - b(row_b, c);
    acc += diff * diff;
  }
  return acc;
}

namespace {

double row_to_row_distance(const Eigen::MatrixXd& a, Eigen::Index i,
                           const Eigen::MatrixXd& b, Eigen::Index j) {
  return squared_distance(a, i, b, j);
}

Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  std::vector<bool> chosen(n, false);

  Eigen::Index first = static_cast<Eigen::Index>(rng.uniform_index(n));
  centroids.row(0) = points.row(first);
  chosen[first] = true;

  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2[i] = row_to_row_distance(points, i, centroids, 0);
  }

  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r && !chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    if (pick < 0) {
      // All remaining mass is on duplicates of chosen points; take the
      // lowest-index unchosen point.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(c) = points.row(pick);
    chosen[pick] = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], row_to_row_distance(points, i, centroids, c));
    }
  }
  return centroids;
}

struct RestartResult {
  Eigen::MatrixXd centroids;
  std::vector<int> assignment;
  double inertia = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  int iterations = 0;
};

RestartResult run_restart(const Eigen::MatrixXd& points, int k, uint64_t seed,
                          const KMeansConfig& config) {
  const Eigen::Index n = points.rows();
  Rng rng(seed);

  RestartResult res;
  res.centroids = seed_centroids(points, k, rng);
  res.assignment.assign(n, -1);

  std::vector<double> dist_to_own(n, 0.0);
  std::vector<int> counts(k, 0);

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = row_to_row_distance(points, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double d = row_to_row_distance(points, i, res.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != res.assignment[i]) changed = true;
      res.assignment[i] = best;
      dist_to_own[i] = best_d;
      ++counts[best];
    }

    // Refill empty clusters with the globally farthest point whose donor
    // cluster keeps at least one member.
    bool refilled = false;
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      Eigen::Index worst = -1;
      double worst_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[res.assignment[i]] <= 1) continue;
        if (dist_to_own[i] > worst_d) {
          worst_d = dist_to_own[i];
          worst = i;
        }
      }
      if (worst < 0) break;  // n < k cannot happen; all clusters singleton
      --counts[res.assignment[worst]];
      res.assignment[worst] = c;
      ++counts[c];
      res.centroids.row(c) = points.row(worst);
      dist_to_own[worst] = 0.0;
      refilled = true;
    }

    res.centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      res.centroids.row(res.assignment[i]) += points.row(i);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) res.centroids.row(c) /= counts[c];
    }

    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      inertia += row_to_row_distance(points, i, res.centroids,
                                     res.assignment[i]);
    }
    res.trace.push_back(inertia);
    res.inertia = inertia;
    res.iterations = iter + 1;
    if (!changed && !refilled && iter > 0) break;
  }
  return res;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed,
                    const KMeansConfig& config) {
  const Eigen::Index n = points.rows();
  if (k > n) {
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) +
                                " exceeds number of points " +
                                std::to_string(n));
  }
  if (!points.allFinite()) {
    throw std::invalid_argument("kmeans: features must be finite");
  }

  KMeansResult out;
  if (k == 0) {
    out.centroids.resize(0, points.cols());
    out.assignment.assign(n, -1);
    return out;
  }

  RestartResult best;
  for (int r = 0; r < config.restarts; ++r) {
    RestartResult cand =
        run_restart(points, k, derive_seed(seed, {static_cast<uint64_t>(r)}),
                    config);
    if (cand.inertia < best.inertia) best = std::move(cand);
  }

  out.centroids = std::move(best.centroids);
  out.assignment = std::move(best.assignment);
  out.inertia = best.inertia;
  out.inertia_trace = std::move(best.trace);
  out.iterations = best.iterations;
  return out;
}

}  // namespace idbr
