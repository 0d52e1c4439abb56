#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace idbr {

struct KMeansConfig {
  int max_iterations = 100;
  int restarts = 10;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;       // k x d
  std::vector<int> assignment;     // n, cluster index per point
  double inertia = 0.0;            // within-cluster sum of squared distances
  std::vector<double> inertia_trace;  // per iteration of the winning restart
  int iterations = 0;
};

/// Squared Euclidean distance between two matrix rows, accumulated in
/// column order. Shared by the clustering loop and the exemplar pick so
/// argmin comparisons are made on identical floating point values.
double squared_distance(const Eigen::MatrixXd& a, Eigen::Index row_a,
                        const Eigen::MatrixXd& b, Eigen::Index row_b);

/// Lloyd iterations with D^2-weighted seeding, multiple restarts (best
/// inertia wins) and deterministic tie-breaking (lowest index). Empty
/// clusters are refilled with the point farthest from its centroid, so the
/// result always has k non-empty clusters. Requires 0 <= k <= n.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed,
                    const KMeansConfig& config = {});

}  // namespace idbr
