#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aspers/core/matrix.hpp"
#include "aspers/data/cohort.hpp"

namespace aspers {

struct ClusterAssignment {
  std::size_t k = 0;
  Matrix centroids;                             // k x d
  std::map<std::string, std::size_t> assignment;  // user -> cluster
  // Sum of squared distances to the assigned centroid: after seeding, then
  // after every Lloyd iteration.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments are
/// stable or after `max_iters` iterations. An empty cluster is re-seeded
/// with the point farthest from its current centroid. Throws ConfigError
/// when there are fewer points than clusters.
ClusterAssignment kmeans(const Matrix& points, const std::vector<std::string>& ids,
                         std::size_t k, std::uint64_t seed, std::size_t max_iters = 100);

/// Mean train feature vector per user; rows follow split.user_ids().
Matrix user_feature_means(const SplitCohort& split);

}  // namespace aspers
