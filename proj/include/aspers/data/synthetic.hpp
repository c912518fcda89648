#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "aspers/data/cohort.hpp"

namespace aspers {

struct SyntheticSpec {
  std::size_t n_clusters = 2;
  std::size_t users_per_cluster = 8;
  std::size_t samples_per_user = 60;
  std::size_t feature_dim = 4;
  double cluster_spread = 1.0;
  double user_spread = 0.1;
  double noise_std = 0.1;
  // Std of the per-cluster feature mean. Zero gives x ~ N(0, I) for every
  // user, in which case feature averages carry no cluster information.
  double feature_shift = 0.0;
  Task task = Task::Regression;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCohort {
  Cohort cohort;
  std::map<std::string, std::size_t> clusters;  // user_id -> cluster index
};

/// Cluster weight vectors w_c ~ N(0, cluster_spread^2 I), user vectors
/// w_u = w_c + N(0, user_spread^2 I), inputs x ~ N(mu_c, I) with
/// mu_c ~ N(0, feature_shift^2 I). Regression targets are
/// w_u.x + 0.5 relu(w_u.x) + N(0, noise_std^2); classification targets are
/// 1[w_u.x > 0]. Users are named u000, u001, ... in cluster-major order.
SyntheticCohort generate_synthetic(const SyntheticSpec& spec);

}  // namespace aspers
