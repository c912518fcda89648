#include "aspers/data/synthetic.hpp"

#include <cstdio>
#include <random>

#include "aspers/error.hpp"
#include "aspers/rng.hpp"

namespace aspers {

void SyntheticSpec::validate() const {
  if (n_clusters < 1 || users_per_cluster < 1 || samples_per_user < 1 ||
      feature_dim < 1)
    throw ConfigError("synthetic spec: all counts must be >= 1");
  if (cluster_spread < 0.0 || user_spread < 0.0 || noise_std < 0.0 ||
      feature_shift < 0.0)
    throw ConfigError("synthetic spec: spreads and noise must be >= 0");
  if (n_clusters * users_per_cluster < 2)
    throw ConfigError("synthetic spec: cohort needs at least 2 users");
}

SyntheticCohort generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.feature_dim;
  Rng centers_rng = make_rng(spec.seed, "synthetic/centers");
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<double>> w_c(spec.n_clusters, std::vector<double>(d));
  std::vector<std::vector<double>> mu_c(spec.n_clusters, std::vector<double>(d));
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (double& v : w_c[c]) v = spec.cluster_spread * unit(centers_rng);
    for (double& v : mu_c[c]) v = spec.feature_shift * unit(centers_rng);
  }

  SyntheticCohort out;
  out.cohort.task = spec.task;
  out.cohort.feature_dim = d;
  std::size_t index = 0;
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (std::size_t k = 0; k < spec.users_per_cluster; ++k, ++index) {
      char name[32];
      std::snprintf(name, sizeof(name), "u%03zu", index);
      Rng rng(derive_seed(derive_seed(spec.seed, "synthetic/user"), index));
      std::vector<double> w(d);
      for (std::size_t i = 0; i < d; ++i) w[i] = w_c[c][i] + spec.user_spread * unit(rng);

      UserDataset u{name, Matrix(spec.samples_per_user, d), {}, {}};
      for (std::size_t n = 0; n < spec.samples_per_user; ++n) {
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double x = mu_c[c][i] + unit(rng);
          u.features(n, i) = x;
          z += w[i] * x;
        }
        const double noise = spec.noise_std * unit(rng);
        const double y = spec.task == Task::Regression
                             ? z + 0.5 * (z > 0.0 ? z : 0.0) + noise
                             : (z > 0.0 ? 1.0 : 0.0);
        u.targets.push_back(y);
        u.timestamps.push_back(static_cast<std::int64_t>(n));
      }
      out.clusters[name] = c;
      out.cohort.users.emplace(name, std::move(u));
    }
  }
  out.cohort.validate();
  return out;
}

}  // namespace aspers
