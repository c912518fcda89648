#include "aspers/baselines/kmeans.hpp"

#include <limits>

#include "aspers/error.hpp"
#include "aspers/rng.hpp"
#include "aspers/simd/kernels.hpp"

namespace aspers {
namespace {

struct Nearest {
  std::size_t index;
  double distance;
};

Nearest nearest(const Matrix& centroids, std::span<const double> p) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = simd::squared_distance(centroids.row(c), p);
    if (d < best.distance) best = {c, d};
  }
  return best;
}

double objective(const Matrix& points, const Matrix& centroids,
                 const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i)
    total += simd::squared_distance(points.row(i), centroids.row(labels[i]));
  return total;
}

}  // namespace

ClusterAssignment kmeans(const Matrix& points, const std::vector<std::string>& ids,
                         std::size_t k, std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = points.rows();
  if (ids.size() != n) throw DimensionError("kmeans: id count != point count");
  if (k == 0) throw ConfigError("kmeans: K must be >= 1");
  if (n < k)
    throw ConfigError("kmeans: " + std::to_string(n) + " points cannot form " +
                      std::to_string(k) + " clusters");

  Rng rng = make_rng(seed, "kmeans");
  Matrix centroids(0, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centroids.append_row(points.row(first(rng)));
  std::vector<double> d2(n);
  while (centroids.rows() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = nearest(centroids, points.row(i)).distance;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double r = u(rng);
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);  // every point already coincides with a centroid
    }
    centroids.append_row(points.row(pick));
  }

  ClusterAssignment out;
  out.k = k;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = nearest(centroids, points.row(i)).index;
  out.objective_trace.push_back(objective(points, centroids, labels));

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Update step.
    Matrix sums(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      simd::axpy(1.0, points.row(i), sums.row(labels[i]));
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t t = 0; t < points.cols(); ++t)
        centroids(c, t) = sums(c, t) / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double d = simd::squared_distance(points.row(i), centroids.row(labels[i]));
        if (d > far_d) far_d = d, far = i;
      }
      const auto p = points.row(far);
      std::copy(p.begin(), p.end(), centroids.row(c).begin());
      --counts[labels[far]];
      labels[far] = c;
      counts[c] = 1;
    }

    // Assignment step.
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t l = nearest(centroids, points.row(i)).index;
      if (l != labels[i]) changed = true;
      labels[i] = l;
    }
    out.objective_trace.push_back(objective(points, centroids, labels));
    out.iterations = iter + 1;
    if (!changed) break;
  }

  out.centroids = std::move(centroids);
  for (std::size_t i = 0; i < n; ++i) out.assignment[ids[i]] = labels[i];
  return out;
}

Matrix user_feature_means(const SplitCohort& split) {
  Matrix means(0, split.feature_dim);
  for (const auto& [_, u] : split.users) {
    std::vector<double> m(split.feature_dim, 0.0);
    for (std::size_t i = 0; i < u.train.size(); ++i)
      simd::axpy(1.0, u.train.features.row(i), m);
    for (double& v : m) v /= static_cast<double>(u.train.size());
    means.append_row(m);
  }
  return means;
}

}  // namespace aspers
