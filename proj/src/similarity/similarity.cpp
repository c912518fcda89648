#include "aspers/similarity/similarity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "aspers/error.hpp"
#include "aspers/objective/training.hpp"
#include "aspers/simd/kernels.hpp"

namespace aspers {

PretrainResult pretrain_population(const SplitCohort& split, const Architecture& arch,
                                   const PretrainOptions& options, std::uint64_t seed,
                                   const std::optional<std::string>& exclude,
                                   bool linear_head) {
  std::vector<PoolSource> sources;
  for (const auto& id : split.user_ids())
    if (!exclude || id != *exclude) sources.push_back({id, 1.0});
  const std::size_t required = exclude ? 1 : 2;
  if (sources.size() < required)
    throw DataError("population pretraining needs at least " +
                    std::to_string(required) + " user(s)");

  Architecture head_arch = arch;
  if (linear_head) head_arch.head_hidden = 0;
  PersonalModel model = init_model(split.feature_dim, head_arch, seed);
  const PooledData pool = pool_rows(split, sources);

  PooledTrainOptions opts;
  opts.epochs = options.epochs;
  opts.steps_per_epoch = ceil_div(pool.size(), options.batch_size);
  opts.batch_size = options.batch_size;
  opts.learning_rate = options.learning_rate;
  opts.loss = loss_for(split.task);
  opts.optimizer = options.optimizer;
  opts.track_full_loss = true;
  std::vector<double> trace = train_pooled(model, pool, opts, seed);
  return {PretrainedEncoder{std::move(model.encoder), seed, options.epochs},
          std::move(model.head), std::move(trace)};
}

std::vector<UserEmbedding> embed_users(const Mlp& encoder, const SplitCohort& split) {
  std::vector<UserEmbedding> out;
  for (const auto& [id, u] : split.users) {
    const Matrix e = predict(encoder, u.train.features);
    std::vector<double> mean(e.cols(), 0.0);
    for (std::size_t i = 0; i < e.rows(); ++i)
      for (std::size_t k = 0; k < e.cols(); ++k) mean[k] += e(i, k);
    for (double& v : mean) v /= static_cast<double>(e.rows());
    out.push_back({id, std::move(mean)});
  }
  return out;
}

SimilarityMatrix::SimilarityMatrix(std::vector<std::string> users, Matrix scores)
    : users_(std::move(users)), scores_(std::move(scores)) {
  if (scores_.rows() != users_.size() || scores_.cols() != users_.size())
    throw DimensionError("similarity matrix shape does not match user count");
  for (std::size_t i = 0; i < users_.size(); ++i) index_[users_[i]] = i;
}

std::size_t SimilarityMatrix::index_of(const std::string& user) const {
  const auto it = index_.find(user);
  if (it == index_.end()) throw DataError("user " + user + " not in similarity matrix");
  return it->second;
}

double SimilarityMatrix::score(const std::string& a, const std::string& b) const {
  return scores_(index_of(a), index_of(b));
}

std::map<std::string, double> SimilarityMatrix::row(const std::string& target) const {
  const std::size_t t = index_of(target);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < users_.size(); ++j)
    if (j != t) out[users_[j]] = scores_(t, j);
  return out;
}

SimilarityMatrix cosine_similarity_matrix(const std::vector<UserEmbedding>& embeddings) {
  const std::size_t n = embeddings.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = embeddings[i].vector;
    norms[i] = std::sqrt(simd::dot(v, v));
    if (!(norms[i] > 0.0))
      throw DataError("embedding of user " + embeddings[i].user_id + " has zero norm");
  }
  Matrix scores(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    scores(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = std::clamp(
          simd::dot(embeddings[i].vector, embeddings[j].vector) / (norms[i] * norms[j]),
          -1.0, 1.0);
      scores(i, j) = scores(j, i) = (1.0 + c) / 2.0;
    }
  }
  std::vector<std::string> users;
  for (const auto& e : embeddings) users.push_back(e.user_id);
  return SimilarityMatrix(std::move(users), std::move(scores));
}

SupportPartition partition_support(const SimilarityMatrix& sim, const std::string& target,
                                   const PartitionRule& rule,
                                   const std::optional<std::vector<std::string>>& candidates) {
  const auto row = sim.row(target);
  std::vector<std::pair<std::string, double>> pool;
  if (candidates) {
    for (const auto& j : *candidates) {
      if (j == target) continue;
      const auto it = row.find(j);
      if (it == row.end()) throw DataError("candidate " + j + " not in similarity matrix");
      pool.emplace_back(j, it->second);
    }
    std::sort(pool.begin(), pool.end());
  } else {
    pool.assign(row.begin(), row.end());
  }

  SupportPartition out;
  if (pool.empty()) return out;
  double boundary = rule.threshold;
  if (rule.kind == PartitionRule::Kind::Median) {
    std::vector<double> s;
    for (const auto& [_, v] : pool) s.push_back(v);
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    boundary = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
  }
  for (const auto& [j, v] : pool) (v >= boundary ? out.similar : out.dissimilar).push_back(j);
  if (out.dissimilar.empty())
    spdlog::info("target {}: every support user scored >= {:.6g}; D(u) is empty", target,
                 boundary);
  return out;
}

void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_i,user_j,score\n";
  char buf[64];
  for (std::size_t i = 0; i < sim.users().size(); ++i)
    for (std::size_t j = 0; j < sim.users().size(); ++j) {
      const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), sim.scores()(i, j));
      out << sim.users()[i] << ',' << sim.users()[j] << ',' << std::string_view(buf, p - buf)
          << '\n';
    }
}

}  // namespace aspers
