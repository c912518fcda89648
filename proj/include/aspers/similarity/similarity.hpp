#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"

namespace aspers {

struct PretrainOptions {
  std::size_t epochs = 50;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
};

struct PretrainedEncoder {
  Mlp encoder;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};

struct PretrainResult {
  PretrainedEncoder encoder;
  Mlp head;
  // Pooled train loss before training, then after each epoch.
  std::vector<double> loss_trace;
};

/// Supervised training of encoder + head on the pooled train rows of every
/// user except `exclude`. `linear_head` swaps the head for one linear layer
/// (the auxiliary similarity network). Throws NumericError naming the epoch
/// on divergence.
PretrainResult pretrain_population(const SplitCohort& split, const Architecture& arch,
                                   const PretrainOptions& options, std::uint64_t seed,
                                   const std::optional<std::string>& exclude = {},
                                   bool linear_head = false);

struct UserEmbedding {
  std::string user_id;
  std::vector<double> vector;
};

/// Mean encoder output over each user's train rows, in user-id order.
std::vector<UserEmbedding> embed_users(const Mlp& encoder, const SplitCohort& split);

/// Pairwise scores in [0, 1]; symmetric with a unit diagonal.
class SimilarityMatrix {
 public:
  SimilarityMatrix(std::vector<std::string> users, Matrix scores);

  const std::vector<std::string>& users() const { return users_; }
  const Matrix& scores() const { return scores_; }
  std::size_t index_of(const std::string& user) const;
  double score(const std::string& a, const std::string& b) const;
  /// s(target, j) for every j != target.
  std::map<std::string, double> row(const std::string& target) const;

 private:
  std::vector<std::string> users_;
  std::map<std::string, std::size_t> index_;
  Matrix scores_;
};

/// Raw cosine c mapped to (1 + c) / 2, diagonal fixed at 1. Throws DataError
/// naming the user when an embedding has zero norm.
SimilarityMatrix cosine_similarity_matrix(const std::vector<UserEmbedding>& embeddings);

struct PartitionRule {
  enum class Kind { Median, Threshold };
  Kind kind = Kind::Median;
  double threshold = 0.7;
};

struct SupportPartition {
  std::vector<std::string> similar;
  std::vector<std::string> dissimilar;
};

/// Splits the candidates (all j != target by default) into S(u) and D(u).
/// Median rule: s >= median of the candidates' scores goes to S. Threshold
/// rule: s >= threshold goes to S. Ties always go to S.
SupportPartition partition_support(const SimilarityMatrix& sim, const std::string& target,
                                   const PartitionRule& rule,
                                   const std::optional<std::vector<std::string>>&
                                       candidates = {});

/// `user_i,user_j,score` for every ordered pair.
void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path);

}  // namespace aspers
