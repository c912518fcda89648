#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/data/synthetic.hpp"
#include "aspers/objective/objective.hpp"
#include "aspers/objective/references.hpp"
#include "aspers/optimizer/personalize.hpp"
#include "aspers/similarity/similarity.hpp"

namespace aspers {

struct DataSource {
  std::optional<std::filesystem::path> csv;
  std::optional<SyntheticSpec> synthetic;
};

struct SimilarityOptions {
  PretrainOptions auxiliary{30, 0.01, 32, {}};
  PartitionRule rule;
  // Reuse the population encoder instead of training a separate
  // auxiliary network.
  bool share_encoder = false;
};

struct ExperimentConfig {
  DataSource data;
  Task task = Task::Regression;
  double split_fraction = 0.5;
  Normalization normalization = Normalization::Pooled;
  Architecture architecture;
  ObjectiveConfig objective;
  TrainSchedule schedule;
  PretrainOptions pretrain;
  SimilarityOptions similarity;
  ReferenceOptions reference;
  OptimizerConfig optimizer;
  std::vector<std::string> methods{"ours"};
  std::size_t kmeans_k = 5;
  std::size_t kmeans_max_iters = 100;
  bool per_trans_full_finetune = false;
  std::vector<double> sweep_fractions{0.25, 0.5, 1.0};
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  std::size_t jobs = 1;

  /// Strict parse: unknown keys and malformed values throw ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Pushes the shared optimizer and task into the nested option structs
  /// and checks every invariant.
  void finalize();
  std::string hash() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Method names accepted in `methods`: "ours", the baselines
/// (pop, per_pure, per_merge, per_trans, per_cluster, per_weighted) and the
/// ablations (no_penalty, no_transfer, no_alpha).
bool is_known_method(const std::string& name);

}  // namespace aspers
