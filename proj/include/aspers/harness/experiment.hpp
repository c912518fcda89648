#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aspers/baselines/baselines.hpp"
#include "aspers/harness/config.hpp"
#include "aspers/harness/metrics.hpp"

namespace aspers {

/// Runs fn(0) ... fn(n-1) on up to `jobs` threads. Exceptions are collected
/// and the one from the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

/// Support candidates for the data-efficiency sweep: the
/// ceil((p/2)(U-1)) most similar and as many most dissimilar users by
/// initial score (ties by user id). nullopt when both sides together cover
/// every other user.
std::optional<std::vector<std::string>> sweep_candidates(const SimilarityMatrix& sim,
                                                         const std::string& target,
                                                         double fraction);

struct MethodRun {
  std::map<std::string, double> metric;           // per target user
  std::map<std::string, History> histories;       // "ours" and ablations only
  std::map<std::string, SupportState> supports;   // "ours" and ablations only
};

struct SweepPoint {
  double fraction = 0.0;
  MetricsReport report;
};

/// Shared pipeline state for one config. Stages run lazily and at most
/// once: data -> population pretraining -> similarity -> reference encoders.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }

  const SplitCohort& split();
  /// Generator cluster labels; empty for CSV data.
  const std::map<std::string, std::size_t>& ground_truth_clusters();
  const PretrainResult& population();
  const PretrainResult& auxiliary();
  const SimilarityMatrix& similarity();
  const ReferenceEncoders& references();
  const ClusterAssignment& clusters();

  std::uint64_t target_seed(const std::string& target) const;
  SupportPartition partition_for(const std::string& target,
                                 const std::optional<std::vector<std::string>>& candidates);

  /// Trains and evaluates one method for every target user.
  MethodRun run_method(const std::string& method,
                       const std::function<std::optional<std::vector<std::string>>(
                           const std::string&)>& candidates = {});

  MetricsReport run_methods(const std::vector<std::string>& methods,
                            std::map<std::string, MethodRun>* runs = nullptr);

  /// One "ours" report per fraction; fractions that leave some target
  /// without support users are logged and skipped.
  std::vector<SweepPoint> data_efficiency_sweep(const std::vector<double>& fractions);

 private:
  ExperimentConfig config_;
  std::optional<SplitCohort> split_;
  std::map<std::string, std::size_t> clusters_truth_;
  std::unique_ptr<PretrainResult> population_;
  std::unique_ptr<PretrainResult> auxiliary_;
  std::optional<SimilarityMatrix> similarity_;
  std::optional<ReferenceEncoders> references_;
  std::optional<ClusterAssignment> clusters_;
};

/// Full pipeline for config.methods. Writes metrics.json, similarity.csv,
/// history/<user>.jsonl, logs/, alpha_matrix.csv, influence_summary.csv
/// (when "ours" ran) and manifest.json into `out_dir`. Errors are rethrown
/// with the failing stage's name prefixed; files already written stay.
MetricsReport run_experiment(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir);

/// Sweep over config.sweep_fractions, written to out_dir/sweep.json.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& config,
                                  const std::filesystem::path& out_dir);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);
void write_manifest(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                    const std::string& command);

}  // namespace aspers
