#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/objective/objective.hpp"

namespace aspers {

struct PoolSource {
  std::string user;
  double weight = 1.0;
};

/// Train rows of several users with a per-row loss weight.
struct PooledData {
  Matrix features;
  std::vector<double> targets;
  std::vector<double> weights;

  std::size_t size() const { return targets.size(); }
};

/// Concatenates the train rows of `sources` in the given order. Sources with
/// zero weight are dropped: they contribute nothing to the objective.
PooledData pool_rows(const SplitCohort& split, const std::vector<PoolSource>& sources);

enum class Trainable { All, HeadOnly };

struct PooledTrainOptions {
  std::size_t epochs = 1;
  std::size_t steps_per_epoch = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  TaskLoss loss = TaskLoss::MSE;
  Trainable trainable = Trainable::All;
  OptimizerConfig optimizer;
  // Record the full-pool weighted mean loss before training and after every
  // epoch (costs one extra pass per epoch).
  bool track_full_loss = false;
};

/// Mini-batch training on a pool. Each batch takes the next `batch_size`
/// rows of a reshuffled-per-pass stream (the "rows" stream of `seed`); the
/// batch loss is sum_i w_i loss_i / batch_size. Returns the tracked losses
/// (empty unless track_full_loss). Throws NumericError with the epoch index
/// when the loss diverges.
std::vector<double> train_pooled(PersonalModel& model, const PooledData& pool,
                                 const PooledTrainOptions& options, std::uint64_t seed);

/// sum_i w_i loss_i / sum_i w_i over the whole pool.
double pooled_loss(const PersonalModel& model, const PooledData& pool, TaskLoss loss);

std::size_t ceil_div(std::size_t a, std::size_t b);

}  // namespace aspers
