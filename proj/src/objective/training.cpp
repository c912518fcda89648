#include "aspers/objective/training.hpp"

#include <cmath>

#include "aspers/data/sampler.hpp"
#include "aspers/error.hpp"

namespace aspers {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

PooledData pool_rows(const SplitCohort& split, const std::vector<PoolSource>& sources) {
  PooledData pool;
  pool.features = Matrix(0, split.feature_dim);
  for (const auto& src : sources) {
    if (src.weight == 0.0) continue;
    if (src.weight < 0.0) throw ContractError("negative pool weight for " + src.user);
    const UserDataset& train = split.at(src.user).train;
    for (std::size_t i = 0; i < train.size(); ++i) {
      pool.features.append_row(train.features.row(i));
      pool.targets.push_back(train.targets[i]);
      pool.weights.push_back(src.weight);
    }
  }
  return pool;
}

double pooled_loss(const PersonalModel& model, const PooledData& pool, TaskLoss loss) {
  double wsum = 0.0;
  for (double w : pool.weights) wsum += w;
  std::vector<double> coeff(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) coeff[i] = pool.weights[i] / wsum;
  // Loss value only; the gradient is discarded.
  return weighted_task_loss(model, pool.features, pool.targets, coeff, loss, false).loss;
}

std::vector<double> train_pooled(PersonalModel& model, const PooledData& pool,
                                 const PooledTrainOptions& options, std::uint64_t seed) {
  if (pool.size() == 0) throw DataError("training pool is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<double> trace;
  if (options.track_full_loss) trace.push_back(pooled_loss(model, pool, options.loss));

  RowStream stream(pool.size(), make_rng(seed, "rows"));
  Optimizer enc_opt(options.optimizer, options.learning_rate);
  Optimizer head_opt(options.optimizer, options.learning_rate);
  const bool train_encoder = options.trainable == Trainable::All;
  const double inv_batch = 1.0 / static_cast<double>(options.batch_size);

  std::vector<std::size_t> idx(options.batch_size);
  std::vector<double> y(options.batch_size), coeff(options.batch_size);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t step = 0; step < options.steps_per_epoch; ++step) {
      for (std::size_t k = 0; k < options.batch_size; ++k) {
        idx[k] = stream.next();
        y[k] = pool.targets[idx[k]];
        coeff[k] = pool.weights[idx[k]] * inv_batch;
      }
      const Matrix x = select_rows(pool.features, idx);
      TermResult r;
      try {
        r = weighted_task_loss(model, x, y, coeff, options.loss, train_encoder);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (train_encoder) enc_opt.step(model.encoder, r.grads.encoder);
      head_opt.step(model.head, r.grads.head);
    }
    if (options.track_full_loss) {
      const double l = pooled_loss(model, pool, options.loss);
      if (!std::isfinite(l))
        throw NumericError("epoch " + std::to_string(epoch) + ": loss diverged");
      trace.push_back(l);
    }
  }
  return trace;
}

}  // namespace aspers
