#include "aspers/optimizer/personalize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "aspers/error.hpp"

namespace aspers {
namespace {

Matrix subsample(const UserDataset& d, std::size_t cap, Rng& rng,
                 std::vector<double>& targets) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > cap) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
  }
  targets.clear();
  for (std::size_t i : idx) targets.push_back(d.targets[i]);
  return select_rows(d.features, idx);
}

void accumulate(LossBreakdown& acc, const LossBreakdown& x) {
  acc.personal += x.personal;
  acc.transfer += x.transfer;
  acc.penalty += x.penalty;
  acc.total += x.total;
}

LossBreakdown averaged(LossBreakdown b, std::size_t n) {
  const double k = 1.0 / static_cast<double>(n);
  return {b.personal * k, b.transfer * k, b.penalty * k, b.total * k};
}

}  // namespace

void TrainSchedule::validate() const {
  if (outer_rounds < 1 || inner_epochs_per_round < 1 || batches_per_epoch < 1)
    throw ConfigError("schedule counts must be >= 1");
  if (!(alpha_temperature > 0.0)) throw ConfigError("alpha temperature must be > 0");
  if (cost_subsample_cap < 1) throw ConfigError("cost subsample cap must be >= 1");
  if (quotas.personal < 1) throw ConfigError("personal batch quota must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
}

double support_cost(const std::string& j, const PersonalModel& model,
                    const SplitCohort& split, const SupportState& support,
                    const ObjectiveConfig& config, const ReferenceEncoders& references,
                    std::size_t cap, Rng& rng) {
  std::vector<double> y;
  const Matrix x = subsample(split.at(j).train, cap, rng, y);
  const double s = support.similarity_of(j);
  if (support.is_similar(j))
    return config.lambda_s * s * mean_task_loss_value(model, x, y, config.loss);
  if (support.is_dissimilar(j))
    return -config.lambda_d * (1.0 - s) *
           mean_hinge_value(model.encoder, references.at(j), x, config.margin);
  throw ContractError("support_cost: " + j + " is not a support user of " +
                      support.target);
}

SupportState update_alpha(const SupportState& state,
                          const std::map<std::string, double>& costs, double temperature,
                          bool positive_cost_softmax) {
  if (!(temperature > 0.0)) throw ConfigError("alpha temperature must be > 0");
  SupportState next = state;
  if (state.size() == 0) return next;
  const double sign = positive_cost_softmax ? 1.0 : -1.0;
  std::map<std::string, double> logits;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [j, _] : state.alpha) {
    const auto it = costs.find(j);
    if (it == costs.end()) throw ContractError("no cost for support user " + j);
    if (!std::isfinite(it->second))
      throw NumericError("non-finite cost for support user " + j);
    const double z = sign * it->second / temperature;
    logits[j] = z;
    top = std::max(top, z);
  }
  double total = 0.0;
  for (auto& [j, z] : logits) {
    z = std::exp(z - top);
    total += z;
  }
  for (const auto& [j, e] : logits) next.alpha[j] = e / total;
  return next;
}

PersonalizeResult personalize(const std::string& target, const SplitCohort& split,
                              const SupportPartition& partition,
                              const std::map<std::string, double>& sim_row,
                              const ReferenceEncoders& references,
                              const ObjectiveConfig& config, const TrainSchedule& schedule,
                              const Architecture& arch, const Mlp* pretrained_encoder,
                              std::uint64_t seed) {
  config.validate();
  schedule.validate();
  if (split.at(target).train.size() == 0)
    throw DataError("target " + target + " has no train rows");

  PersonalizeResult result;
  result.model = init_model(split.feature_dim, arch, seed);
  if (pretrained_encoder != nullptr) result.model.encoder = *pretrained_encoder;

  SupportState support =
      SupportState::uniform(target, partition.similar, partition.dissimilar, sim_row);
  support.validate();
  if (support.size() == 0)
    spdlog::info("target {}: no support users; training on personal data only", target);

  BatchQuotas quotas = schedule.quotas;
  if (config.lambda_s == 0.0 || support.similar.empty()) quotas.similar = 0;
  if (config.lambda_d == 0.0 || support.dissimilar.empty()) quotas.dissimilar = 0;

  BatchSampler sampler(split, target, seed);
  Optimizer enc_opt(schedule.optimizer, schedule.learning_rate);
  Optimizer head_opt(schedule.optimizer, schedule.learning_rate);
  const std::uint64_t cost_seed = derive_seed(seed, "cost");

  for (std::size_t round = 0; round < schedule.outer_rounds; ++round) {
    // Step 1: parameters under fixed alpha.
    LossBreakdown round_sum;
    for (std::size_t epoch = 0; epoch < schedule.inner_epochs_per_round; ++epoch) {
      LossBreakdown epoch_sum;
      for (std::size_t b = 0; b < schedule.batches_per_epoch; ++b) {
        const Batch batch = sampler.sample(support, quotas);
        ObjectiveResult obj;
        try {
          obj = total_objective(result.model, batch, support, config, references);
          if (!std::isfinite(obj.breakdown.total))
            throw NumericError("objective is not finite");
          enc_opt.step(result.model.encoder, obj.grads.encoder);
          head_opt.step(result.model.head, obj.grads.head);
        } catch (const NumericError& e) {
          throw NumericError("target " + target + ", round " + std::to_string(round) +
                             ": " + e.what());
        }
        accumulate(epoch_sum, obj.breakdown);
      }
      const LossBreakdown epoch_mean = averaged(epoch_sum, schedule.batches_per_epoch);
      result.history.epochs.push_back({round, epoch, epoch_mean});
      accumulate(round_sum, epoch_mean);
    }

    RoundRecord record;
    record.round = round;
    record.loss = averaged(round_sum, schedule.inner_epochs_per_round);

    // Step 2: alpha under fixed parameters.
    if (schedule.adapt_alpha && support.size() > 0) {
      Rng rng(derive_seed(cost_seed, round));
      for (const auto& [j, _] : support.alpha)
        record.costs[j] = support_cost(j, result.model, split, support, config,
                                       references, schedule.cost_subsample_cap, rng);
      try {
        support = update_alpha(support, record.costs, schedule.alpha_temperature,
                               schedule.positive_cost_softmax);
      } catch (const NumericError& e) {
        throw NumericError("target " + target + ", round " + std::to_string(round) +
                           ": " + e.what());
      }
    }
    record.alpha = support.alpha;
    result.history.rounds.push_back(std::move(record));
  }
  result.support = std::move(support);
  return result;
}

}  // namespace aspers
