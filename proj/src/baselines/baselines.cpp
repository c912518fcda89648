#include "aspers/baselines/baselines.hpp"

#include "aspers/error.hpp"

namespace aspers {

std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Pop: return "pop";
    case BaselineKind::PerPure: return "per_pure";
    case BaselineKind::PerMerge: return "per_merge";
    case BaselineKind::PerTrans: return "per_trans";
    case BaselineKind::PerCluster: return "per_cluster";
    case BaselineKind::PerWeighted: return "per_weighted";
  }
  return "?";
}

std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::NoPenalty: return "no_penalty";
    case AblationKind::NoTransfer: return "no_transfer";
    case AblationKind::NoAlpha: return "no_alpha";
  }
  return "?";
}

std::optional<BaselineKind> baseline_from_string(std::string_view s) {
  for (auto k : {BaselineKind::Pop, BaselineKind::PerPure, BaselineKind::PerMerge,
                 BaselineKind::PerTrans, BaselineKind::PerCluster, BaselineKind::PerWeighted})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<AblationKind> ablation_from_string(std::string_view s) {
  for (auto k : {AblationKind::NoPenalty, AblationKind::NoTransfer, AblationKind::NoAlpha})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

PooledTrainOptions baseline_options(const TrainSchedule& schedule, Task task,
                                    Trainable trainable) {
  PooledTrainOptions o;
  o.epochs = schedule.outer_rounds * schedule.inner_epochs_per_round;
  o.steps_per_epoch = schedule.batches_per_epoch;
  o.batch_size =
      schedule.quotas.personal + schedule.quotas.similar + schedule.quotas.dissimilar;
  o.learning_rate = schedule.learning_rate;
  o.loss = loss_for(task);
  o.trainable = trainable;
  o.optimizer = schedule.optimizer;
  return o;
}

PersonalModel train_on_sources(const SplitCohort& split,
                               const std::vector<PoolSource>& sources,
                               PersonalModel init, const PooledTrainOptions& options,
                               std::uint64_t seed) {
  const PooledData pool = pool_rows(split, sources);
  train_pooled(init, pool, options, seed);
  return init;
}

PersonalModel train_personal_sgd(const SplitCohort& split, const std::string& target,
                                 PersonalModel init, const TrainSchedule& schedule,
                                 std::uint64_t seed) {
  PooledTrainOptions o = baseline_options(schedule, split.task);
  o.batch_size = schedule.quotas.personal;
  return train_on_sources(split, {{target, 1.0}}, std::move(init), o, seed);
}

PersonalModel train_pop(const SplitCohort& split, const Architecture& arch,
                        const TrainSchedule& schedule, std::uint64_t seed,
                        const std::string& exclude) {
  std::vector<PoolSource> sources;
  for (const auto& id : split.user_ids())
    if (id != exclude) sources.push_back({id, 1.0});
  if (sources.empty()) throw DataError("Pop baseline: no non-target users");
  return train_on_sources(split, sources, init_model(split.feature_dim, arch, seed),
                          baseline_options(schedule, split.task), seed);
}

PersonalModel train_per_pure(const SplitCohort& split, const std::string& target,
                             const Architecture& arch, const TrainSchedule& schedule,
                             std::uint64_t seed) {
  return train_on_sources(split, {{target, 1.0}}, init_model(split.feature_dim, arch, seed),
                          baseline_options(schedule, split.task), seed);
}

PersonalModel train_per_merge(const SplitCohort& split, const std::string& target,
                              const Architecture& arch, const TrainSchedule& schedule,
                              std::uint64_t seed) {
  std::vector<PoolSource> sources{{target, 1.0}};
  for (const auto& id : split.user_ids())
    if (id != target) sources.push_back({id, 1.0});
  return train_on_sources(split, sources, init_model(split.feature_dim, arch, seed),
                          baseline_options(schedule, split.task), seed);
}

PersonalModel train_per_trans(const SplitCohort& split, const std::string& target,
                              const PretrainResult* pretrained,
                              const TrainSchedule& schedule, std::uint64_t seed,
                              bool full_finetune) {
  if (pretrained == nullptr)
    throw ConfigError("PerTrans baseline requires a pretrained population model");
  PersonalModel init{pretrained->encoder.encoder, pretrained->head};
  return train_on_sources(
      split, {{target, 1.0}}, std::move(init),
      baseline_options(schedule, split.task,
                       full_finetune ? Trainable::All : Trainable::HeadOnly),
      seed);
}

PersonalModel train_per_cluster(const SplitCohort& split, const std::string& target,
                                const ClusterAssignment& assignment,
                                const Architecture& arch, const TrainSchedule& schedule,
                                std::uint64_t seed) {
  const auto it = assignment.assignment.find(target);
  if (it == assignment.assignment.end())
    throw DataError("PerCluster: target " + target + " has no cluster");
  std::vector<PoolSource> sources{{target, 1.0}};
  for (const auto& [id, c] : assignment.assignment)
    if (id != target && c == it->second) sources.push_back({id, 1.0});
  return train_on_sources(split, sources, init_model(split.feature_dim, arch, seed),
                          baseline_options(schedule, split.task), seed);
}

PersonalModel train_per_weighted(const SplitCohort& split, const std::string& target,
                                 const std::map<std::string, double>& sim_row,
                                 const Architecture& arch, const TrainSchedule& schedule,
                                 std::uint64_t seed) {
  std::vector<PoolSource> sources{{target, 1.0}};
  for (const auto& id : split.user_ids()) {
    if (id == target) continue;
    const auto it = sim_row.find(id);
    if (it == sim_row.end()) throw DataError("PerWeighted: no similarity for " + id);
    sources.push_back({id, it->second});
  }
  return train_on_sources(split, sources, init_model(split.feature_dim, arch, seed),
                          baseline_options(schedule, split.task), seed);
}

std::pair<ObjectiveConfig, TrainSchedule> ablate(AblationKind kind, ObjectiveConfig config,
                                                 TrainSchedule schedule) {
  switch (kind) {
    case AblationKind::NoPenalty:
      config.lambda_d = 0.0;
      break;
    case AblationKind::NoTransfer:
      config.lambda_s = 0.0;
      break;
    case AblationKind::NoAlpha:
      schedule.adapt_alpha = false;
      break;
  }
  return {config, schedule};
}

PersonalizeResult run_ablation(AblationKind kind, const std::string& target,
                               const SplitCohort& split, const SupportPartition& partition,
                               const std::map<std::string, double>& sim_row,
                               const ReferenceEncoders& references,
                               const ObjectiveConfig& config, const TrainSchedule& schedule,
                               const Architecture& arch, const Mlp* pretrained_encoder,
                               std::uint64_t seed) {
  const auto [cfg, sched] = ablate(kind, config, schedule);
  return personalize(target, split, partition, sim_row, references, cfg, sched, arch,
                     pretrained_encoder, seed);
}

}  // namespace aspers
