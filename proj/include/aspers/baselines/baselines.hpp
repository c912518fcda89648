#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aspers/baselines/kmeans.hpp"
#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/objective/training.hpp"
#include "aspers/optimizer/personalize.hpp"
#include "aspers/similarity/similarity.hpp"

namespace aspers {

enum class BaselineKind { Pop, PerPure, PerMerge, PerTrans, PerCluster, PerWeighted };
enum class AblationKind { NoPenalty, NoTransfer, NoAlpha };

std::string_view to_string(BaselineKind k);
std::string_view to_string(AblationKind k);
std::optional<BaselineKind> baseline_from_string(std::string_view s);
std::optional<AblationKind> ablation_from_string(std::string_view s);

/// Budget shared by every baseline: the method's total SGD steps
/// (rounds x epochs x batches) at its learning rate, with batches the size
/// of the method's full batch.
PooledTrainOptions baseline_options(const TrainSchedule& schedule, Task task,
                                    Trainable trainable = Trainable::All);

/// Fresh model trained on `sources` (in order) with `options`.
PersonalModel train_on_sources(const SplitCohort& split,
                               const std::vector<PoolSource>& sources,
                               PersonalModel init, const PooledTrainOptions& options,
                               std::uint64_t seed);

/// Plain SGD on the target's own rows from a given initial model, with the
/// method's personal batch size. The reference point for the
/// lambda_s = lambda_d = 0 reduction of personalize.
PersonalModel train_personal_sgd(const SplitCohort& split, const std::string& target,
                                 PersonalModel init, const TrainSchedule& schedule,
                                 std::uint64_t seed);

/// Pooled data of every user except `exclude`.
PersonalModel train_pop(const SplitCohort& split, const Architecture& arch,
                        const TrainSchedule& schedule, std::uint64_t seed,
                        const std::string& exclude);

PersonalModel train_per_pure(const SplitCohort& split, const std::string& target,
                             const Architecture& arch, const TrainSchedule& schedule,
                             std::uint64_t seed);

/// Target first, then every other user, all with weight 1.
PersonalModel train_per_merge(const SplitCohort& split, const std::string& target,
                              const Architecture& arch, const TrainSchedule& schedule,
                              std::uint64_t seed);

/// Encoder and head from a population model that excluded the target; the
/// head (or, with `full_finetune`, the whole model) is tuned on the target.
/// Throws ConfigError when `pretrained` is null.
PersonalModel train_per_trans(const SplitCohort& split, const std::string& target,
                              const PretrainResult* pretrained,
                              const TrainSchedule& schedule, std::uint64_t seed,
                              bool full_finetune = false);

/// Target first, then the other members of its cluster.
PersonalModel train_per_cluster(const SplitCohort& split, const std::string& target,
                                const ClusterAssignment& assignment,
                                const Architecture& arch, const TrainSchedule& schedule,
                                std::uint64_t seed);

/// Target rows weighted 1, user j's rows weighted by the fixed s(u,j).
PersonalModel train_per_weighted(const SplitCohort& split, const std::string& target,
                                 const std::map<std::string, double>& sim_row,
                                 const Architecture& arch, const TrainSchedule& schedule,
                                 std::uint64_t seed);

/// Config and schedule with the ablated piece removed: NoPenalty sets
/// lambda_d = 0, NoTransfer sets lambda_s = 0, NoAlpha freezes alpha.
std::pair<ObjectiveConfig, TrainSchedule> ablate(AblationKind kind,
                                                 ObjectiveConfig config,
                                                 TrainSchedule schedule);

PersonalizeResult run_ablation(AblationKind kind, const std::string& target,
                               const SplitCohort& split, const SupportPartition& partition,
                               const std::map<std::string, double>& sim_row,
                               const ReferenceEncoders& references,
                               const ObjectiveConfig& config, const TrainSchedule& schedule,
                               const Architecture& arch, const Mlp* pretrained_encoder,
                               std::uint64_t seed);

}  // namespace aspers
