#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/data/sampler.hpp"
#include "aspers/data/support_state.hpp"
#include "aspers/objective/objective.hpp"
#include "aspers/similarity/similarity.hpp"

namespace aspers {

struct TrainSchedule {
  std::size_t outer_rounds = 10;
  std::size_t inner_epochs_per_round = 3;
  std::size_t batches_per_epoch = 10;
  double learning_rate = 0.01;
  double alpha_temperature = 1.0;
  std::size_t cost_subsample_cap = 256;
  // Softmax of +c as printed instead of the default softmax of -c.
  bool positive_cost_softmax = false;
  // When false Step 2 is skipped and alpha stays at its initial value.
  bool adapt_alpha = true;
  BatchQuotas quotas;
  OptimizerConfig optimizer;

  std::size_t total_steps() const {
    return outer_rounds * inner_epochs_per_round * batches_per_epoch;
  }
  void validate() const;
};

struct RoundRecord {
  std::size_t round = 0;
  LossBreakdown loss;  // mean over the round's batches
  std::map<std::string, double> costs;
  std::map<std::string, double> alpha;  // after this round's Step 2
};

struct EpochRecord {
  std::size_t round = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct History {
  std::vector<RoundRecord> rounds;
  std::vector<EpochRecord> epochs;
};

struct PersonalizeResult {
  PersonalModel model;
  SupportState support;
  History history;
};

/// Cost of support user j under the current model:
/// lambda_s s L(theta; D_j) for j in S, -lambda_d (1 - s) R(theta; D_j) for
/// j in D, both evaluated on at most `cap` train rows of j (uniformly
/// subsampled with `rng`).
double support_cost(const std::string& j, const PersonalModel& model,
                    const SplitCohort& split, const SupportState& support,
                    const ObjectiveConfig& config, const ReferenceEncoders& references,
                    std::size_t cap, Rng& rng);

/// alpha_j = softmax(-c_j / tau) (or +c_j in literal mode), computed with the
/// maximum subtracted. Throws NumericError naming the user on a non-finite
/// cost.
SupportState update_alpha(const SupportState& state,
                          const std::map<std::string, double>& costs,
                          double temperature, bool positive_cost_softmax);

/// Alternating optimization for one target. Alpha starts uniform over S u D.
/// The encoder starts from `pretrained_encoder` when given, otherwise from a
/// fresh draw; the head is always fresh. Each round runs Step 1 (SGD on the
/// three-term objective with alpha fixed) then Step 2 (costs and alpha
/// refresh). A term whose coefficient is zero or whose user set is
/// empty gets no rows.
PersonalizeResult personalize(const std::string& target, const SplitCohort& split,
                              const SupportPartition& partition,
                              const std::map<std::string, double>& sim_row,
                              const ReferenceEncoders& references,
                              const ObjectiveConfig& config, const TrainSchedule& schedule,
                              const Architecture& arch, const Mlp* pretrained_encoder,
                              std::uint64_t seed);

}  // namespace aspers
