#pragma once

#include <map>
#include <span>
#include <string>

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/data/sampler.hpp"
#include "aspers/data/support_state.hpp"

namespace aspers {

enum class TaskLoss { MSE, BCE };

TaskLoss loss_for(Task task);

struct ObjectiveConfig {
  double lambda_p = 1.0;
  double lambda_s = 0.5;
  double lambda_d = 0.1;
  double margin = 1.0;
  TaskLoss loss = TaskLoss::MSE;

  void validate() const;
};

struct LossBreakdown {
  double personal = 0.0;
  double transfer = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

struct TermResult {
  double loss = 0.0;
  ModelGrad grads;
};

/// Frozen per-user encoders phi_j used by the dissimilar-user penalty.
class ReferenceEncoders {
 public:
  void insert(const std::string& user, Mlp encoder);
  bool contains(const std::string& user) const { return encoders_.contains(user); }
  /// Throws ConfigError when no encoder is cached for `user`.
  const Mlp& at(const std::string& user) const;
  std::size_t size() const { return encoders_.size(); }

 private:
  std::map<std::string, Mlp> encoders_;
};

/// sum_i coeff_i * loss(model(x_i), y_i), gradients into encoder and head.
/// With `encoder_grad` false the encoder gradient is left at zero and the
/// encoder backward pass is skipped.
TermResult weighted_task_loss(const PersonalModel& model, const Matrix& x,
                              std::span<const double> y, std::span<const double> coeff,
                              TaskLoss loss, bool encoder_grad = true);

/// Mean loss over the rows. Throws ContractError for an empty set and for
/// BCE targets outside {0, 1}.
TermResult task_loss(const PersonalModel& model, const Matrix& x,
                     std::span<const double> y, TaskLoss loss);

/// sum_j alpha_j s(u,j) * mean loss over j's rows. Every row must come from
/// a member of S(u).
TermResult transfer_loss(const PersonalModel& model, const TaggedRows& rows,
                         const SupportState& support, TaskLoss loss);

/// max(0, margin - squared_distance).
double hinge(double squared_distance, double margin);

/// sum_j alpha_j (1 - s(u,j)) * mean_x max(0, m - |phi_u(x) - phi_j(x)|^2).
/// Only the encoder receives gradient; the head gradient is all zeros.
TermResult dissimilar_penalty(const PersonalModel& model, const TaggedRows& rows,
                              const ReferenceEncoders& references,
                              const SupportState& support, double margin);

struct ObjectiveResult {
  LossBreakdown breakdown;
  ModelGrad grads;
};

/// lambda_p * personal + lambda_s * transfer + lambda_d * penalty, each term
/// evaluated on its own slice of the batch.
ObjectiveResult total_objective(const PersonalModel& model, const Batch& batch,
                                const SupportState& support,
                                const ObjectiveConfig& config,
                                const ReferenceEncoders& references);

/// Loss values without gradients, used for support costs and evaluation.
double mean_task_loss_value(const PersonalModel& model, const Matrix& x,
                            std::span<const double> y, TaskLoss loss);
double mean_hinge_value(const Mlp& encoder, const Mlp& reference, const Matrix& x,
                        double margin);

}  // namespace aspers
