#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/objective/objective.hpp"

namespace aspers {

enum class ReferenceMode { FineTuned, Population };

ReferenceMode reference_mode_from_string(std::string_view s);

struct ReferenceOptions {
  ReferenceMode mode = ReferenceMode::FineTuned;
  std::size_t epochs = 5;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
};

/// phi_j for each listed user: the population encoder (with its head)
/// fine-tuned on j's own train rows, then frozen. Population mode copies the
/// population encoder for everyone.
ReferenceEncoders build_reference_encoders(const Mlp& population_encoder,
                                           const Mlp& population_head,
                                           const SplitCohort& split,
                                           const std::vector<std::string>& users,
                                           const ReferenceOptions& options,
                                           std::uint64_t seed);

}  // namespace aspers
