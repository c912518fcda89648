#include "aspers/objective/references.hpp"

#include "aspers/error.hpp"
#include "aspers/objective/training.hpp"

namespace aspers {

ReferenceMode reference_mode_from_string(std::string_view s) {
  if (s == "finetuned") return ReferenceMode::FineTuned;
  if (s == "population") return ReferenceMode::Population;
  throw ConfigError("unknown reference mode '" + std::string(s) + "'");
}

ReferenceEncoders build_reference_encoders(const Mlp& population_encoder,
                                           const Mlp& population_head,
                                           const SplitCohort& split,
                                           const std::vector<std::string>& users,
                                           const ReferenceOptions& options,
                                           std::uint64_t seed) {
  ReferenceEncoders refs;
  for (const auto& j : users) {
    if (options.mode == ReferenceMode::Population || options.epochs == 0) {
      refs.insert(j, population_encoder);
      continue;
    }
    PersonalModel model{population_encoder, population_head};
    const PooledData pool = pool_rows(split, {{j, 1.0}});
    PooledTrainOptions opts;
    opts.epochs = options.epochs;
    opts.batch_size = options.batch_size;
    opts.steps_per_epoch = ceil_div(pool.size(), options.batch_size);
    opts.learning_rate = options.learning_rate;
    opts.loss = loss_for(split.task);
    opts.optimizer = options.optimizer;
    train_pooled(model, pool, opts, derive_seed(seed, "reference/" + j));
    refs.insert(j, std::move(model.encoder));
  }
  return refs;
}

}  // namespace aspers
