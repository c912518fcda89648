#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aspers/core/matrix.hpp"
#include "aspers/data/cohort.hpp"
#include "aspers/data/support_state.hpp"
#include "aspers/rng.hpp"

namespace aspers {

/// Endless stream of row indices in [0, n): a fresh shuffle per pass.
class RowStream {
 public:
  RowStream(std::size_t n, Rng rng);
  std::size_t next();

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng rng_;
};

/// Rows of one batch term. `sources` names the user each row came from.
struct TaggedRows {
  Matrix features;
  std::vector<double> targets;
  std::vector<std::string> sources;

  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }
  void add(std::span<const double> x, double y, const std::string& source);
};

/// A mini-batch split by the term each row activates.
struct Batch {
  TaggedRows personal;
  TaggedRows similar;
  TaggedRows dissimilar;
};

struct BatchQuotas {
  std::size_t personal = 16;
  std::size_t similar = 8;
  std::size_t dissimilar = 8;
};

/// Draws batches for one target user. Personal, similar and dissimilar rows
/// come from independent PRNG streams derived from `seed`, so changing one
/// quota never changes the rows drawn for another term.
class BatchSampler {
 public:
  BatchSampler(const SplitCohort& split, std::string target, std::uint64_t seed);

  /// Personal rows cycle through shuffled passes over the target's train
  /// split. A support row picks user j in S with probability proportional to
  /// alpha_j * s(u,j) (alpha_j * (1 - s(u,j)) for D), then a uniform row of
  /// j's train split. A support quota whose set is empty or has zero total
  /// weight is moved to the personal quota.
  Batch sample(const SupportState& support, BatchQuotas quotas);

  /// Index drawn with probability proportional to
  /// `weights`. Exposed for distribution tests.
  static std::size_t pick(std::span<const double> weights, Rng& rng);

 private:
  void draw_support(const std::vector<std::string>& users,
                    const std::vector<double>& weights, std::size_t count,
                    Rng& rng, TaggedRows& out);

  const SplitCohort* split_;
  std::string target_;
  RowStream personal_;
  Rng similar_rng_;
  Rng dissimilar_rng_;
  bool warned_similar_ = false;
  bool warned_dissimilar_ = false;
};

/// Functional form: one batch from a sampler that owns the PRNG streams.
Batch sample_batch(BatchSampler& sampler, const SupportState& support,
                   BatchQuotas quotas);

}  // namespace aspers
