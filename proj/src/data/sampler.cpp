#include "aspers/data/sampler.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "aspers/error.hpp"

namespace aspers {

RowStream::RowStream(std::size_t n, Rng rng) : order_(n), pos_(n), rng_(std::move(rng)) {
  if (n == 0) throw DataError("row stream over an empty set");
  std::iota(order_.begin(), order_.end(), 0);
}

std::size_t RowStream::next() {
  if (pos_ == order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  return order_[pos_++];
}

void TaggedRows::add(std::span<const double> x, double y, const std::string& source) {
  features.append_row(x);
  targets.push_back(y);
  sources.push_back(source);
}

BatchSampler::BatchSampler(const SplitCohort& split, std::string target,
                           std::uint64_t seed)
    : split_(&split),
      target_(std::move(target)),
      personal_(split.at(target_).train.size(), make_rng(seed, "rows")),
      similar_rng_(make_rng(seed, "rows/similar")),
      dissimilar_rng_(make_rng(seed, "rows/dissimilar")) {}

std::size_t BatchSampler::pick(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> u(0.0, total);
  const double r = u(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (r < acc) return i;
  }
  return last_positive;
}

void BatchSampler::draw_support(const std::vector<std::string>& users,
                                const std::vector<double>& weights, std::size_t count,
                                Rng& rng, TaggedRows& out) {
  for (std::size_t k = 0; k < count; ++k) {
    const std::string& j = users[pick(weights, rng)];
    const UserDataset& train = split_->at(j).train;
    std::uniform_int_distribution<std::size_t> row(0, train.size() - 1);
    const std::size_t r = row(rng);
    out.add(train.features.row(r), train.targets[r], j);
  }
}

Batch BatchSampler::sample(const SupportState& support, BatchQuotas quotas) {
  if (quotas.personal < 1) throw ConfigError("personal batch quota must be >= 1");

  std::vector<double> w_sim, w_dis;
  double total_sim = 0.0, total_dis = 0.0;
  for (const auto& j : support.similar) {
    w_sim.push_back(support.alpha_of(j) * support.similarity_of(j));
    total_sim += w_sim.back();
  }
  for (const auto& j : support.dissimilar) {
    w_dis.push_back(support.alpha_of(j) * (1.0 - support.similarity_of(j)));
    total_dis += w_dis.back();
  }
  if (quotas.similar > 0 && !(total_sim > 0.0)) {
    if (!warned_similar_)
      spdlog::info("target {}: no similar-user weight; similar quota moved to personal",
                   target_);
    warned_similar_ = true;
    quotas.personal += quotas.similar;
    quotas.similar = 0;
  }
  if (quotas.dissimilar > 0 && !(total_dis > 0.0)) {
    if (!warned_dissimilar_)
      spdlog::info(
          "target {}: no dissimilar-user weight; dissimilar quota moved to personal",
          target_);
    warned_dissimilar_ = true;
    quotas.personal += quotas.dissimilar;
    quotas.dissimilar = 0;
  }

  Batch batch;
  const UserDataset& own = split_->at(target_).train;
  for (std::size_t k = 0; k < quotas.personal; ++k) {
    const std::size_t r = personal_.next();
    batch.personal.add(own.features.row(r), own.targets[r], target_);
  }
  draw_support(support.similar, w_sim, quotas.similar, similar_rng_, batch.similar);
  draw_support(support.dissimilar, w_dis, quotas.dissimilar, dissimilar_rng_,
               batch.dissimilar);
  return batch;
}

Batch sample_batch(BatchSampler& sampler, const SupportState& support,
                   BatchQuotas quotas) {
  return sampler.sample(support, quotas);
}

}  // namespace aspers
