#include <cmath>

#include "doctest.h"

#include "aspers/baselines/baselines.hpp"
#include "aspers/data/synthetic.hpp"
#include "aspers/error.hpp"
#include "aspers/objective/references.hpp"
#include "aspers/optimizer/personalize.hpp"

using namespace aspers;

namespace {

const Architecture kArch{{8, 4}, 4};

struct Fixture {
  SplitCohort split;
  PretrainResult pop;
  ReferenceEncoders refs;
  SimilarityMatrix sim{{}, Matrix()};

  Fixture() {
    SyntheticSpec spec;
    spec.users_per_cluster = 3;
    spec.samples_per_user = 30;
    spec.feature_dim = 3;
    spec.feature_shift = 0.5;
    spec.seed = 12;
    split = chronological_split(generate_synthetic(spec).cohort, 0.5);
    normalize_features(split, Normalization::Pooled);
    PretrainOptions o;
    o.epochs = 10;
    pop = pretrain_population(split, kArch, o, 1);
    refs = build_reference_encoders(pop.encoder.encoder, pop.head, split, split.user_ids(),
                                    ReferenceOptions{}, 2);
    sim = cosine_similarity_matrix(embed_users(pop.encoder.encoder, split));
  }

  SupportPartition partition(const std::string& t) const {
    return partition_support(sim, t, {});
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

TrainSchedule small_schedule() {
  TrainSchedule s;
  s.outer_rounds = 4;
  s.inner_epochs_per_round = 2;
  s.batches_per_epoch = 5;
  s.quotas = {6, 4, 4};
  return s;
}

PersonalModel constant_model(double c) {
  PersonalModel m = init_model(3, kArch, 1);
  auto& out = m.head.mutable_layer(m.head.depth() - 1);
  out.weights.fill(0.0);
  out.bias[0] = c;
  return m;
}

}  // namespace

TEST_CASE("support cost") {
  SplitCohort split = fixture().split;
  for (double& y : split.users.at("u001").train.targets) y = 0.75;
  auto support = SupportState::uniform("u000", {"u001"}, {"u002"},
                                       {{"u001", 0.8}, {"u002", 0.3}});
  ObjectiveConfig cfg{1.0, 0.5, 0.2, 1.5, TaskLoss::MSE};
  Rng rng(1);

  SUBCASE("similar user with zero error") {
    CHECK(support_cost("u001", constant_model(0.75), split, support, cfg, fixture().refs, 256,
                       rng) == 0.0);
  }
  SUBCASE("similar user cost is lambda_s s L") {
    auto m = constant_model(1.75);
    CHECK(support_cost("u001", m, split, support, cfg, fixture().refs, 256, rng) ==
          doctest::Approx(0.5 * 0.8 * 1.0));
  }
  SUBCASE("dissimilar user beyond the margin") {
    cfg.margin = 1e-12;
    auto m = init_model(3, kArch, 77);
    CHECK(support_cost("u002", m, split, support, cfg, fixture().refs, 256, rng) == 0.0);
  }
  SUBCASE("dissimilar user at zero distance") {
    auto m = init_model(3, kArch, 77);
    ReferenceEncoders same;
    same.insert("u002", m.encoder);
    CHECK(support_cost("u002", m, split, support, cfg, same, 256, rng) ==
          doctest::Approx(-0.2 * 0.7 * 1.5));
  }
  SUBCASE("non-support user") {
    CHECK_THROWS_AS(support_cost("u003", constant_model(0), split, support, cfg,
                                 fixture().refs, 256, rng),
                    ContractError);
  }
  SUBCASE("subsampling is seeded") {
    auto m = init_model(3, kArch, 5);
    Rng a(9), b(9);
    CHECK(support_cost("u001", m, split, support, cfg, fixture().refs, 4, a) ==
          support_cost("u001", m, split, support, cfg, fixture().refs, 4, b));
  }
}

TEST_CASE("alpha update") {
  auto s = SupportState::uniform("t", {"a"}, {"b"}, {{"a", 0.9}, {"b", 0.1}});

  SUBCASE("equal costs give uniform weights") {
    auto n = update_alpha(s, {{"a", 0.3}, {"b", 0.3}}, 1.0, false);
    CHECK(n.alpha.at("a") == doctest::Approx(0.5));
    CHECK(n.alpha.at("b") == doctest::Approx(0.5));
  }
  SUBCASE("costs 0 and ln 3") {
    auto n = update_alpha(s, {{"a", 0.0}, {"b", std::log(3.0)}}, 1.0, false);
    CHECK(n.alpha.at("a") == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(n.alpha.at("b") == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("positive-cost mode flips the preference") {
    auto n = update_alpha(s, {{"a", 0.0}, {"b", std::log(3.0)}}, 1.0, true);
    CHECK(n.alpha.at("a") == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("high temperature approaches uniform") {
    auto n = update_alpha(s, {{"a", -50.0}, {"b", 80.0}}, 1e6, false);
    CHECK(std::abs(n.alpha.at("a") - 0.5) < 1e-3);
    CHECK(std::abs(n.alpha.at("b") - 0.5) < 1e-3);
  }
  SUBCASE("extreme costs stay finite") {
    auto n = update_alpha(s, {{"a", -1e6}, {"b", 1e6}}, 1.0, false);
    CHECK(n.alpha.at("a") == 1.0);
    CHECK(n.alpha.at("b") == 0.0);
    CHECK_NOTHROW(n.validate());
  }
  SUBCASE("non-finite cost names the user") {
    try {
      update_alpha(s, {{"a", 0.0}, {"b", std::nan("")}}, 1.0, false);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
  }
  SUBCASE("missing cost") {
    CHECK_THROWS_AS(update_alpha(s, {{"a", 0.0}}, 1.0, false), ContractError);
  }
}

TEST_CASE("personalize is deterministic and keeps alpha on the simplex") {
  const auto& f = fixture();
  auto sched = small_schedule();
  auto run = [&] {
    return personalize("u000", f.split, f.partition("u000"), f.sim.row("u000"), f.refs,
                       ObjectiveConfig{}, sched, kArch, &f.pop.encoder.encoder, 3);
  };
  auto a = run();
  auto b = run();
  CHECK(a.model.same_parameters(b.model));
  REQUIRE(a.history.rounds.size() == 4);
  CHECK(a.history.epochs.size() == 8);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(a.history.rounds[r].alpha == b.history.rounds[r].alpha);
    const auto& rec = a.history.rounds[r];
    double sum = 0.0, lo = 1.0;
    for (const auto& [_, v] : rec.alpha) {
      sum += v;
      lo = std::min(lo, v);
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(lo > 0.0);
    for (const auto& [i, ci] : rec.costs)
      for (const auto& [j, cj] : rec.costs)
        if (ci < cj) CHECK(rec.alpha.at(i) > rec.alpha.at(j));
    const auto& l = rec.loss;
    CHECK(l.total == doctest::Approx(l.personal + 0.5 * l.transfer + 0.1 * l.penalty));
  }
  CHECK(a.support.alpha == a.history.rounds.back().alpha);
  CHECK(a.model.encoder.id() != f.pop.encoder.encoder.id());
}

TEST_CASE("personalize without support terms is personal SGD") {
  const auto& f = fixture();
  auto sched = small_schedule();
  sched.outer_rounds = 1;
  const std::uint64_t seed = 21;
  PersonalModel init{f.pop.encoder.encoder, init_head(kArch, seed)};
  auto reference = train_personal_sgd(f.split, "u001", init, sched, seed);

  SUBCASE("lambda_s = lambda_d = 0") {
    ObjectiveConfig cfg{1.0, 0.0, 0.0, 1.0, TaskLoss::MSE};
    auto r = personalize("u001", f.split, f.partition("u001"), f.sim.row("u001"), f.refs, cfg,
                         sched, kArch, &f.pop.encoder.encoder, seed);
    CHECK(r.model.same_parameters(reference));
  }
  SUBCASE("empty support set") {
    auto r = personalize("u001", f.split, SupportPartition{}, {}, f.refs, ObjectiveConfig{},
                         sched, kArch, &f.pop.encoder.encoder, seed);
    CHECK(r.model.same_parameters(reference));
    CHECK(r.support.alpha.empty());
  }
}

TEST_CASE("divergence reports the round") {
  const auto& f = fixture();
  auto sched = small_schedule();
  sched.learning_rate = 1e8;
  try {
    personalize("u000", f.split, f.partition("u000"), f.sim.row("u000"), f.refs,
                ObjectiveConfig{}, sched, kArch, &f.pop.encoder.encoder, 3);
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("round") != std::string::npos);
  }
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  s.alpha_temperature = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.quotas.personal = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(TrainSchedule{}.total_steps() == 300);
}
