#include <cmath>
#include <random>

#include "doctest.h"
#include "support/oracle.hpp"

#include "aspers/data/synthetic.hpp"
#include "aspers/error.hpp"
#include "aspers/objective/objective.hpp"
#include "aspers/objective/references.hpp"
#include "aspers/objective/training.hpp"

using namespace aspers;

namespace {

const Architecture kArch{{6, 4}, 5};

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.values()) v = n(rng);
  return m;
}

// Model whose prediction is the constant `c` for every input.
PersonalModel constant_model(double c) {
  PersonalModel m = init_model(3, kArch, 1);
  auto& out = m.head.mutable_layer(m.head.depth() - 1);
  out.weights.fill(0.0);
  out.bias[0] = c;
  return m;
}

TaggedRows tagged(const Matrix& x, const std::vector<double>& y,
                  const std::vector<std::string>& src) {
  TaggedRows t;
  for (std::size_t i = 0; i < x.rows(); ++i) t.add(x.row(i), y[i], src[i]);
  return t;
}

SupportState support3() {
  auto s = SupportState::uniform("u", {"a", "b"}, {"c", "d"},
                                 {{"a", 0.9}, {"b", 0.7}, {"c", 0.3}, {"d", 0.1}});
  s.alpha = {{"a", 0.4}, {"b", 0.1}, {"c", 0.3}, {"d", 0.2}};
  return s;
}

ReferenceEncoders references_for(const std::vector<std::string>& users, std::uint64_t seed) {
  ReferenceEncoders r;
  for (std::size_t i = 0; i < users.size(); ++i)
    r.insert(users[i], init_model(3, kArch, seed + i).encoder);
  return r;
}

std::vector<double> fd_model(PersonalModel model,
                             const std::function<double(const PersonalModel&)>& f) {
  return oracle::numeric_gradient(oracle::flatten(model), [&](const auto& p) {
    PersonalModel m = model;
    oracle::unflatten(m, p);
    return f(m);
  });
}

}  // namespace

TEST_CASE("task loss values") {
  Matrix x{{0.1, 0.2, 0.3}, {-1, 0, 1}};
  SUBCASE("perfect predictions") {
    auto r = task_loss(constant_model(1.5), x, std::vector<double>{1.5, 1.5}, TaskLoss::MSE);
    CHECK(r.loss == 0.0);
    CHECK(r.grads.encoder.all_zero());
    CHECK(r.grads.head.all_zero());
  }
  SUBCASE("pred 2, target 0") {
    auto r = task_loss(constant_model(2.0), Matrix{{1, 1, 1}}, std::vector<double>{0.0},
                       TaskLoss::MSE);
    CHECK(r.loss == doctest::Approx(4.0));
  }
  SUBCASE("bce at logit 0 is ln 2") {
    auto r = task_loss(constant_model(0.0), x, std::vector<double>{0, 1}, TaskLoss::BCE);
    CHECK(r.loss == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("contract violations") {
    CHECK_THROWS_AS(task_loss(constant_model(0), x, std::vector<double>{0, 2}, TaskLoss::BCE),
                    ContractError);
    CHECK_THROWS_AS(task_loss(constant_model(0), Matrix(0, 3), std::vector<double>{},
                              TaskLoss::MSE),
                    ContractError);
  }
}

TEST_CASE("task loss gradients match finite differences") {
  for (auto loss : {TaskLoss::MSE, TaskLoss::BCE}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      Rng rng(seed);
      auto model = init_model(3, kArch, seed + 100);
      oracle::randomize_biases(model, rng);
      Matrix x = random_matrix(6, 3, rng);
      std::vector<double> y(6);
      for (std::size_t i = 0; i < 6; ++i) y[i] = loss == TaskLoss::BCE ? double(i % 2) : x(i, 0);
      auto r = task_loss(model, x, y, loss);
      auto numeric = fd_model(model, [&](const PersonalModel& m) {
        return task_loss(m, x, y, loss).loss;
      });
      CHECK(oracle::relative_error(oracle::flatten(r.grads), numeric) < 1e-5);
    }
  }
}

TEST_CASE("transfer loss") {
  Rng rng(4);
  auto model = init_model(3, kArch, 9);
  oracle::randomize_biases(model, rng);
  Matrix x = random_matrix(5, 3, rng);
  std::vector<double> y{0.1, -0.3, 0.8, 1.2, -1.0};

  SUBCASE("zero alpha gives nothing") {
    auto s = support3();
    s.alpha = {{"a", 0.0}, {"b", 0.0}, {"c", 0.5}, {"d", 0.5}};
    auto r = transfer_loss(model, tagged(x, y, {"a", "a", "b", "b", "a"}), s, TaskLoss::MSE);
    CHECK(r.loss == 0.0);
    CHECK(r.grads.encoder.all_zero());
    CHECK(r.grads.head.all_zero());
  }
  SUBCASE("one user with alpha 1 and s 1 is the task loss") {
    auto s = SupportState::uniform("u", {"a"}, {}, {{"a", 1.0}});
    auto r = transfer_loss(model, tagged(x, y, {"a", "a", "a", "a", "a"}), s, TaskLoss::MSE);
    auto t = task_loss(model, x, y, TaskLoss::MSE);
    CHECK(r.loss == doctest::Approx(t.loss).epsilon(1e-14));
    CHECK(oracle::relative_error(oracle::flatten(r.grads), oracle::flatten(t.grads)) < 1e-14);
  }
  SUBCASE("mixture of users matches finite differences") {
    auto s = support3();
    auto rows = tagged(x, y, {"a", "b", "a", "b", "a"});
    auto r = transfer_loss(model, rows, s, TaskLoss::MSE);
    // a: 0.4*0.9 over 3 rows, b: 0.1*0.7 over 2 rows.
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      double p = model.predict(Matrix{{x(i, 0), x(i, 1), x(i, 2)}})(0, 0);
      double c = rows.sources[i] == "a" ? 0.36 / 3.0 : 0.07 / 2.0;
      want += c * (p - y[i]) * (p - y[i]);
    }
    CHECK(r.loss == doctest::Approx(want).epsilon(1e-12));
    auto numeric = fd_model(model, [&](const PersonalModel& m) {
      return transfer_loss(m, rows, s, TaskLoss::MSE).loss;
    });
    CHECK(oracle::relative_error(oracle::flatten(r.grads), numeric) < 1e-5);
  }
  SUBCASE("dissimilar rows are rejected") {
    auto s = support3();
    CHECK_THROWS_AS(
        transfer_loss(model, tagged(x, y, {"a", "c", "a", "a", "a"}), s, TaskLoss::MSE),
        ContractError);
    CHECK_THROWS_AS(
        transfer_loss(model, tagged(x, y, {"a", "zz", "a", "a", "a"}), s, TaskLoss::MSE),
        ContractError);
  }
}

TEST_CASE("hinge") {
  CHECK(hinge(0.0, 1.5) == 1.5);
  CHECK(hinge(1.5, 1.5) == 0.0);
  CHECK(hinge(2.0, 1.5) == 0.0);
  CHECK(hinge(0.5, 1.5) == 1.0);
}

TEST_CASE("dissimilar penalty") {
  Rng rng(6);
  auto model = init_model(3, kArch, 12);
  oracle::randomize_biases(model, rng);
  Matrix x = random_matrix(6, 3, rng);
  std::vector<double> y(6, 0.0);
  auto s = support3();
  auto rows = tagged(x, y, {"c", "d", "c", "c", "d", "d"});

  SUBCASE("identical encoders give the margin per row") {
    ReferenceEncoders refs;
    refs.insert("c", model.encoder);
    refs.insert("d", model.encoder);
    auto r = dissimilar_penalty(model, rows, refs, s, 2.0);
    // sum_j alpha_j (1 - s_j) m
    CHECK(r.loss == doctest::Approx(0.3 * 0.7 * 2.0 + 0.2 * 0.9 * 2.0));
  }
  SUBCASE("inactive hinge gives zero loss and gradient") {
    auto refs = references_for({"c", "d"}, 50);
    auto r = dissimilar_penalty(model, rows, refs, s, 1e-12);
    CHECK(r.loss == 0.0);
    CHECK(r.grads.encoder.all_zero());
    CHECK(r.grads.head.all_zero());
  }
  SUBCASE("encoder gradient matches finite differences, head stays zero") {
    auto refs = references_for({"c", "d"}, 50);
    auto r = dissimilar_penalty(model, rows, refs, s, 50.0);
    REQUIRE(r.loss > 0.0);
    CHECK(r.grads.head.all_zero());
    CHECK_FALSE(r.grads.encoder.all_zero());
    auto numeric = fd_model(model, [&](const PersonalModel& m) {
      return dissimilar_penalty(m, rows, refs, s, 50.0).loss;
    });
    CHECK(oracle::relative_error(oracle::flatten(r.grads), numeric) < 1e-5);
  }
  SUBCASE("similar rows and missing references are rejected") {
    auto refs = references_for({"c", "d"}, 50);
    CHECK_THROWS_AS(dissimilar_penalty(model, tagged(x, y, {"a", "c", "c", "c", "c", "c"}),
                                       refs, s, 1.0),
                    ContractError);
    ReferenceEncoders only_c;
    only_c.insert("c", model.encoder);
    CHECK_THROWS_AS(dissimilar_penalty(model, rows, only_c, s, 1.0), ConfigError);
  }
}

TEST_CASE("total objective") {
  Rng rng(8);
  auto model = init_model(3, kArch, 14);
  oracle::randomize_biases(model, rng);
  auto s = support3();
  auto refs = references_for({"c", "d"}, 70);
  Batch batch;
  batch.personal = tagged(random_matrix(4, 3, rng), {0.1, 0.2, 0.3, 0.4}, {"u", "u", "u", "u"});
  batch.similar = tagged(random_matrix(3, 3, rng), {1, 0, -1}, {"a", "b", "a"});
  batch.dissimilar = tagged(random_matrix(3, 3, rng), {0, 0, 0}, {"c", "d", "d"});

  SUBCASE("recombination identity and gradients") {
    ObjectiveConfig cfg{0.7, 0.4, 0.3, 5.0, TaskLoss::MSE};
    auto r = total_objective(model, batch, s, cfg, refs);
    const auto& b = r.breakdown;
    CHECK(b.total == doctest::Approx(0.7 * b.personal + 0.4 * b.transfer + 0.3 * b.penalty)
                         .epsilon(1e-15));
    CHECK(b.penalty > 0.0);
    auto numeric = fd_model(model, [&](const PersonalModel& m) {
      return total_objective(m, batch, s, cfg, refs).breakdown.total;
    });
    CHECK(oracle::relative_error(oracle::flatten(r.grads), numeric) < 1e-5);
  }
  SUBCASE("lambda_s = lambda_d = 0 is the personal term") {
    ObjectiveConfig cfg{1.3, 0.0, 0.0, 5.0, TaskLoss::MSE};
    auto r = total_objective(model, batch, s, cfg, refs);
    CHECK(r.breakdown.total == 1.3 * r.breakdown.personal);
  }
  SUBCASE("empty support quotas") {
    Batch only;
    only.personal = batch.personal;
    auto r = total_objective(model, only, s, ObjectiveConfig{}, refs);
    CHECK(r.breakdown.transfer == 0.0);
    CHECK(r.breakdown.penalty == 0.0);
  }
}

TEST_CASE("objective config validation") {
  CHECK_THROWS_AS((ObjectiveConfig{-1, 0, 0, 1, TaskLoss::MSE}.validate()), ConfigError);
  CHECK_THROWS_AS((ObjectiveConfig{0, 0, 0, 1, TaskLoss::MSE}.validate()), ConfigError);
  CHECK_THROWS_AS((ObjectiveConfig{1, 0, 0, 0, TaskLoss::MSE}.validate()), ConfigError);
}

TEST_CASE("pooled rows and training") {
  SyntheticSpec spec;
  spec.users_per_cluster = 2;
  spec.samples_per_user = 12;
  spec.feature_dim = 3;
  spec.seed = 2;
  auto split = chronological_split(generate_synthetic(spec).cohort, 0.5);

  auto pool = pool_rows(split, {{"u001", 2.0}, {"u000", 0.0}, {"u002", 1.0}});
  CHECK(pool.size() == 12);
  CHECK(pool.weights.front() == 2.0);
  CHECK(pool.weights.back() == 1.0);
  CHECK(pool.targets.front() == split.at("u001").train.targets.front());
  CHECK_THROWS_AS(pool_rows(split, {{"u000", -1.0}}), ContractError);

  PooledTrainOptions o;
  o.epochs = 30;
  o.steps_per_epoch = 4;
  o.batch_size = 6;
  o.track_full_loss = true;
  auto model = init_model(3, kArch, 3);
  auto a = model;
  auto trace = train_pooled(a, pool, o, 1);
  CHECK(trace.size() == 31);
  CHECK(trace.back() < trace.front());
  CHECK(trace.front() == doctest::Approx(pooled_loss(model, pool, TaskLoss::MSE)));

  auto b = model;
  train_pooled(b, pool, o, 1);
  CHECK(a.same_parameters(b));

  SUBCASE("head-only training freezes the encoder") {
    auto c = model;
    o.trainable = Trainable::HeadOnly;
    train_pooled(c, pool, o, 1);
    CHECK(c.encoder.same_parameters(model.encoder));
    CHECK_FALSE(c.head.same_parameters(model.head));
  }
  SUBCASE("divergence names the epoch") {
    auto c = model;
    o.learning_rate = 1e6;
    try {
      train_pooled(c, pool, o, 1);
      FAIL("expected divergence");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_CASE("reference encoders") {
  SyntheticSpec spec;
  spec.users_per_cluster = 2;
  spec.samples_per_user = 10;
  spec.feature_dim = 3;
  spec.seed = 6;
  auto split = chronological_split(generate_synthetic(spec).cohort, 0.5);
  auto pop = init_model(3, kArch, 4);
  ReferenceOptions o;
  auto refs = build_reference_encoders(pop.encoder, pop.head, split, {"u000", "u001"}, o, 8);
  CHECK(refs.size() == 2);
  CHECK_FALSE(refs.at("u000").same_parameters(pop.encoder));
  CHECK_FALSE(refs.at("u000").same_parameters(refs.at("u001")));
  CHECK_THROWS_AS(refs.at("u002"), ConfigError);

  o.mode = ReferenceMode::Population;
  auto same = build_reference_encoders(pop.encoder, pop.head, split, {"u000"}, o, 8);
  CHECK(same.at("u000").same_parameters(pop.encoder));
}
