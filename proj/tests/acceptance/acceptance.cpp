// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "support/oracle.hpp"

#include "aspers/baselines/baselines.hpp"
#include "aspers/harness/experiment.hpp"
#include "aspers/objective/objective.hpp"
#include "aspers/simd/kernels.hpp"

using namespace aspers;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.values()) v = n(rng);
  return m;
}

TaggedRows tagged(const Matrix& x, const std::vector<double>& y,
                  const std::vector<std::string>& src) {
  TaggedRows t;
  for (std::size_t i = 0; i < x.rows(); ++i) t.add(x.row(i), y[i], src[i]);
  return t;
}

std::vector<double> fd(const PersonalModel& model,
                       const std::function<double(const PersonalModel&)>& f) {
  return oracle::numeric_gradient(oracle::flatten(model), [&](const auto& p) {
    PersonalModel m = model;
    oracle::unflatten(m, p);
    return f(m);
  });
}

struct RandomCase {
  std::size_t d;
  Architecture arch;
  PersonalModel model;
  SupportState support;
  ReferenceEncoders refs;
  TaggedRows personal, similar, dissimilar;
  double margin;
};

// Random widths (every layer <= 16 units), random biases, two S and two D
// users, and a margin at the median embedding distance so the hinge is active
// on some rows and inactive on others.
RandomCase random_case(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "acceptance/case"));
  std::uniform_int_distribution<std::size_t> width(2, 16), dim(2, 6), rows(3, 8);
  RandomCase c;
  c.d = dim(rng);
  c.arch = Architecture{{width(rng), width(rng)}, width(rng) % 2 ? width(rng) : 0};
  c.model = init_model(c.d, c.arch, seed);
  oracle::randomize_biases(c.model, rng);

  std::uniform_real_distribution<double> u(0.05, 0.95);
  c.support = SupportState::uniform("t", {"a", "b"}, {"c", "e"},
                                    {{"a", u(rng)}, {"b", u(rng)}, {"c", u(rng)}, {"e", u(rng)}});
  std::vector<double> raw{u(rng), u(rng), u(rng), u(rng)};
  double total = raw[0] + raw[1] + raw[2] + raw[3];
  c.support.alpha = {{"a", raw[0] / total}, {"b", raw[1] / total},
                     {"c", raw[2] / total}, {"e", raw[3] / total}};
  for (const char* j : {"c", "e"}) {
    auto ref = init_model(c.d, c.arch, rng());
    oracle::randomize_biases(ref.encoder, rng);
    c.refs.insert(j, ref.encoder);
  }

  auto make = [&](std::vector<std::string> pool, bool binary) {
    std::size_t n = rows(rng);
    Matrix x = random_matrix(n, c.d, rng);
    std::vector<double> y(n);
    std::vector<std::string> src(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = binary ? static_cast<double>(rng() % 2) : x(i, 0) - 0.5 * x(i, 1);
      src[i] = pool[i % pool.size()];
    }
    return tagged(x, y, src);
  };
  c.personal = make({"t"}, false);
  c.similar = make({"a", "b"}, false);
  c.dissimilar = make({"c", "e"}, false);

  std::vector<double> dists;
  const Matrix eu = predict(c.model.encoder, c.dissimilar.features);
  for (std::size_t i = 0; i < c.dissimilar.size(); ++i) {
    const Matrix ej = predict(c.refs.at(c.dissimilar.sources[i]),
                              select_rows(c.dissimilar.features, std::vector<std::size_t>{i}));
    dists.push_back(simd::squared_distance(eu.row(i), ej.row(0)));
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  c.margin = dists[dists.size() / 2] + 1e-3;
  return c;
}

// Central differences straddle a ReLU kink when a pre-activation lies within
// about one step of zero; such draws are replaced by the next seed.
bool clear_of_kinks(const RandomCase& c) {
  const double tol = 1e-3;
  for (const TaggedRows* rows : {&c.personal, &c.similar, &c.dissimilar}) {
    if (oracle::min_relu_margin(c.model.encoder, rows->features) < tol) return false;
    const Matrix z = oracle::naive_forward(c.model.encoder, rows->features);
    if (oracle::min_relu_margin(c.model.head, z) < tol) return false;
  }
  for (std::size_t i = 0; i < c.dissimilar.size(); ++i) {
    const Matrix x = select_rows(c.dissimilar.features, std::vector<std::size_t>{i});
    if (oracle::min_relu_margin(c.refs.at(c.dissimilar.sources[i]), x) < tol) return false;
  }
  return true;
}

Outcome gradient_oracle() {
  const int cases = 24;
  double worst = 0.0;
  std::string worst_term;
  int skipped = 0;
  std::uint64_t seed = 0;
  for (int n = 0; n < cases; ++n) {
    RandomCase c = random_case(seed++);
    while (!clear_of_kinks(c)) {
      ++skipped;
      c = random_case(seed++);
    }
    const std::uint64_t s = seed - 1;
    std::vector<double> bce_y(c.personal.size());
    for (std::size_t i = 0; i < bce_y.size(); ++i) bce_y[i] = static_cast<double>(i % 2);

    const std::vector<std::pair<std::string, std::function<TermResult(const PersonalModel&)>>>
        terms{
            {"personal mse",
             [&](const PersonalModel& m) {
               return task_loss(m, c.personal.features, c.personal.targets, TaskLoss::MSE);
             }},
            {"personal bce",
             [&](const PersonalModel& m) {
               return task_loss(m, c.personal.features, bce_y, TaskLoss::BCE);
             }},
            {"transfer",
             [&](const PersonalModel& m) {
               return transfer_loss(m, c.similar, c.support, TaskLoss::MSE);
             }},
            {"penalty",
             [&](const PersonalModel& m) {
               return dissimilar_penalty(m, c.dissimilar, c.refs, c.support, c.margin);
             }},
        };
    for (const auto& [name, term] : terms) {
      auto analytic = oracle::flatten(term(c.model).grads);
      auto numeric = fd(c.model, [&](const PersonalModel& m) { return term(m).loss; });
      double err = oracle::relative_error(analytic, numeric);
      if (err > worst) {
        worst = err;
        worst_term = name + " seed " + std::to_string(s);
      }
    }
  }
  return {worst <= 1e-4, std::to_string(cases) + " configs x 4 terms, max relative error " +
                             fmt(worst) + (worst_term.empty() ? "" : " (" + worst_term + ")") +
                             ", " + std::to_string(skipped) + " draws near a ReLU kink redrawn"};
}

Outcome gradient_routing() {
  int active = 0;
  for (std::uint64_t s = 0; s < 24; ++s) {
    auto c = random_case(s);
    auto r = dissimilar_penalty(c.model, c.dissimilar, c.refs, c.support, c.margin);
    if (!(r.loss > 0.0)) continue;
    ++active;
    if (!r.grads.head.all_zero())
      return {false, "nonzero head gradient at seed " + std::to_string(s)};
    if (r.grads.encoder.all_zero())
      return {false, "zero encoder gradient with active hinge at seed " + std::to_string(s)};
  }
  return {active > 0, std::to_string(active) +
                          " active-hinge configs: head gradients bitwise zero, encoder "
                          "gradients nonzero"};
}

Outcome hinge_correctness() {
  // Identity encoders on a 1-D input: phi_u(x) = x and phi_j(x) = x + shift,
  // so the squared distance is shift^2 for every row.
  const double m = 2.0;
  Mlp ident({DenseLayer{Matrix{{1.0}}, {0.0}, Activation::Identity}});
  Mlp head({DenseLayer{Matrix{{1.0}}, {0.0}, Activation::Identity}});
  PersonalModel model{ident, head};
  auto support = SupportState::uniform("t", {}, {"j"}, {{"j", 0.0}});
  auto per_row = [&](double dist) {
    Mlp shifted({DenseLayer{Matrix{{1.0}}, {std::sqrt(dist)}, Activation::Identity}});
    ReferenceEncoders refs;
    refs.insert("j", shifted);
    double x = 0.3;
    TaggedRows rows;
    rows.add(std::span<const double>(&x, 1), 0.0, "j");
    return dissimilar_penalty(model, rows, refs, support, m).loss;
  };
  if (per_row(0.0) != m) return {false, "penalty at distance 0 is " + fmt(per_row(0.0))};
  for (double d : {m, m + 1e-9, 1.5 * m, 10.0 * m})
    if (per_row(d) != 0.0) return {false, "nonzero penalty at distance " + fmt(d)};
  double prev = per_row(0.0);
  const int steps = 400;
  for (int i = 1; i <= steps; ++i) {
    double d = 3.0 * m * i / steps;
    double v = per_row(d);
    if (v > prev) return {false, "penalty increases at distance " + fmt(d)};
    prev = v;
  }
  return {true, "exactly m at 0, exactly 0 from m on, non-increasing over " +
                    std::to_string(steps) + " distances"};
}

struct Bench {
  ExperimentConfig config;
  SyntheticCohort truth;
};

Bench load_benchmark() {
  Bench b;
  b.config = load_config(fs::path(ASPERS_SOURCE_DIR) / "configs" / "synthetic_benchmark.json");
  b.config.methods = {"ours", "per_pure", "per_merge", "no_penalty", "no_transfer",
                      "no_alpha"};
  b.config.sweep_fractions = {0.25, 0.5, 1.0};
  b.config.finalize();
  b.truth = generate_synthetic(*b.config.data.synthetic);
  return b;
}

Outcome simplex(const Bench& b) {
  Experiment e(b.config);
  auto sched = b.config.schedule;
  sched.outer_rounds = 10;
  std::size_t checked = 0;
  for (const auto& t : e.split().user_ids()) {
    auto r = personalize(t, e.split(), e.partition_for(t, std::nullopt), e.similarity().row(t),
                         e.references(), b.config.objective, sched, b.config.architecture,
                         &e.population().encoder.encoder, e.target_seed(t));
    if (r.history.rounds.size() != 10) return {false, "expected 10 rounds for " + t};
    for (const auto& rec : r.history.rounds) {
      double sum = 0.0, lo = 1.0;
      for (const auto& [_, a] : rec.alpha) {
        sum += a;
        lo = std::min(lo, a);
      }
      if (std::abs(sum - 1.0) > 1e-9)
        return {false, t + " round " + std::to_string(rec.round) + ": sum " + fmt(sum)};
      if (!(lo > 0.0)) return {false, t + " round " + std::to_string(rec.round) + ": zero weight"};
      for (const auto& [i, ci] : rec.costs)
        for (const auto& [j, cj] : rec.costs)
          if (ci < cj && !(rec.alpha.at(i) > rec.alpha.at(j)))
            return {false, t + ": cost order not inverted for " + i + ", " + j};
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " alpha updates over " +
                    std::to_string(e.split().users.size()) +
                    " targets: sum within 1e-9, all weights > 0, costs inverted"};
}

Outcome reductions(const Bench& b) {
  Experiment e(b.config);
  const auto& split = e.split();
  const auto& arch = b.config.architecture;
  auto sched = b.config.schedule;
  sched.outer_rounds = 2;
  int checked = 0;
  for (const auto& t : {std::string("u000"), std::string("u011")}) {
    const std::uint64_t seed = e.target_seed(t);
    auto merge = train_per_merge(split, t, arch, sched, seed);
    auto pure = train_per_pure(split, t, arch, sched, seed);
    auto k1 = kmeans(user_feature_means(split), split.user_ids(), 1, seed);
    if (!train_per_cluster(split, t, k1, arch, sched, seed).same_parameters(merge))
      return {false, "PerCluster(K=1) != PerMerge for " + t};
    std::map<std::string, double> ones, zeros;
    for (const auto& u : split.user_ids()) {
      ones[u] = 1.0;
      zeros[u] = 0.0;
    }
    if (!train_per_weighted(split, t, ones, arch, sched, seed).same_parameters(merge))
      return {false, "PerWeighted(s=1) != PerMerge for " + t};
    if (!train_per_weighted(split, t, zeros, arch, sched, seed).same_parameters(pure))
      return {false, "PerWeighted(s=0) != PerPure for " + t};

    auto one_round = sched;
    one_round.outer_rounds = 1;
    ObjectiveConfig cfg = b.config.objective;
    cfg.lambda_s = cfg.lambda_d = 0.0;
    auto ours = personalize(t, split, e.partition_for(t, std::nullopt), e.similarity().row(t),
                            e.references(), cfg, one_round, arch,
                            &e.population().encoder.encoder, seed);
    PersonalModel init{e.population().encoder.encoder, init_head(arch, seed)};
    if (!ours.model.same_parameters(train_personal_sgd(split, t, init, one_round, seed)))
      return {false, "lambda_s = lambda_d = 0 differs from personal SGD for " + t};
    checked += 4;
  }
  return {true, std::to_string(checked) + " bit-exact identities on 2 targets"};
}

Outcome benchmark(const MetricsReport& r) {
  const double ours = r.at("ours").mean;
  std::string d = "ours " + fmt(ours);
  bool pass = true;
  for (const char* m : {"per_pure", "per_merge"}) {
    double v = r.at(m).mean;
    d += ", " + std::string(m) + " " + fmt(v);
    pass = pass && ours < v;
  }
  for (const char* m : {"no_penalty", "no_transfer", "no_alpha"}) {
    double v = r.at(m).mean;
    d += ", " + std::string(m) + " " + fmt(v);
    pass = pass && ours <= v;
  }
  return {pass, "mean test RMSE " + d};
}

Outcome concentration(const Bench& b, const fs::path& alpha_csv) {
  std::ifstream in(alpha_csv);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> targets;
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    while (std::getline(ss, cell, ',')) targets.push_back(cell);
  }
  std::map<std::string, std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string src, cell;
    std::getline(ss, src, ',');
    while (std::getline(ss, cell, ',')) rows[src].push_back(std::stod(cell));
  }
  const auto& cl = b.truth.clusters;
  int hits = 0;
  double worst_gap = 1.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& t = targets[k];
    double mass = 0.0;
    std::size_t same = 0, support = 0;
    for (const auto& [src, vals] : rows) {
      if (src == t) continue;
      ++support;
      if (cl.at(src) == cl.at(t)) {
        ++same;
        mass += vals[k];
      }
    }
    const double share = static_cast<double>(same) / static_cast<double>(support);
    worst_gap = std::min(worst_gap, mass - share);
    if (mass > share) ++hits;
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(targets.size());
  return {frac >= 0.75, std::to_string(hits) + "/" + std::to_string(targets.size()) +
                            " targets put more than the uniform share on their own cluster "
                            "(smallest margin " + fmt(worst_gap) + ")"};
}

Outcome data_efficiency(const Bench& b) {
  auto points = run_sweep(b.config, fs::path(ACCEPTANCE_OUT) / "sweep");
  std::optional<double> at_full;
  double best = std::numeric_limits<double>::infinity();
  std::string d;
  for (const auto& p : points) {
    double m = p.report.at("ours").mean;
    d += (d.empty() ? "" : ", ") + std::string("p=") + fmt(p.fraction) + " " + fmt(m);
    best = std::min(best, m);
    if (p.fraction == 1.0) at_full = m;
  }
  if (!at_full) return {false, "p=1.0 was skipped"};
  return {best <= *at_full * 1.02, "mean RMSE " + d};
}

Outcome kmeans_sanity() {
  SyntheticSpec spec;
  spec.users_per_cluster = 10;
  spec.samples_per_user = 40;
  spec.feature_shift = 4.0;
  spec.seed = 2024;
  auto synth = generate_synthetic(spec);
  auto split = chronological_split(synth.cohort, 0.5);
  auto points = user_feature_means(split);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = kmeans(points, split.user_ids(), 2, seed);
    const auto first = split.user_ids().front();
    for (const auto& u : split.user_ids())
      if ((a.assignment.at(u) == a.assignment.at(first)) !=
          (synth.clusters.at(u) == synth.clusters.at(first)))
        return {false, "user " + u + " misassigned with seed " + std::to_string(seed)};
    for (std::size_t i = 1; i < a.objective_trace.size(); ++i)
      if (a.objective_trace[i] > a.objective_trace[i - 1])
        return {false, "objective rose at iteration " + std::to_string(i)};
  }
  return {true, "10 seeds: labels match generator up to permutation, objective non-increasing"};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const fs::path out(ACCEPTANCE_OUT);
  fs::remove_all(out);

  report(1, "gradient oracle", gradient_oracle);
  report(2, "gradient routing", gradient_routing);

  Bench bench;
  try {
    bench = load_benchmark();
  } catch (const std::exception& e) {
    std::printf("cannot load benchmark config: %s\n", e.what());
    return 1;
  }

  report(3, "simplex maintenance", [&] { return simplex(bench); });
  report(4, "hinge correctness", hinge_correctness);
  report(5, "reduction lattice", [&] { return reductions(bench); });

  std::optional<MetricsReport> first;
  report(6, "heterogeneity benchmark", [&] {
    first = run_experiment(bench.config, out / "run_a");
    return benchmark(*first);
  });
  report(7, "alpha concentration",
         [&] { return concentration(bench, out / "run_a" / "alpha_matrix.csv"); });
  report(8, "data-efficiency direction", [&] { return data_efficiency(bench); });
  report(9, "k-means sanity", kmeans_sanity);
  report(10, "determinism", [&] {
    run_experiment(bench.config, out / "run_b");
    bool metrics = slurp(out / "run_a" / "metrics.json") == slurp(out / "run_b" / "metrics.json");
    bool alpha = slurp(out / "run_a" / "alpha_matrix.csv") ==
                 slurp(out / "run_b" / "alpha_matrix.csv");
    return Outcome{metrics && alpha && !slurp(out / "run_a" / "metrics.json").empty(),
                   std::string("metrics.json ") + (metrics ? "identical" : "differs") +
                       ", alpha_matrix.csv " + (alpha ? "identical" : "differs")};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
