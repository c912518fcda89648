#include "aspers/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "aspers/error.hpp"
#include "aspers/harness/export.hpp"
#include "aspers/rng.hpp"
#include "aspers/simd/kernels.hpp"

namespace aspers {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

template <class E>
[[noreturn]] void rethrow_as(const std::string& stage, const E& e) {
  throw E(stage + ": " + e.what());
}

// Runs fn, prefixing any aspers error with the stage name while keeping its
// type.
template <class F>
decltype(auto) in_stage(const std::string& stage, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    rethrow_as(stage, e);
  } catch (const DataError& e) {
    rethrow_as(stage, e);
  } catch (const NumericError& e) {
    rethrow_as(stage, e);
  } catch (const DimensionError& e) {
    rethrow_as(stage, e);
  } catch (const StateError& e) {
    rethrow_as(stage, e);
  } catch (const ContractError& e) {
    rethrow_as(stage, e);
  }
}

}  // namespace

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  jobs = std::clamp<std::size_t>(jobs, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::optional<std::vector<std::string>> sweep_candidates(const SimilarityMatrix& sim,
                                                         const std::string& target,
                                                         double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("sweep fraction must lie in (0, 1], got " + std::to_string(fraction));
  auto row = sim.row(target);
  std::size_t others = row.size();
  auto k = static_cast<std::size_t>(std::ceil(fraction / 2.0 * static_cast<double>(others)));
  if (2 * k >= others) return std::nullopt;

  std::vector<std::pair<std::string, double>> ranked(row.begin(), row.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].first);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[others - 1 - i].first);
  std::sort(out.begin(), out.end());
  return out;
}

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
  config_.finalize();
}

const SplitCohort& Experiment::split() {
  if (!split_) {
    in_stage("data", [&] {
      Cohort cohort;
      if (config_.data.csv) {
        cohort = load_csv(*config_.data.csv, CsvSchema{config_.task, {}});
      } else {
        auto synth = generate_synthetic(*config_.data.synthetic);
        cohort = std::move(synth.cohort);
        clusters_truth_ = std::move(synth.clusters);
      }
      if (cohort.users.size() < 2)
        throw DataError("cohort needs at least 2 users, found " +
                        std::to_string(cohort.users.size()));
      auto split = chronological_split(cohort, config_.split_fraction);
      normalize_features(split, config_.normalization);
      split_ = std::move(split);
    });
  }
  return *split_;
}

const std::map<std::string, std::size_t>& Experiment::ground_truth_clusters() {
  split();
  return clusters_truth_;
}

const PretrainResult& Experiment::population() {
  if (!population_) {
    const auto& s = split();
    population_ = in_stage("pretrain", [&] {
      return std::make_unique<PretrainResult>(pretrain_population(
          s, config_.architecture, config_.pretrain, derive_seed(config_.seed, "pretrain")));
    });
  }
  return *population_;
}

const PretrainResult& Experiment::auxiliary() {
  if (config_.similarity.share_encoder) return population();
  if (!auxiliary_) {
    const auto& s = split();
    auxiliary_ = in_stage("similarity", [&] {
      return std::make_unique<PretrainResult>(
          pretrain_population(s, config_.architecture, config_.similarity.auxiliary,
                              derive_seed(config_.seed, "aux"), std::nullopt, true));
    });
  }
  return *auxiliary_;
}

const SimilarityMatrix& Experiment::similarity() {
  if (!similarity_) {
    const auto& aux = auxiliary();
    similarity_ = in_stage("similarity", [&] {
      return cosine_similarity_matrix(embed_users(aux.encoder.encoder, split()));
    });
  }
  return *similarity_;
}

const ReferenceEncoders& Experiment::references() {
  if (!references_) {
    const auto& pop = population();
    references_ = in_stage("references", [&] {
      return build_reference_encoders(pop.encoder.encoder, pop.head, split(),
                                      split().user_ids(), config_.reference,
                                      derive_seed(config_.seed, "reference"));
    });
  }
  return *references_;
}

const ClusterAssignment& Experiment::clusters() {
  if (!clusters_) {
    const auto& s = split();
    clusters_ = in_stage("kmeans", [&] {
      return kmeans(user_feature_means(s), s.user_ids(),
                    std::min(config_.kmeans_k, s.users.size()),
                    derive_seed(config_.seed, "kmeans"), config_.kmeans_max_iters);
    });
  }
  return *clusters_;
}

std::uint64_t Experiment::target_seed(const std::string& target) const {
  return derive_seed(config_.seed, "target/" + target);
}

SupportPartition Experiment::partition_for(
    const std::string& target, const std::optional<std::vector<std::string>>& candidates) {
  return partition_support(similarity(), target, config_.similarity.rule, candidates);
}

MethodRun Experiment::run_method(
    const std::string& method,
    const std::function<std::optional<std::vector<std::string>>(const std::string&)>&
        candidates) {
  if (!is_known_method(method)) throw ConfigError("unknown method '" + method + "'");
  const auto& s = split();
  const auto users = s.user_ids();
  const auto baseline = baseline_from_string(method);
  const auto ablation = ablation_from_string(method);
  const bool needs_support = method == "ours" || ablation.has_value();

  // Shared read-only inputs are built up front so the workers never touch
  // the lazy caches.
  const PretrainResult* pop = nullptr;
  const ReferenceEncoders* refs = nullptr;
  const ClusterAssignment* assignment = nullptr;
  std::map<std::string, SupportPartition> partitions;
  std::map<std::string, std::map<std::string, double>> sim_rows;
  if (needs_support) {
    pop = &population();
    refs = &references();
  }
  if (needs_support || baseline == BaselineKind::PerWeighted) {
    const auto& sim = similarity();
    for (const auto& u : users) {
      sim_rows[u] = sim.row(u);
      if (needs_support)
        partitions[u] = in_stage("similarity", [&] {
          return partition_for(u, candidates ? candidates(u) : std::nullopt);
        });
    }
  }
  if (baseline == BaselineKind::PerCluster) assignment = &clusters();

  struct Slot {
    double metric = 0.0;
    std::optional<PersonalizeResult> result;
  };
  std::vector<Slot> slots(users.size());
  const auto& cfg = config_;

  in_stage("method " + method, [&] {
    parallel_for(users.size(), cfg.jobs, [&](std::size_t i) {
      const std::string& u = users[i];
      const std::uint64_t seed = target_seed(u);
      std::optional<PersonalModel> model;
      if (method == "ours") {
        auto r = personalize(u, s, partitions.at(u), sim_rows.at(u), *refs, cfg.objective,
                             cfg.schedule, cfg.architecture, &pop->encoder.encoder, seed);
        model = r.model;
        slots[i].result = std::move(r);
      } else if (ablation) {
        auto r = run_ablation(*ablation, u, s, partitions.at(u), sim_rows.at(u), *refs,
                              cfg.objective, cfg.schedule, cfg.architecture,
                              &pop->encoder.encoder, seed);
        model = r.model;
        slots[i].result = std::move(r);
      } else {
        switch (*baseline) {
          case BaselineKind::Pop:
            model = train_pop(s, cfg.architecture, cfg.schedule, seed, u);
            break;
          case BaselineKind::PerPure:
            model = train_per_pure(s, u, cfg.architecture, cfg.schedule, seed);
            break;
          case BaselineKind::PerMerge:
            model = train_per_merge(s, u, cfg.architecture, cfg.schedule, seed);
            break;
          case BaselineKind::PerTrans: {
            auto excluded = pretrain_population(s, cfg.architecture, cfg.pretrain,
                                                derive_seed(seed, "pretrain"), u);
            model = train_per_trans(s, u, &excluded, cfg.schedule, seed,
                                    cfg.per_trans_full_finetune);
            break;
          }
          case BaselineKind::PerCluster:
            model = train_per_cluster(s, u, *assignment, cfg.architecture, cfg.schedule, seed);
            break;
          case BaselineKind::PerWeighted:
            model = train_per_weighted(s, u, sim_rows.at(u), cfg.architecture, cfg.schedule,
                                       seed);
            break;
        }
      }
      slots[i].metric = evaluate(*model, s.at(u).test, s.task);
    });
  });

  MethodRun run;
  for (std::size_t i = 0; i < users.size(); ++i) {
    run.metric[users[i]] = slots[i].metric;
    if (slots[i].result) {
      run.histories[users[i]] = std::move(slots[i].result->history);
      run.supports[users[i]] = std::move(slots[i].result->support);
    }
  }
  return run;
}

MetricsReport Experiment::run_methods(const std::vector<std::string>& methods,
                                      std::map<std::string, MethodRun>* runs) {
  MetricsReport report(split().task, split().user_ids());
  for (const auto& m : methods) {
    spdlog::info("running method {}", m);
    auto run = run_method(m);
    report.add(m, run.metric);
    if (runs) (*runs)[m] = std::move(run);
  }
  return report;
}

std::vector<SweepPoint> Experiment::data_efficiency_sweep(const std::vector<double>& fractions) {
  std::vector<SweepPoint> points;
  const auto& sim = similarity();
  const auto users = split().user_ids();
  for (double p : fractions) {
    std::map<std::string, std::optional<std::vector<std::string>>> chosen;
    bool empty = false;
    for (const auto& u : users) {
      chosen[u] = sweep_candidates(sim, u, p);
      if (chosen[u] && chosen[u]->empty()) empty = true;
    }
    if (empty) {
      spdlog::warn("sweep fraction {} leaves a target without support users; skipped", p);
      continue;
    }
    spdlog::info("sweep fraction {}", p);
    auto run = run_method("ours", [&](const std::string& u) { return chosen.at(u); });
    SweepPoint point{p, MetricsReport(split().task, users)};
    point.report.add("ours", run.metric);
    points.push_back(std::move(point));
  }
  return points;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const ExperimentConfig& config, const fs::path& out_dir,
                    const std::string& command) {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  json m;
  m["command"] = command;
  m["config_hash"] = config.hash();
  m["seed"] = config.seed;
  m["version"] = kVersion;
  m["simd"] = std::string(simd::active_kernels().name);
  m["created_at"] = stamp;
  m["config"] = config.to_json();
  write_json(m, out_dir / "manifest.json");
}

MetricsReport run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_manifest(config, out_dir, "run");
  Experiment exp(config);

  const auto& sim = exp.similarity();
  write_similarity_csv(sim, out_dir / "similarity.csv");

  MetricsReport report(exp.split().task, exp.split().user_ids());
  for (const auto& m : exp.config().methods) {
    spdlog::info("running method {}", m);
    auto run = exp.run_method(m);
    report.add(m, run.metric);

    if (!run.histories.empty()) {
      fs::path hist = out_dir / "history";
      fs::path logs = out_dir / "logs" / m;
      if (m != "ours") hist /= m;
      fs::create_directories(hist);
      fs::create_directories(logs);
      for (const auto& [u, h] : run.histories) {
        write_history_jsonl(h, hist / (u + ".jsonl"));
        write_epoch_log_jsonl(h, logs / (u + ".jsonl"));
      }
    }
    if (m == "ours") {
      std::map<std::string, std::map<std::string, double>> final_alpha;
      for (const auto& [u, state] : run.supports) final_alpha[u] = state.alpha;
      auto analysis = export_alpha_analysis(final_alpha);
      write_alpha_matrix_csv(analysis, out_dir / "alpha_matrix.csv");
      write_influence_csv(analysis, out_dir / "influence_summary.csv");
    }
  }
  write_json(report.to_json(), out_dir / "metrics.json");
  return report;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_manifest(config, out_dir, "sweep");
  Experiment exp(config);
  auto points = exp.data_efficiency_sweep(exp.config().sweep_fractions);
  json j = json::array();
  for (const auto& p : points) {
    json e;
    e["fraction"] = p.fraction;
    e["report"] = p.report.to_json();
    j.push_back(std::move(e));
  }
  write_json(j, out_dir / "sweep.json");
  return points;
}

}  // namespace aspers
