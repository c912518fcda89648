// Command-line front end. Exit codes: 0 success, 2 config error, 3 data
// error, 4 numeric divergence, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "aspers/error.hpp"
#include "aspers/harness/experiment.hpp"
#include "aspers/harness/export.hpp"

namespace fs = std::filesystem;
using namespace aspers;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--jobs", f.jobs, "parallel target-user jobs");
  cmd->add_option("--out", f.out, "output directory");
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.out) c.output_dir = *f.out;
  c.finalize();
  return c;
}

std::vector<std::string> all_baselines() {
  return {"pop", "per_pure", "per_merge", "per_trans", "per_cluster", "per_weighted"};
}

std::vector<std::string> all_ablations() { return {"no_penalty", "no_transfer", "no_alpha"}; }

void print_report(const MetricsReport& r) {
  for (const auto& [name, m] : r.methods())
    std::cout << name << " mean " << r.metric_name() << " " << format_double(m.mean) << '\n';
}

int run_with_methods(const CommonFlags& f, std::vector<std::string> methods) {
  auto c = resolve(f);
  if (!methods.empty()) c.methods = std::move(methods);
  c.finalize();
  print_report(run_experiment(c, c.output_dir));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized models with adaptive support-user weighting"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  CommonFlags f;

  auto* synth = app.add_subcommand("synth", "generate the configured synthetic cohort as CSV");
  add_common(synth, f);

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the population encoder");
  add_common(pretrain, f);

  auto* similarity = app.add_subcommand("similarity", "write the similarity matrix");
  add_common(similarity, f);

  auto* train = app.add_subcommand("train", "personalize every target user");
  add_common(train, f);

  std::vector<std::string> baselines;
  auto* baseline = app.add_subcommand("baseline", "train baselines");
  add_common(baseline, f);
  baseline->add_option("--method", baselines, "baseline names (default: all)");

  std::vector<std::string> ablations;
  auto* ablate = app.add_subcommand("ablate", "train ablations");
  add_common(ablate, f);
  ablate->add_option("--method", ablations, "ablation names (default: all)");

  auto* sweep = app.add_subcommand("sweep", "data-efficiency sweep");
  add_common(sweep, f);

  auto* run = app.add_subcommand("run", "every method listed in the config");
  add_common(run, f);

  std::string history_dir;
  auto* exp = app.add_subcommand("export", "alpha matrix and influence from history files");
  exp->add_option("--history", history_dir, "directory of <user>.jsonl history files")
      ->required()
      ->check(CLI::ExistingDirectory);
  exp->add_option("--out", f.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (auto level = spdlog::level::from_str(log_level); level != spdlog::level::off ||
                                                       log_level == "off")
    spdlog::set_level(level);

  try {
    if (*synth) {
      auto c = resolve(f);
      if (!c.data.synthetic) throw ConfigError("synth needs a data.synthetic section");
      fs::create_directories(c.output_dir);
      auto s = generate_synthetic(*c.data.synthetic);
      write_csv(s.cohort, c.output_dir / "cohort.csv");
      nlohmann::json clusters(s.clusters);
      write_json(clusters, c.output_dir / "clusters.json");
      std::cout << "wrote " << (c.output_dir / "cohort.csv").string() << '\n';
      return 0;
    }
    if (*pretrain) {
      auto c = resolve(f);
      fs::create_directories(c.output_dir);
      write_manifest(c, c.output_dir, "pretrain");
      Experiment e(c);
      const auto& pop = e.population();
      nlohmann::json j;
      j["encoder"] = mlp_to_json(pop.encoder.encoder);
      j["head"] = mlp_to_json(pop.head);
      j["loss_trace"] = pop.loss_trace;
      write_json(j, c.output_dir / "population.json");
      std::cout << "final pooled loss " << format_double(pop.loss_trace.back()) << '\n';
      return 0;
    }
    if (*similarity) {
      auto c = resolve(f);
      fs::create_directories(c.output_dir);
      write_manifest(c, c.output_dir, "similarity");
      Experiment e(c);
      write_similarity_csv(e.similarity(), c.output_dir / "similarity.csv");
      std::cout << "wrote " << (c.output_dir / "similarity.csv").string() << '\n';
      return 0;
    }
    if (*train) return run_with_methods(f, {"ours"});
    if (*baseline) return run_with_methods(f, baselines.empty() ? all_baselines() : baselines);
    if (*ablate) return run_with_methods(f, ablations.empty() ? all_ablations() : ablations);
    if (*run) return run_with_methods(f, {});
    if (*sweep) {
      auto c = resolve(f);
      for (const auto& p : run_sweep(c, c.output_dir))
        std::cout << "p=" << format_double(p.fraction) << " mean "
                  << p.report.metric_name() << " "
                  << format_double(p.report.at("ours").mean) << '\n';
      return 0;
    }
    if (*exp) {
      fs::path out = f.out ? fs::path(*f.out) : fs::path(history_dir);
      fs::create_directories(out);
      std::map<std::string, std::map<std::string, double>> final_alpha;
      for (const auto& entry : fs::directory_iterator(history_dir)) {
        if (entry.path().extension() != ".jsonl") continue;
        final_alpha[entry.path().stem().string()] = read_final_alpha(entry.path());
      }
      if (final_alpha.empty()) throw DataError("no .jsonl history files in " + history_dir);
      auto a = export_alpha_analysis(final_alpha);
      write_alpha_matrix_csv(a, out / "alpha_matrix.csv");
      write_influence_csv(a, out / "influence_summary.csv");
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const NumericError& e) {
    spdlog::error("numeric divergence: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
