#include "aspers/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "aspers/baselines/baselines.hpp"
#include "aspers/error.hpp"

namespace aspers {
namespace {

using nlohmann::json;

// Reads keys from one JSON object and rejects the ones nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected an object");
  }
  ObjectReader(const ObjectReader&) = delete;

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, _] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(context_ + ": unknown key '" + k + "'");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  std::string path(const std::string& key) const { return context_ + "." + key; }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

void read_optimizer(const json& j, OptimizerConfig& o) {
  ObjectReader r(j, "optimizer");
  std::string kind = "sgd";
  r.get("kind", kind);
  if (kind == "sgd") o.kind = OptimizerConfig::Kind::Sgd;
  else if (kind == "momentum") o.kind = OptimizerConfig::Kind::Momentum;
  else if (kind == "adam") o.kind = OptimizerConfig::Kind::Adam;
  else throw ConfigError("optimizer.kind: unknown '" + kind + "'");
  r.get("momentum", o.momentum);
  r.get("beta1", o.beta1);
  r.get("beta2", o.beta2);
  r.get("epsilon", o.epsilon);
}

void read_pretrain(const json& j, const std::string& ctx, PretrainOptions& p) {
  ObjectReader r(j, ctx);
  r.get("epochs", p.epochs);
  r.get("lr", p.learning_rate);
  r.get("batch_size", p.batch_size);
}

void read_synthetic(const json& j, SyntheticSpec& s) {
  ObjectReader r(j, "data.synthetic");
  r.get("n_clusters", s.n_clusters);
  r.get("users_per_cluster", s.users_per_cluster);
  r.get("samples_per_user", s.samples_per_user);
  r.get("feature_dim", s.feature_dim);
  r.get("cluster_spread", s.cluster_spread);
  r.get("user_spread", s.user_spread);
  r.get("noise_std", s.noise_std);
  r.get("feature_shift", s.feature_shift);
  r.get("seed", s.seed);
}

std::string optimizer_kind(OptimizerConfig::Kind k) {
  switch (k) {
    case OptimizerConfig::Kind::Momentum: return "momentum";
    case OptimizerConfig::Kind::Adam: return "adam";
    case OptimizerConfig::Kind::Sgd: break;
  }
  return "sgd";
}

json pretrain_json(const PretrainOptions& p) {
  return {{"epochs", p.epochs}, {"lr", p.learning_rate}, {"batch_size", p.batch_size}};
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "config");

  if (r.has("data")) {
    ObjectReader d(r.raw("data"), "data");
    if (d.has("csv")) c.data.csv = d.raw("csv").get<std::string>();
    if (d.has("synthetic")) {
      SyntheticSpec s;
      read_synthetic(d.raw("synthetic"), s);
      c.data.synthetic = s;
    }
  }
  if (r.has("task")) c.task = task_from_string(r.raw("task").get<std::string>());
  r.get("split_fraction", c.split_fraction);
  if (r.has("normalize"))
    c.normalization = normalization_from_string(r.raw("normalize").get<std::string>());

  if (r.has("architecture")) {
    ObjectReader a(r.raw("architecture"), "architecture");
    a.get("encoder_hidden", c.architecture.encoder_hidden);
    a.get("head_hidden", c.architecture.head_hidden);
  }
  if (r.has("objective")) {
    ObjectReader o(r.raw("objective"), "objective");
    o.get("lambda_p", c.objective.lambda_p);
    o.get("lambda_s", c.objective.lambda_s);
    o.get("lambda_d", c.objective.lambda_d);
    o.get("margin", c.objective.margin);
  }
  if (r.has("schedule")) {
    ObjectReader s(r.raw("schedule"), "schedule");
    s.get("outer_rounds", c.schedule.outer_rounds);
    s.get("inner_epochs_per_round", c.schedule.inner_epochs_per_round);
    s.get("batches_per_epoch", c.schedule.batches_per_epoch);
    s.get("lr", c.schedule.learning_rate);
    s.get("alpha_temperature", c.schedule.alpha_temperature);
    s.get("cost_subsample_cap", c.schedule.cost_subsample_cap);
    s.get("positive_cost_softmax", c.schedule.positive_cost_softmax);
    if (s.has("batch")) {
      ObjectReader b(s.raw("batch"), "schedule.batch");
      b.get("personal", c.schedule.quotas.personal);
      b.get("similar", c.schedule.quotas.similar);
      b.get("dissimilar", c.schedule.quotas.dissimilar);
    }
  }
  if (r.has("pretrain")) read_pretrain(r.raw("pretrain"), "pretrain", c.pretrain);
  if (r.has("similarity")) {
    ObjectReader s(r.raw("similarity"), "similarity");
    if (s.has("auxiliary"))
      read_pretrain(s.raw("auxiliary"), "similarity.auxiliary", c.similarity.auxiliary);
    if (s.has("rule")) {
      const auto rule = s.raw("rule").get<std::string>();
      if (rule == "median") c.similarity.rule.kind = PartitionRule::Kind::Median;
      else if (rule == "threshold") c.similarity.rule.kind = PartitionRule::Kind::Threshold;
      else throw ConfigError("similarity.rule: unknown '" + rule + "'");
    }
    s.get("threshold", c.similarity.rule.threshold);
    s.get("share_encoder", c.similarity.share_encoder);
  }
  if (r.has("reference")) {
    ObjectReader s(r.raw("reference"), "reference");
    if (s.has("mode"))
      c.reference.mode = reference_mode_from_string(s.raw("mode").get<std::string>());
    s.get("epochs", c.reference.epochs);
    s.get("lr", c.reference.learning_rate);
    s.get("batch_size", c.reference.batch_size);
  }
  if (r.has("optimizer")) read_optimizer(r.raw("optimizer"), c.optimizer);
  r.get("methods", c.methods);
  if (r.has("kmeans")) {
    ObjectReader k(r.raw("kmeans"), "kmeans");
    k.get("k", c.kmeans_k);
    k.get("max_iters", c.kmeans_max_iters);
  }
  r.get("per_trans_full_finetune", c.per_trans_full_finetune);
  r.get("sweep_fractions", c.sweep_fractions);
  r.get("seed", c.seed);
  if (r.has("output_dir")) c.output_dir = r.raw("output_dir").get<std::string>();
  r.get("jobs", c.jobs);
  return c;
}

}  // namespace

bool is_known_method(const std::string& name) {
  return name == "ours" || baseline_from_string(name) || ablation_from_string(name);
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    c = parse_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.finalize();
  return c;
}

json ExperimentConfig::to_json() const {
  json data = json::object();
  if (this->data.csv) data["csv"] = this->data.csv->string();
  if (this->data.synthetic) {
    const auto& s = *this->data.synthetic;
    data["synthetic"] = {{"n_clusters", s.n_clusters},
                         {"users_per_cluster", s.users_per_cluster},
                         {"samples_per_user", s.samples_per_user},
                         {"feature_dim", s.feature_dim},
                         {"cluster_spread", s.cluster_spread},
                         {"user_spread", s.user_spread},
                         {"noise_std", s.noise_std},
                         {"feature_shift", s.feature_shift},
                         {"seed", s.seed}};
  }
  const char* norm = normalization == Normalization::Pooled    ? "pooled"
                     : normalization == Normalization::PerUser ? "per_user"
                                                               : "none";
  return {
      {"data", data},
      {"task", std::string(to_string(task))},
      {"split_fraction", split_fraction},
      {"normalize", norm},
      {"architecture",
       {{"encoder_hidden", architecture.encoder_hidden},
        {"head_hidden", architecture.head_hidden}}},
      {"objective",
       {{"lambda_p", objective.lambda_p},
        {"lambda_s", objective.lambda_s},
        {"lambda_d", objective.lambda_d},
        {"margin", objective.margin}}},
      {"schedule",
       {{"outer_rounds", schedule.outer_rounds},
        {"inner_epochs_per_round", schedule.inner_epochs_per_round},
        {"batches_per_epoch", schedule.batches_per_epoch},
        {"lr", schedule.learning_rate},
        {"alpha_temperature", schedule.alpha_temperature},
        {"cost_subsample_cap", schedule.cost_subsample_cap},
        {"positive_cost_softmax", schedule.positive_cost_softmax},
        {"batch",
         {{"personal", schedule.quotas.personal},
          {"similar", schedule.quotas.similar},
          {"dissimilar", schedule.quotas.dissimilar}}}}},
      {"pretrain", pretrain_json(pretrain)},
      {"similarity",
       {{"auxiliary", pretrain_json(similarity.auxiliary)},
        {"rule", similarity.rule.kind == PartitionRule::Kind::Median ? "median"
                                                                      : "threshold"},
        {"threshold", similarity.rule.threshold},
        {"share_encoder", similarity.share_encoder}}},
      {"reference",
       {{"mode", reference.mode == ReferenceMode::FineTuned ? "finetuned" : "population"},
        {"epochs", reference.epochs},
        {"lr", reference.learning_rate},
        {"batch_size", reference.batch_size}}},
      {"optimizer",
       {{"kind", optimizer_kind(optimizer.kind)},
        {"momentum", optimizer.momentum},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"epsilon", optimizer.epsilon}}},
      {"methods", methods},
      {"kmeans", {{"k", kmeans_k}, {"max_iters", kmeans_max_iters}}},
      {"per_trans_full_finetune", per_trans_full_finetune},
      {"sweep_fractions", sweep_fractions},
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"jobs", jobs},
  };
}

void ExperimentConfig::finalize() {
  if (data.csv.has_value() == data.synthetic.has_value())
    throw ConfigError("data: give exactly one of 'csv' or 'synthetic'");
  if (data.synthetic) {
    data.synthetic->task = task;
    data.synthetic->validate();
  }
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ConfigError("split_fraction must lie in (0, 1)");
  architecture.validate();
  objective.loss = loss_for(task);
  objective.validate();
  schedule.optimizer = optimizer;
  schedule.validate();
  pretrain.optimizer = optimizer;
  similarity.auxiliary.optimizer = optimizer;
  reference.optimizer = optimizer;
  for (const auto* p : {&pretrain, &similarity.auxiliary})
    if (p->batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (reference.batch_size == 0) throw ConfigError("reference.batch_size must be >= 1");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& m : methods)
    if (!is_known_method(m)) throw ConfigError("unknown method '" + m + "'");
  if (kmeans_k == 0) throw ConfigError("kmeans.k must be >= 1");
  for (double p : sweep_fractions)
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("sweep fractions must lie in (0, 1]");
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  // Where outputs go and how many threads write them does not change results.
  j.erase("output_dir");
  j.erase("jobs");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = ExperimentConfig::from_json(j);
  // Relative CSV paths are resolved against the config file's directory.
  if (c.data.csv && c.data.csv->is_relative())
    c.data.csv = path.parent_path() / *c.data.csv;
  return c;
}

}  // namespace aspers
