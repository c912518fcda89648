#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "aspers/core/model.hpp"
#include "aspers/data/cohort.hpp"

namespace aspers {

/// RMSE for regression; for classification the fraction of rows where
/// 1[sigmoid(logit) >= 0.5] equals the target. Throws DataError on an empty
/// test set.
double evaluate(const PersonalModel& model, const UserDataset& test, Task task);

struct MethodMetrics {
  std::map<std::string, double> per_user;
  double mean = 0.0;
};

/// Per-method, per-user test metrics over one fixed user set.
class MetricsReport {
 public:
  MetricsReport(Task task, std::vector<std::string> users);

  /// Adds a method; throws ContractError when its users differ from the
  /// report's user set or a value breaks the metric's range.
  void add(const std::string& method, const std::map<std::string, double>& per_user);

  /// Union of methods; both reports must cover the same users and task.
  static MetricsReport merge(const MetricsReport& a, const MetricsReport& b);

  Task task() const { return task_; }
  const std::vector<std::string>& users() const { return users_; }
  const std::map<std::string, MethodMetrics>& methods() const { return methods_; }
  const MethodMetrics& at(const std::string& method) const;
  std::string metric_name() const;

  nlohmann::json to_json() const;

 private:
  Task task_;
  std::vector<std::string> users_;
  std::map<std::string, MethodMetrics> methods_;
};

}  // namespace aspers
