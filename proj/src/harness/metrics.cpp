#include "aspers/harness/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "aspers/error.hpp"

namespace aspers {

double evaluate(const PersonalModel& model, const UserDataset& test, Task task) {
  if (test.size() == 0) throw DataError("cannot evaluate user " + test.user_id +
                                        " on an empty test set");
  const Matrix pred = model.predict(test.features);
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (task == Task::Regression) {
      const double r = pred(i, 0) - test.targets[i];
      acc += r * r;
    } else {
      const double p = 1.0 / (1.0 + std::exp(-pred(i, 0)));
      acc += ((p >= 0.5 ? 1.0 : 0.0) == test.targets[i]) ? 1.0 : 0.0;
    }
  }
  acc /= static_cast<double>(test.size());
  return task == Task::Regression ? std::sqrt(acc) : acc;
}

MetricsReport::MetricsReport(Task task, std::vector<std::string> users)
    : task_(task), users_(std::move(users)) {
  std::sort(users_.begin(), users_.end());
}

void MetricsReport::add(const std::string& method,
                        const std::map<std::string, double>& per_user) {
  if (per_user.size() != users_.size())
    throw ContractError("method " + method + " covers " +
                        std::to_string(per_user.size()) + " users, report has " +
                        std::to_string(users_.size()));
  MethodMetrics m;
  for (const auto& u : users_) {
    const auto it = per_user.find(u);
    if (it == per_user.end())
      throw ContractError("method " + method + " is missing user " + u);
    const double v = it->second;
    if (!std::isfinite(v) || v < 0.0 || (task_ != Task::Regression && v > 1.0))
      throw ContractError("method " + method + ": metric out of range for " + u);
    m.per_user[u] = v;
    m.mean += v;
  }
  m.mean /= static_cast<double>(users_.size());
  methods_[method] = std::move(m);
}

MetricsReport MetricsReport::merge(const MetricsReport& a, const MetricsReport& b) {
  if (a.task_ != b.task_ || a.users_ != b.users_)
    throw ContractError("cannot merge metrics reports over different users or tasks");
  MetricsReport out = a;
  for (const auto& [name, m] : b.methods_) out.methods_[name] = m;
  return out;
}

const MethodMetrics& MetricsReport::at(const std::string& method) const {
  const auto it = methods_.find(method);
  if (it == methods_.end()) throw ContractError("no metrics for method " + method);
  return it->second;
}

std::string MetricsReport::metric_name() const {
  return task_ == Task::Regression ? "rmse" : "accuracy";
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [name, m] : methods_)
    methods[name] = {{"per_user", m.per_user}, {"mean", m.mean}};
  return {{"task", std::string(to_string(task_))},
          {"metric", metric_name()},
          {"users", users_},
          {"methods", methods}};
}

}  // namespace aspers
