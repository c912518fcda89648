#include "aspers/data/support_state.hpp"

#include <algorithm>
#include <cmath>

#include "aspers/error.hpp"

namespace aspers {

SupportState SupportState::uniform(std::string target, std::vector<std::string> similar,
                                   std::vector<std::string> dissimilar,
                                   std::map<std::string, double> sim_row) {
  SupportState s{std::move(target), std::move(similar), std::move(dissimilar), {},
                 std::move(sim_row)};
  const double w = s.size() ? 1.0 / static_cast<double>(s.size()) : 0.0;
  for (const auto& j : s.similar) s.alpha[j] = w;
  for (const auto& j : s.dissimilar) s.alpha[j] = w;
  return s;
}

bool SupportState::is_similar(const std::string& j) const {
  return std::find(similar.begin(), similar.end(), j) != similar.end();
}

bool SupportState::is_dissimilar(const std::string& j) const {
  return std::find(dissimilar.begin(), dissimilar.end(), j) != dissimilar.end();
}

double SupportState::alpha_of(const std::string& j) const {
  const auto it = alpha.find(j);
  if (it == alpha.end()) throw ContractError("no adaptive weight for user " + j);
  return it->second;
}

double SupportState::similarity_of(const std::string& j) const {
  const auto it = sim_row.find(j);
  if (it == sim_row.end()) throw ContractError("no similarity score for user " + j);
  return it->second;
}

void SupportState::validate() const {
  if (alpha.size() != size())
    throw ContractError("alpha keys do not match S u D for target " + target);
  double total = 0.0;
  for (const auto& [j, a] : alpha) {
    if (!is_similar(j) && !is_dissimilar(j))
      throw ContractError("alpha key " + j + " outside S u D");
    if (is_similar(j) && is_dissimilar(j))
      throw ContractError("user " + j + " is in both S and D");
    if (j == target) throw ContractError("target " + j + " listed as its own support");
    if (!(a >= 0.0)) throw ContractError("negative or NaN alpha for " + j);
    total += a;
  }
  if (size() > 0 && std::abs(total - 1.0) > 1e-9)
    throw ContractError("alpha off the simplex (sum " + std::to_string(total) + ")");
}

}  // namespace aspers
