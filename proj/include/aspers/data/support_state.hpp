#pragma once

#include <map>
#include <string>
#include <vector>

namespace aspers {

/// Partition of a target's support users into similar (S) and dissimilar (D)
/// sets, with simplex-constrained adaptive weights over S u D.
struct SupportState {
  std::string target;
  std::vector<std::string> similar;
  std::vector<std::string> dissimilar;
  std::map<std::string, double> alpha;
  std::map<std::string, double> sim_row;  // s(target, j)

  /// Uniform alpha over S u D.
  static SupportState uniform(std::string target, std::vector<std::string> similar,
                              std::vector<std::string> dissimilar,
                              std::map<std::string, double> sim_row);

  std::size_t size() const { return similar.size() + dissimilar.size(); }
  bool is_similar(const std::string& j) const;
  bool is_dissimilar(const std::string& j) const;
  double alpha_of(const std::string& j) const;
  double similarity_of(const std::string& j) const;

  /// Throws ContractError unless keys(alpha) = S u D, S and D are disjoint,
  /// alpha >= 0 and sums to 1 within 1e-9 (when S u D is non-empty).
  void validate() const;
};

}  // namespace aspers
