#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aspers/core/matrix.hpp"
#include "aspers/core/network.hpp"
#include "aspers/optimizer/personalize.hpp"

namespace aspers {

/// Final adaptive weights arranged source x target.
struct AlphaAnalysis {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  Matrix matrix;  // rows = sources, cols = targets; each non-empty column sums to 1
  std::vector<std::pair<std::string, double>> influence;  // row sums, descending
};

/// `final_alpha` maps each target to its last-round alpha. Cells of users
/// outside a target's support (including the target itself) are 0.
AlphaAnalysis export_alpha_analysis(
    const std::map<std::string, std::map<std::string, double>>& final_alpha);

void write_alpha_matrix_csv(const AlphaAnalysis& a, const std::filesystem::path& path);
void write_influence_csv(const AlphaAnalysis& a, const std::filesystem::path& path);

nlohmann::json round_record_json(const RoundRecord& r);
nlohmann::json epoch_record_json(const EpochRecord& r);

/// One JSON object per round:
/// {round, personal, transfer, penalty, total, alpha: {...}, costs: {...}}.
void write_history_jsonl(const History& h, const std::filesystem::path& path);
void write_epoch_log_jsonl(const History& h, const std::filesystem::path& path);

/// Alpha from the last record of a history file written by
/// write_history_jsonl.
std::map<std::string, double> read_final_alpha(const std::filesystem::path& path);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

/// Shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace aspers
