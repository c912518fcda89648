#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aspers/core/matrix.hpp"

namespace aspers {

enum class Task { Regression, BinaryClassification };

std::string_view to_string(Task t);
Task task_from_string(std::string_view s);

struct UserDataset {
  std::string user_id;
  Matrix features;  // N x d
  std::vector<double> targets;
  std::vector<std::int64_t> timestamps;  // nondecreasing

  std::size_t size() const { return targets.size(); }
  void validate(Task task) const;

  friend bool operator==(const UserDataset&, const UserDataset&) = default;
};

struct Cohort {
  std::map<std::string, UserDataset> users;
  Task task = Task::Regression;
  std::size_t feature_dim = 0;

  std::vector<std::string> user_ids() const;
  const UserDataset& at(const std::string& id) const;
  void validate() const;

  friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct UserSplit {
  UserDataset train;
  UserDataset test;
};

struct SplitCohort {
  std::map<std::string, UserSplit> users;
  Task task = Task::Regression;
  std::size_t feature_dim = 0;

  std::vector<std::string> user_ids() const;
  const UserSplit& at(const std::string& id) const;
};

struct CsvSchema {
  Task task = Task::Regression;
  // When set, the header must carry exactly this many feature columns.
  std::optional<std::size_t> feature_dim;
};

/// Reads `user_id,timestamp,target,f0,...` rows. Columns are matched by
/// name. Rows are grouped by user and stably sorted by timestamp. Errors
/// cite the 1-based data row (the header is not counted).
Cohort load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes the cohort in the load_csv format; doubles use the shortest
/// representation that round-trips exactly.
void write_csv(const Cohort& cohort, const std::filesystem::path& path);

/// Integer timestamp or ISO-8601 date / date-time, mapped to seconds since
/// the Unix epoch. Returns nullopt when neither form parses.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

/// Per user, the first ceil(fraction * N) rows go to train, the rest to test.
SplitCohort chronological_split(const Cohort& cohort, double fraction);

enum class Normalization { Pooled, PerUser, None };

Normalization normalization_from_string(std::string_view s);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// z-normalizes features with statistics computed on train rows only and
/// applies the same statistics to test rows. Returns the statistics used
/// (per user for PerUser, a single pooled entry under "" otherwise).
std::map<std::string, FeatureStats> normalize_features(SplitCohort& split,
                                                       Normalization mode);

}  // namespace aspers
