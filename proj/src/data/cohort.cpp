#include "aspers/data/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aspers/error.hpp"

namespace aspers {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void sort_by_time(UserDataset& u) {
  std::vector<std::size_t> order(u.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return u.timestamps[a] < u.timestamps[b];
  });
  UserDataset sorted{u.user_id, select_rows(u.features, order), {}, {}};
  for (std::size_t i : order) {
    sorted.targets.push_back(u.targets[i]);
    sorted.timestamps.push_back(u.timestamps[i]);
  }
  u = std::move(sorted);
}

UserDataset slice(const UserDataset& u, std::size_t begin, std::size_t end) {
  UserDataset out{u.user_id, Matrix(end - begin, u.features.cols()), {}, {}};
  for (std::size_t i = begin; i < end; ++i) {
    const auto r = u.features.row(i);
    std::copy(r.begin(), r.end(), out.features.row(i - begin).begin());
    out.targets.push_back(u.targets[i]);
    out.timestamps.push_back(u.timestamps[i]);
  }
  return out;
}

FeatureStats compute_stats(const std::vector<const Matrix*>& blocks, std::size_t d) {
  FeatureStats st{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  std::size_t n = 0;
  for (const Matrix* m : blocks) {
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) st.mean[k] += (*m)(i, k);
    n += m->rows();
  }
  for (double& v : st.mean) v /= static_cast<double>(n);
  for (const Matrix* m : blocks)
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double c = (*m)(i, k) - st.mean[k];
        st.stddev[k] += c * c;
      }
  for (double& v : st.stddev) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v == 0.0) v = 1.0;
  }
  return st;
}

void apply_stats(Matrix& m, const FeatureStats& st) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < m.cols(); ++k)
      m(i, k) = (m(i, k) - st.mean[k]) / st.stddev[k];
}

}  // namespace

std::string_view to_string(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

Task task_from_string(std::string_view s) {
  if (s == "regression") return Task::Regression;
  if (s == "classification") return Task::BinaryClassification;
  throw ConfigError("unknown task '" + std::string(s) +
                    "' (expected regression|classification)");
}

void UserDataset::validate(Task task) const {
  if (targets.empty()) throw DataError("user " + user_id + " has no rows");
  if (features.rows() != targets.size() || timestamps.size() != targets.size())
    throw DataError("user " + user_id + ": row count mismatch");
  if (!std::is_sorted(timestamps.begin(), timestamps.end()))
    throw DataError("user " + user_id + ": timestamps not sorted");
  if (task == Task::BinaryClassification)
    for (double y : targets)
      if (y != 0.0 && y != 1.0)
        throw DataError("user " + user_id + ": classification target not in {0,1}");
}

std::vector<std::string> Cohort::user_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : users) ids.push_back(id);
  return ids;
}

const UserDataset& Cohort::at(const std::string& id) const {
  const auto it = users.find(id);
  if (it == users.end()) throw DataError("unknown user '" + id + "'");
  return it->second;
}

void Cohort::validate() const {
  if (users.size() < 2) throw DataError("cohort needs at least 2 users");
  for (const auto& [id, u] : users) {
    if (u.features.cols() != feature_dim)
      throw DataError("user " + id + ": feature width " +
                      std::to_string(u.features.cols()) + " != " +
                      std::to_string(feature_dim));
    u.validate(task);
  }
}

std::vector<std::string> SplitCohort::user_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : users) ids.push_back(id);
  return ids;
}

const UserSplit& SplitCohort::at(const std::string& id) const {
  const auto it = users.find(id);
  if (it == users.end()) throw DataError("unknown user '" + id + "'");
  return it->second;
}

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  std::int64_t iv = 0;
  if (auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), iv);
      ec == std::errc() && p == text.data() + text.size())
    return iv;

  // YYYY-MM-DD[(T| )HH:MM[:SS]][Z]
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  const auto y = parse_int(text.substr(0, 4));
  const auto mo = parse_int(text.substr(5, 2));
  const auto d = parse_int(text.substr(8, 2));
  if (!y || !mo || !d || *mo < 1 || *mo > 12 || *d < 1 || *d > 31)
    return std::nullopt;
  std::int64_t seconds = days_from_civil(*y, *mo, *d) * 86400;
  std::string_view rest = text.substr(10);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  if (rest.empty()) return seconds;
  if (rest.front() != 'T' && rest.front() != ' ') return std::nullopt;
  rest.remove_prefix(1);
  if (rest.size() != 5 && rest.size() != 8) return std::nullopt;
  const auto hh = parse_int(rest.substr(0, 2));
  const auto mm = parse_int(rest.substr(3, 2));
  if (rest[2] != ':' || !hh || !mm || *hh > 23 || *mm > 59) return std::nullopt;
  int ss = 0;
  if (rest.size() == 8) {
    const auto s = parse_int(rest.substr(6, 2));
    if (rest[5] != ':' || !s || *s > 60) return std::nullopt;
    ss = *s;
  }
  return seconds + *hh * 3600 + *mm * 60 + ss;
}

Cohort load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_fields(line);

  std::optional<std::size_t> col_user, col_time, col_target;
  std::map<std::size_t, std::size_t> feature_cols;  // feature index -> column
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view h = header[c];
    if (h == "user_id") col_user = c;
    else if (h == "timestamp") col_time = c;
    else if (h == "target") col_target = c;
    else if (h.size() > 1 && h.front() == 'f') {
      const auto idx = parse_int(h.substr(1));
      if (!idx || *idx < 0) throw DataError("unexpected column '" + std::string(h) + "'");
      feature_cols[static_cast<std::size_t>(*idx)] = c;
    } else {
      throw DataError("unexpected column '" + std::string(h) + "'");
    }
  }
  if (!col_user) throw DataError("missing column user_id");
  if (!col_time) throw DataError("missing column timestamp");
  if (!col_target) throw DataError("missing column target");
  const std::size_t d = feature_cols.size();
  for (std::size_t k = 0; k < d; ++k)
    if (!feature_cols.contains(k))
      throw DataError("missing column f" + std::to_string(k));
  if (d == 0) throw DataError("no feature columns");
  if (schema.feature_dim && *schema.feature_dim != d)
    throw DataError("expected " + std::to_string(*schema.feature_dim) +
                    " feature columns, found " + std::to_string(d));

  Cohort cohort;
  cohort.task = schema.task;
  cohort.feature_dim = d;
  std::size_t row = 0;
  std::vector<double> feats(d);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto where = "row " + std::to_string(row) + ": ";
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(fields.size()));
    const std::string user(fields[*col_user]);
    if (user.empty()) throw DataError(where + "empty user_id");
    const auto ts = parse_timestamp(fields[*col_time]);
    if (!ts) throw DataError(where + "unparseable timestamp '" +
                             std::string(fields[*col_time]) + "'");
    const auto y = parse_double(fields[*col_target]);
    if (!y) throw DataError(where + "unparseable target '" +
                            std::string(fields[*col_target]) + "'");
    if (schema.task == Task::BinaryClassification && *y != 0.0 && *y != 1.0)
      throw DataError(where + "classification target must be 0 or 1");
    for (std::size_t k = 0; k < d; ++k) {
      const auto v = parse_double(fields[feature_cols[k]]);
      if (!v) throw DataError(where + "unparseable value '" +
                              std::string(fields[feature_cols[k]]) + "' in f" +
                              std::to_string(k));
      feats[k] = *v;
    }
    auto& u = cohort.users[user];
    u.user_id = user;
    u.features.append_row(feats);
    u.targets.push_back(*y);
    u.timestamps.push_back(*ts);
  }
  for (auto& [_, u] : cohort.users) sort_by_time(u);
  cohort.validate();
  return cohort;
}

void write_csv(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_id,timestamp,target";
  for (std::size_t k = 0; k < cohort.feature_dim; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& [id, u] : cohort.users) {
    for (std::size_t i = 0; i < u.size(); ++i) {
      out << id << ',' << u.timestamps[i] << ',' << format_double(u.targets[i]);
      for (double v : u.features.row(i)) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

SplitCohort chronological_split(const Cohort& cohort, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie in (0, 1)");
  SplitCohort split;
  split.task = cohort.task;
  split.feature_dim = cohort.feature_dim;
  for (const auto& [id, u] : cohort.users) {
    const std::size_t n = u.size();
    if (n < 2)
      throw DataError("user " + id + " has " + std::to_string(n) +
                      " row(s); cannot form both train and test splits");
    auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    split.users[id] = UserSplit{slice(u, 0, n_train), slice(u, n_train, n)};
  }
  return split;
}

Normalization normalization_from_string(std::string_view s) {
  if (s == "pooled") return Normalization::Pooled;
  if (s == "per_user") return Normalization::PerUser;
  if (s == "none") return Normalization::None;
  throw ConfigError("unknown normalization '" + std::string(s) + "'");
}

std::map<std::string, FeatureStats> normalize_features(SplitCohort& split,
                                                       Normalization mode) {
  std::map<std::string, FeatureStats> used;
  if (mode == Normalization::None) return used;
  if (mode == Normalization::Pooled) {
    std::vector<const Matrix*> blocks;
    for (const auto& [_, u] : split.users) blocks.push_back(&u.train.features);
    const FeatureStats st = compute_stats(blocks, split.feature_dim);
    for (auto& [_, u] : split.users) {
      apply_stats(u.train.features, st);
      apply_stats(u.test.features, st);
    }
    used[""] = st;
    return used;
  }
  for (auto& [id, u] : split.users) {
    const FeatureStats st = compute_stats({&u.train.features}, split.feature_dim);
    apply_stats(u.train.features, st);
    apply_stats(u.test.features, st);
    used[id] = st;
  }
  return used;
}

}  // namespace aspers
