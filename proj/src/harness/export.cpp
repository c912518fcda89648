#include "aspers/harness/export.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "aspers/error.hpp"

namespace aspers {

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

AlphaAnalysis export_alpha_analysis(
    const std::map<std::string, std::map<std::string, double>>& final_alpha) {
  AlphaAnalysis a;
  std::set<std::string> users;
  for (const auto& [t, alpha] : final_alpha) {
    users.insert(t);
    for (const auto& [j, _] : alpha) users.insert(j);
  }
  a.sources.assign(users.begin(), users.end());
  for (const auto& [t, _] : final_alpha) a.targets.push_back(t);
  a.matrix = Matrix(a.sources.size(), a.targets.size());

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < a.sources.size(); ++i) row_of[a.sources[i]] = i;
  for (std::size_t c = 0; c < a.targets.size(); ++c) {
    const auto& alpha = final_alpha.at(a.targets[c]);
    double total = 0.0;
    for (const auto& [j, v] : alpha) total += v;
    if (total <= 0.0) continue;
    for (const auto& [j, v] : alpha) a.matrix(row_of[j], c) = v / total;
  }
  for (std::size_t r = 0; r < a.sources.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.targets.size(); ++c) s += a.matrix(r, c);
    a.influence.emplace_back(a.sources[r], s);
  }
  std::stable_sort(a.influence.begin(), a.influence.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  return a;
}

void write_alpha_matrix_csv(const AlphaAnalysis& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "source";
  for (const auto& t : a.targets) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < a.sources.size(); ++r) {
    out << a.sources[r];
    for (std::size_t c = 0; c < a.targets.size(); ++c)
      out << ',' << format_double(a.matrix(r, c));
    out << '\n';
  }
}

void write_influence_csv(const AlphaAnalysis& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user,influence\n";
  for (const auto& [u, v] : a.influence) out << u << ',' << format_double(v) << '\n';
}

nlohmann::json round_record_json(const RoundRecord& r) {
  return {{"round", r.round},
          {"personal", r.loss.personal},
          {"transfer", r.loss.transfer},
          {"penalty", r.loss.penalty},
          {"total", r.loss.total},
          {"alpha", r.alpha},
          {"costs", r.costs}};
}

nlohmann::json epoch_record_json(const EpochRecord& r) {
  return {{"round", r.round},
          {"epoch", r.epoch},
          {"personal", r.loss.personal},
          {"transfer", r.loss.transfer},
          {"penalty", r.loss.penalty},
          {"total", r.loss.total}};
}

void write_history_jsonl(const History& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : h.rounds) out << round_record_json(r).dump() << '\n';
}

void write_epoch_log_jsonl(const History& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : h.epochs) out << epoch_record_json(r).dump() << '\n';
}

std::map<std::string, double> read_final_alpha(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) throw DataError(path.string() + ": empty history");
  try {
    return nlohmann::json::parse(last).at("alpha").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w(l.weights.values().begin(), l.weights.values().end());
    layers.push_back({{"in", l.in_width()},
                      {"out", l.out_width()},
                      {"activation", std::string(to_string(l.activation))},
                      {"weights", w},
                      {"bias", l.bias}});
  }
  return {{"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
  std::vector<DenseLayer> layers;
  try {
    for (const auto& l : j.at("layers")) {
      const auto in = l.at("in").get<std::size_t>();
      const auto out = l.at("out").get<std::size_t>();
      layers.push_back({Matrix(out, in, l.at("weights").get<std::vector<double>>()),
                        l.at("bias").get<std::vector<double>>(),
                        activation_from_string(l.at("activation").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model json: ") + e.what());
  }
  return Mlp(std::move(layers));
}

}  // namespace aspers
