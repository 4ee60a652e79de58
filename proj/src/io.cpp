#include "fidmix/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fidmix/error.hpp"
#include "fidmix/inference.hpp"
#include "fidmix/sim.hpp"

namespace fidmix {

namespace {

using nlohmann::json;

std::vector<int> int_list(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("model document needs \"") + key + "\"");
  return j.at(key).get<std::vector<int>>();
}

ModelSpec explicit_model(const json& j) {
  const auto rows = j.at("X").get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw InvalidDesign("model has no observations");
  const int n = static_cast<int>(rows.size());
  const int p = static_cast<int>(rows.front().size());
  Eigen::MatrixXd x(n, p);
  for (int t = 0; t < n; ++t) {
    if (static_cast<int>(rows[static_cast<std::size_t>(t)].size()) != p)
      throw InvalidDesign("row " + std::to_string(t + 1) + " of X has the wrong length");
    for (int k = 0; k < p; ++k) x(t, k) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
  }
  if (j.contains("n") && j.at("n").get<int>() != n)
    throw InvalidDesign("\"n\" disagrees with the number of rows of X");
  if (j.contains("p") && j.at("p").get<int>() != p)
    throw InvalidDesign("\"p\" disagrees with the number of columns of X");

  std::vector<RandomEffect> effects;
  for (const auto& e : j.at("effects")) {
    RandomEffect eff;
    eff.levels = e.at("levels").get<int>();
    const auto assign = e.at("assignments").get<std::vector<int>>();
    std::vector<double> coeff(assign.size(), 1.0);
    if (e.contains("coefficients")) coeff = e.at("coefficients").get<std::vector<double>>();
    if (static_cast<int>(assign.size()) != n || coeff.size() != assign.size())
      throw InvalidDesign("every effect needs one assignment per observation");
    for (std::size_t t = 0; t < assign.size(); ++t) {
      if (assign[t] < 1 || assign[t] > eff.levels)
        throw InvalidDesign("assignment " + std::to_string(assign[t]) + " outside 1.." +
                            std::to_string(eff.levels));
      eff.rows.push_back({LevelCoeff{assign[t] - 1, coeff[t]}});
    }
    effects.push_back(std::move(eff));
  }
  if (j.contains("r") && j.at("r").get<int>() != static_cast<int>(effects.size()))
    throw InvalidDesign("\"r\" disagrees with the number of effects");
  auto names = j.at("names").get<std::vector<std::string>>();
  ModelSpec spec(std::move(x), std::move(effects), std::move(names));
  const auto issues = validate(spec);
  if (!issues.empty()) throw InvalidDesign("invalid model: " + issues.front());
  return spec;
}

}  // namespace

ModelSpec parse_model_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model document is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model document must be a JSON object");
  try {
    if (j.contains("design")) return find_design(j.at("design").get<std::string>()).build();
    if (j.contains("builder")) {
      const auto kind = j.at("builder").get<std::string>();
      if (kind == "one_way") {
        const auto counts = int_list(j, "counts");
        return build_one_way(static_cast<int>(counts.size()), counts);
      }
      if (kind == "nested") {
        const auto ji = int_list(j, "J");
        return build_two_fold_nested(static_cast<int>(ji.size()), ji, int_list(j, "K"));
      }
      if (kind == "crossed")
        return build_two_factor_crossed(j.at("I").get<int>(), j.at("J").get<int>(), int_list(j, "K"));
      throw ConfigError("unknown builder '" + kind + "' (expected one_way, nested or crossed)");
    }
    return explicit_model(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model document: ") + e.what());
  }
}

ModelSpec load_model(const std::filesystem::path& path) {
  try {
    return parse_model_json(read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const InvalidDesign& e) {
    throw InvalidDesign(path.string() + ": " + e.what());
  }
}

std::string model_json(const ModelSpec& model) {
  nlohmann::ordered_json j;
  j["p"] = model.p();
  j["r"] = model.r();
  j["n"] = model.n();
  j["X"] = nlohmann::ordered_json::array();
  for (int t = 0; t < model.n(); ++t) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int k = 0; k < model.p(); ++k) row.push_back(model.x()(t, k));
    j["X"].push_back(row);
  }
  j["effects"] = nlohmann::ordered_json::array();
  for (const auto& eff : model.effects()) {
    nlohmann::ordered_json e;
    e["levels"] = eff.levels;
    nlohmann::ordered_json assign = nlohmann::ordered_json::array(), coeff = assign;
    bool unit = true;
    for (const auto& row : eff.rows) {
      if (row.size() != 1) throw PreconditionError("only membership designs can be written as JSON");
      assign.push_back(row.front().level + 1);
      coeff.push_back(row.front().coeff);
      unit = unit && row.front().coeff == 1.0;
    }
    e["assignments"] = assign;
    if (!unit) e["coefficients"] = coeff;
    j["effects"].push_back(e);
  }
  j["names"] = model.names();
  return j.dump(2) + "\n";
}

IntervalDataset load_data(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "lower,upper")
    throw InvalidData(path.string() + ": expected header 'lower,upper'");
  IntervalDataset data;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw InvalidData(where + ": expected two fields");
    IntervalObservation obs;
    try {
      obs.a = parse_real(line.substr(0, comma));
      obs.b = parse_real(line.substr(comma + 1));
    } catch (const InvalidData& e) {
      throw InvalidData(where + ": " + e.what());
    }
    obs.row = data.n() + 1;
    data.observations.push_back(obs);
  }
  return data;
}

void save_data(const IntervalDataset& data, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "lower,upper\n";
  for (const auto& obs : data.observations) out << format_real(obs.a) << ',' << format_real(obs.b) << '\n';
  write_text(path, out.str());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fidmix
