#include "astokes/report.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "astokes/tensor.hpp"

namespace astokes {

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["version"] = version;
  j["deterministic"] = deterministic;
  if (deterministic) {
    j["timestamp"] = "0";
  } else {
    j["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  }
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json r;
    r["name"] = c.name;
    r["anchor"] = c.anchor;
    r["measured"] = c.value;
    r["tolerance"] = c.tolerance;
    r["pass"] = c.pass;
    r["level"] = c.level;
    j["checks"].push_back(r);
  }
  if (!table.empty()) {
    j["table"] = nlohmann::ordered_json::array();
    for (const auto& row : table) {
      nlohmann::ordered_json r;
      r["level"] = row.level;
      r["h"] = row.h;
      r["errors"] = row.errors;
      nlohmann::ordered_json rates = nlohmann::ordered_json::array();
      for (double x : row.rates) {
        if (std::isfinite(x))
          rates.push_back(x);
        else
          rates.push_back(nullptr);
      }
      r["rates"] = rates;
      j["table"].push_back(r);
    }
  }
  j["all_pass"] = all_pass();
  return j.dump(2) + "\n";
}

std::string Report::table_to_csv() const {
  std::ostringstream os;
  os.precision(12);
  os << "level,h";
  for (const auto& c : error_columns) os << ",err_" << c;
  for (const auto& c : error_columns) os << ",rate_" << c;
  os << "\n";
  for (const auto& row : table) {
    os << row.level << ',' << row.h;
    for (double e : row.errors) os << ',' << e;
    for (size_t k = 0; k < error_columns.size(); ++k) {
      if (k < row.rates.size() && std::isfinite(row.rates[k]))
        os << ',' << row.rates[k];
      else
        os << ",-";
    }
    os << "\n";
  }
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write file '" + path + "'");
  f << content;
}

} // namespace astokes
