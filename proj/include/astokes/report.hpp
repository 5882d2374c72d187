#ifndef ASTOKES_REPORT_HPP
#define ASTOKES_REPORT_HPP

#include <string>
#include <vector>

namespace astokes {

struct CheckRecord {
  std::string name;
  std::string anchor;   // provenance note for the checked identity
  double value = 0.0;   // measured value
  double tolerance = 0.0;
  bool pass = false;
  int level = 0;        // mesh level when meaningful
};

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  std::vector<double> errors;
  std::vector<double> rates; // log2(e_k / e_{k+1}); NaN printed as "-"
};

struct Report {
  std::string experiment;
  std::vector<CheckRecord> checks;
  std::vector<std::string> error_columns;
  std::vector<ConvergenceRow> table;
  bool deterministic = false;
  std::string version = "anisostokes 0.1.0";

  void add(const std::string& name, const std::string& anchor, double value,
           double tol, bool pass, int level = 0) {
    checks.push_back({name, anchor, value, tol, pass, level});
  }
  void add_leq(const std::string& name, const std::string& anchor, double value,
               double tol, int level = 0) {
    checks.push_back({name, anchor, value, tol, value <= tol, level});
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  std::string to_json() const;
  std::string table_to_csv() const;
};

void write_file(const std::string& path, const std::string& content);

} // namespace astokes

#endif
