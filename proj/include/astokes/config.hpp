#ifndef ASTOKES_CONFIG_HPP
#define ASTOKES_CONFIG_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "astokes/tensor.hpp"

namespace astokes {

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Flat key-value configuration: one `key = value` pair per line, '#'
/// comments, UTF-8. Keys use dotted sections (mesh.h, tensor.mu, ...).
/// Unknown keys are rejected against the schema of the requested experiment.
class Config {
public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws ConfigError when a key outside `allowed` is present. Entries in
  /// `allowed` ending in '*' act as prefixes (tensor.a_*).
  void validate(const std::vector<std::string>& allowed) const;

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

/// Tiny expression vocabulary for analytic data fields: numbers, x y z,
/// + - * / ^, sin cos, parentheses. Parsed once, evaluated at points.
class Expression {
public:
  explicit Expression(const std::string& text);
  double eval(const Point& p) const;
  const std::string& text() const { return text_; }

  struct Node; // implementation detail, defined in config.cpp

private:
  std::shared_ptr<Node> root_;
  std::string text_;
};

/// Comma-separated component expressions ("y, -x" or "0,0,1").
class VectorExpression {
public:
  VectorExpression() = default;
  explicit VectorExpression(const std::string& text);
  Eigen::Vector3d eval(const Point& p) const;
  int components() const { return static_cast<int>(comps_.size()); }
  bool empty() const { return comps_.empty(); }

private:
  std::vector<Expression> comps_;
};

/// Tensor from a config: kind = isotropic | per_region | table.
CoeffTensor tensor_from_config(const Config& cfg, int dim);

} // namespace astokes

#endif
