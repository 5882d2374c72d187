#include "astokes/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace astokes {

namespace {
std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  size_t e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}
} // namespace

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(ln) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(ln) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError("config line " + std::to_string(ln) + ": duplicate key '" +
                        key + "'");
    cfg.values_[key] = val;
    cfg.lines_[key] = ln;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "' (line " +
                      std::to_string(lines_.at(key)) + "): '" + it->second +
                      "' is not a number");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, fallback);
  if (v != std::floor(v))
    throw ConfigError("config key '" + key + "' must be an integer");
  return static_cast<int>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean");
}

void Config::validate(const std::vector<std::string>& allowed) const {
  for (const auto& [key, val] : values_) {
    bool ok = false;
    for (const auto& a : allowed) {
      if (!a.empty() && a.back() == '*') {
        if (key.rfind(a.substr(0, a.size() - 1), 0) == 0) ok = true;
      } else if (key == a) {
        ok = true;
      }
    }
    if (!ok)
      throw ConfigError("unknown config key '" + key + "' (line " +
                        std::to_string(lines_.at(key)) + ")");
  }
}

// ---------------------------------------------------------------------------
// Expression parser
// ---------------------------------------------------------------------------

struct Expression::Node {
  enum class Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos } kind;
  double value = 0.0;
  int var = 0;
  std::shared_ptr<Node> a, b;
  double eval(const Point& p) const {
    switch (kind) {
      case Kind::Const: return value;
      case Kind::Var: return p(var);
      case Kind::Add: return a->eval(p) + b->eval(p);
      case Kind::Sub: return a->eval(p) - b->eval(p);
      case Kind::Mul: return a->eval(p) * b->eval(p);
      case Kind::Div: return a->eval(p) / b->eval(p);
      case Kind::Pow: return std::pow(a->eval(p), b->eval(p));
      case Kind::Neg: return -a->eval(p);
      case Kind::Sin: return std::sin(a->eval(p));
      case Kind::Cos: return std::cos(a->eval(p));
    }
    return 0.0;
  }
};

namespace {

struct ExprParser {
  using Node = Expression::Node;
  using P = std::shared_ptr<Node>;
  const std::string& s;
  size_t pos = 0;

  explicit ExprParser(const std::string& text) : s(text) {}

  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool accept(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw ConfigError("expression '" + s + "' at position " + std::to_string(pos) +
                      ": " + what);
  }
  P make(Node::Kind k, P a = nullptr, P b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
  P expr() {
    P lhs = term();
    while (true) {
      if (accept('+')) lhs = make(Node::Kind::Add, lhs, term());
      else if (accept('-')) lhs = make(Node::Kind::Sub, lhs, term());
      else return lhs;
    }
  }
  P term() {
    P lhs = factor();
    while (true) {
      if (accept('*')) lhs = make(Node::Kind::Mul, lhs, factor());
      else if (accept('/')) lhs = make(Node::Kind::Div, lhs, factor());
      else return lhs;
    }
  }
  P factor() {
    P base = unary();
    if (accept('^')) return make(Node::Kind::Pow, base, factor());
    return base;
  }
  P unary() {
    if (accept('-')) return make(Node::Kind::Neg, unary());
    return primary();
  }
  P primary() {
    skip();
    if (pos >= s.size()) fail("unexpected end");
    const char c = s[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      double v;
      try {
        v = std::stod(s.substr(pos), &used);
      } catch (...) {
        fail("bad number");
      }
      pos += used;
      auto n = make(Node::Kind::Const);
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t e = pos;
      while (e < s.size() && std::isalpha(static_cast<unsigned char>(s[e]))) ++e;
      const std::string name = s.substr(pos, e - pos);
      pos = e;
      if (name == "x" || name == "y" || name == "z") {
        auto n = make(Node::Kind::Var);
        n->var = name == "x" ? 0 : name == "y" ? 1 : 2;
        return n;
      }
      if (name == "pi") {
        auto n = make(Node::Kind::Const);
        n->value = M_PI;
        return n;
      }
      if (name == "sin" || name == "cos") {
        if (!accept('(')) fail("expected '(' after " + name);
        P arg = expr();
        if (!accept(')')) fail("expected ')'");
        return make(name == "sin" ? Node::Kind::Sin : Node::Kind::Cos, arg);
      }
      fail("unknown identifier '" + name + "'");
    }
    if (accept('(')) {
      P inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    fail("unexpected character");
  }
};

} // namespace

Expression::Expression(const std::string& text) : text_(text) {
  ExprParser p(text_);
  root_ = p.expr();
  p.skip();
  if (p.pos != text_.size())
    throw ConfigError("expression '" + text + "': trailing characters at " +
                      std::to_string(p.pos));
}

double Expression::eval(const Point& p) const { return root_->eval(p); }

VectorExpression::VectorExpression(const std::string& text) {
  std::string cur;
  int depth = 0;
  for (char c : text) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      comps_.emplace_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) comps_.emplace_back(cur);
  if (comps_.empty()) throw ConfigError("empty vector expression");
}

Eigen::Vector3d VectorExpression::eval(const Point& p) const {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  for (size_t k = 0; k < comps_.size() && k < 3; ++k) v(static_cast<int>(k)) = comps_[k].eval(p);
  return v;
}

CoeffTensor tensor_from_config(const Config& cfg, int dim) {
  const std::string kind = cfg.get("tensor.kind", "isotropic");
  if (kind == "isotropic") {
    const double mu = cfg.get_double("tensor.mu", 1.0);
    const double lambda = cfg.get_double("tensor.lambda", 0.0);
    return make_isotropic(dim, mu, lambda);
  }
  if (kind == "per_region") {
    return make_isotropic_per_region(
        dim, cfg.get_double("tensor.mu_inner", 1.0),
        cfg.get_double("tensor.mu_outer", 1.0),
        cfg.get_double("tensor.lambda_inner", 0.0),
        cfg.get_double("tensor.lambda_outer", 0.0));
  }
  if (kind == "table") {
    // entries tensor.a_ijab = value with 1-based indices; missing entries
    // default to the isotropic base (tensor.mu/tensor.lambda) if given.
    CoeffTensor A = make_isotropic(dim, cfg.get_double("tensor.mu", 1.0),
                                   cfg.get_double("tensor.lambda", 0.0));
    for (const auto& [key, val] : cfg.values()) {
      if (key.rfind("tensor.a_", 0) != 0) continue;
      const std::string idx = key.substr(9);
      if (idx.size() != static_cast<size_t>(4))
        throw ConfigError("tensor table key '" + key + "' needs 4 index digits");
      const int i = idx[0] - '1', j = idx[1] - '1', a = idx[2] - '1', b = idx[3] - '1';
      if (i < 0 || j < 0 || a < 0 || b < 0 || i >= dim || j >= dim || a >= dim ||
          b >= dim)
        throw ConfigError("tensor table key '" + key + "': index out of range");
      const double v = cfg.get_double(key, 0.0);
      // impose the required symmetries on the stored entry
      A.set_entry(i, j, a, b, SpatialFn(v));
      A.set_entry(a, j, i, b, SpatialFn(v));
      A.set_entry(i, b, a, j, SpatialFn(v));
      A.set_entry(a, b, i, j, SpatialFn(v));
    }
    return A;
  }
  throw ConfigError("tensor.kind '" + kind + "' is not one of isotropic, "
                    "per_region, table");
}

} // namespace astokes
