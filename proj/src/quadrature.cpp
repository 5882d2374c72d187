#include "astokes/quadrature.hpp"

#include <cmath>
#include <map>

#include "astokes/tensor.hpp" // Error

namespace astokes {

namespace {

// Enumerate nonnegative integer tuples (b_1..b_dim) with sum <= s.
void enumerate_tuples(int dim, int s, std::vector<std::vector<int>>& out) {
  std::vector<int> t(dim, 0);
  while (true) {
    int sum = 0;
    for (int v : t) sum += v;
    if (sum <= s) out.push_back(t);
    int k = 0;
    while (k < dim) {
      ++t[k];
      int ss = 0;
      for (int v : t) ss += v;
      if (ss <= s) break;
      t[k] = 0;
      ++k;
    }
    if (k == dim) break;
  }
}

double factorial(int m) {
  double f = 1.0;
  for (int k = 2; k <= m; ++k) f *= k;
  return f;
}

} // namespace

QuadRule simplex_rule(int dim, int degree) {
  if (dim < 1 || dim > 3) throw Error("simplex_rule: dim must be 1, 2 or 3");
  if (degree < 1) degree = 1;
  const int s = degree / 2; // rule degree 2s+1 >= degree
  const int d = 2 * s + 1;
  const double ref_vol = 1.0 / factorial(dim);

  std::vector<std::vector<int>> tuples;
  // Points are indexed by i in 0..s and beta with |beta| = s - i.
  QuadRule rule;
  rule.dim = dim;
  rule.degree = d;
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> wts;
  for (int i = 0; i <= s; ++i) {
    const double coeff = std::pow(2.0, -2 * s) * ((i % 2) ? -1.0 : 1.0) *
                         std::pow(static_cast<double>(d + dim - 2 * i), d) /
                         (factorial(i) * factorial(d + dim - i));
    std::vector<std::vector<int>> betas;
    // |beta| = s - i over dim+1 barycentric slots; enumerate first dim slots
    // with sum <= s-i, last slot is the remainder.
    enumerate_tuples(dim, s - i, betas);
    for (const auto& b : betas) {
      int sum = 0;
      for (int v : b) sum += v;
      const int last = (s - i) - sum;
      Eigen::VectorXd x(dim);
      for (int k = 0; k < dim; ++k)
        x(k) = static_cast<double>(2 * b[k] + 1) / (d + dim - 2 * i);
      (void)last;
      pts.push_back(x);
      wts.push_back(coeff);
    }
  }
  rule.points.resize(static_cast<int>(pts.size()), dim);
  rule.weights.resize(static_cast<int>(wts.size()));
  double wsum = 0.0;
  for (size_t k = 0; k < pts.size(); ++k) {
    rule.points.row(static_cast<int>(k)) = pts[k];
    rule.weights(static_cast<int>(k)) = wts[k];
    wsum += wts[k];
  }
  // Normalize so weights sum to the reference simplex measure; the GM
  // coefficients integrate constants to 1 by construction up to round-off.
  rule.weights *= ref_vol / wsum;
  return rule;
}

} // namespace astokes
