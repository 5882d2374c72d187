#include "astokes/tensor.hpp"

#include <cmath>
#include <random>

namespace astokes {

CoeffTensor::CoeffTensor(int dim, std::string label)
    : n_(dim), label_(std::move(label)) {
  if (dim != 2 && dim != 3) throw Error("CoeffTensor: dim must be 2 or 3");
  entries_.assign(n_ * n_ * n_ * n_, SpatialFn(0.0));
}

Eigen::MatrixXd CoeffTensor::entry_matrix(const Point& x, int region) const {
  const int n = n_;
  Eigen::MatrixXd Q(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a)
      for (int j = 0; j < n; ++j)
        for (int b = 0; b < n; ++b)
          Q(i * n + a, j * n + b) = entry(i, j, a, b, x, region);
  return Q;
}

double CoeffTensor::sup_norm(const std::vector<Point>& samples) const {
  double m = 0.0;
  for (const auto& x : samples)
    for (const auto& f : entries_)
      for (int reg = 0; reg < 2; ++reg) m = std::max(m, std::abs(f(x, reg)));
  return m;
}

bool CoeffTensor::all_constant() const {
  for (const auto& f : entries_)
    if (!f.is_constant()) return false;
  return true;
}

namespace {
double kdelta(int a, int b) { return a == b ? 1.0 : 0.0; }
} // namespace

CoeffTensor make_isotropic(int n, const SpatialFn& mu, const SpatialFn& lambda) {
  // Probe mu at a few canonical points; non-positive samples are rejected.
  const Point probes[] = {Point(0, 0, 0), Point(1, 0, 0), Point(0, 1, 0),
                          Point(0.3, -0.7, 0.2), Point(-1.5, 2.0, -0.4)};
  for (const auto& p : probes)
    for (int reg = 0; reg < 2; ++reg)
      if (!(mu(p, reg) > 0.0))
        throw Error("make_isotropic: mu sample " + std::to_string(mu(p, reg)) +
                    " is not positive");
  CoeffTensor A(n, "isotropic");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const double cl = kdelta(i, a) * kdelta(j, b);
          const double cm = kdelta(a, j) * kdelta(b, i) + kdelta(a, b) * kdelta(i, j);
          if (mu.is_constant() && lambda.is_constant()) {
            A.set_entry(i, j, a, b,
                        SpatialFn(cl * lambda(Point::Zero()) + cm * mu(Point::Zero())));
          } else {
            SpatialFn m = mu, l = lambda;
            A.set_entry(i, j, a, b, SpatialFn::callback([cl, cm, m, l](const Point& x) {
                          return cl * l(x) + cm * m(x);
                        }));
          }
        }
  return A;
}

CoeffTensor make_isotropic(int n, double mu, double lambda) {
  return make_isotropic(n, SpatialFn(mu), SpatialFn(lambda));
}

CoeffTensor make_isotropic_per_region(int n, double mu_in, double mu_out,
                                      double la_in, double la_out) {
  if (!(mu_in > 0.0) || !(mu_out > 0.0))
    throw Error("make_isotropic_per_region: mu must be positive");
  CoeffTensor A(n, "isotropic_per_region");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const double cl = kdelta(i, a) * kdelta(j, b);
          const double cm = kdelta(a, j) * kdelta(b, i) + kdelta(a, b) * kdelta(i, j);
          A.set_entry(i, j, a, b,
                      SpatialFn::per_region(cl * la_in + cm * mu_in,
                                            cl * la_out + cm * mu_out));
        }
  return A;
}

SymmetryCheck check_symmetry(const CoeffTensor& A,
                             const std::vector<Point>& samples, double tol) {
  if (samples.empty()) throw Error("check_symmetry: sample set is empty");
  const int n = A.dim();
  SymmetryCheck r;
  for (const auto& x : samples)
    for (int reg = 0; reg < 2; ++reg)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
              const double v = A.entry(i, j, a, b, x, reg);
              const double s1 = A.entry(a, j, i, b, x, reg);
              const double s2 = A.entry(i, b, a, j, x, reg);
              r.max_violation = std::max(
                  {r.max_violation, std::abs(v - s1), std::abs(v - s2)});
              if (!std::isfinite(v)) r.max_violation = INFINITY;
            }
  r.ok = r.max_violation <= tol;
  return r;
}

std::vector<Eigen::MatrixXd> symmetric_tracefree_basis(int n) {
  std::vector<Eigen::MatrixXd> basis;
  const double s2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
      B(i, j) = B(j, i) = s2;
      basis.push_back(B);
    }
  if (n == 2) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 2);
    B(0, 0) = s2;
    B(1, 1) = -s2;
    basis.push_back(B);
  } else {
    Eigen::MatrixXd B1 = Eigen::MatrixXd::Zero(3, 3);
    B1(0, 0) = s2;
    B1(1, 1) = -s2;
    basis.push_back(B1);
    Eigen::MatrixXd B2 = Eigen::MatrixXd::Zero(3, 3);
    const double s6 = 1.0 / std::sqrt(6.0);
    B2(0, 0) = s6;
    B2(1, 1) = s6;
    B2(2, 2) = -2.0 * s6;
    basis.push_back(B2);
  }
  return basis;
}

namespace {
double quad_form(const CoeffTensor& A, const Point& x, int reg,
                 const Eigen::MatrixXd& xi, const Eigen::MatrixXd& eta) {
  const int n = A.dim();
  double q = 0.0;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a)
      for (int j = 0; j < n; ++j)
        for (int b = 0; b < n; ++b)
          q += A.entry(i, j, a, b, x, reg) * xi(i, a) * eta(j, b);
  return q;
}
} // namespace

EllipticityReport ellipticity_constant(const CoeffTensor& A,
                                       const std::vector<Point>& samples) {
  auto sym = check_symmetry(A, samples);
  if (!sym.ok)
    throw Error("ellipticity_constant: tensor violates symmetry by " +
                std::to_string(sym.max_violation));
  const auto basis = symmetric_tracefree_basis(A.dim());
  const int m = static_cast<int>(basis.size());
  EllipticityReport rep;
  rep.c_inv = INFINITY;
  for (const auto& x : samples)
    for (int reg = 0; reg < 2; ++reg) {
      Eigen::MatrixXd G(m, m);
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) G(k, l) = quad_form(A, x, reg, basis[k], basis[l]);
      Eigen::MatrixXd Gs = 0.5 * (G + G.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gs);
      const int kmin = 0;
      if (es.eigenvalues()(kmin) < rep.c_inv) {
        rep.c_inv = es.eigenvalues()(kmin);
        rep.worst_point = x;
        Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(A.dim(), A.dim());
        for (int k = 0; k < m; ++k) dir += es.eigenvectors()(k, kmin) * basis[k];
        rep.worst_direction = dir;
      }
    }
  rep.elliptic = rep.c_inv > 0.0;
  return rep;
}

CoeffTensor adjoint_tensor(const CoeffTensor& A) {
  const int n = A.dim();
  CoeffTensor S(n, A.label() + "*");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          S.set_entry(i, j, a, b, A.entry_fn(j, i, b, a));
  return S;
}

bool is_self_adjoint(const CoeffTensor& A, const std::vector<Point>& samples,
                     double tol) {
  const int n = A.dim();
  for (const auto& x : samples)
    for (int reg = 0; reg < 2; ++reg)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
              if (std::abs(A.entry(i, j, a, b, x, reg) -
                           A.entry(j, i, b, a, x, reg)) > tol)
                return false;
  return true;
}

ADNSymbol adn_symbol(const CoeffTensor& A, const Point& x,
                     const Eigen::VectorXd& xi, int region) {
  const int n = A.dim();
  if (xi.size() != n) throw Error("adn_symbol: direction size mismatch");
  if (xi.norm() <= 0.0) throw Error("adn_symbol: xi must be nonzero");
  ADNSymbol s;
  s.point = x;
  s.direction = xi;
  s.matrix = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < n; ++j) {
      double v = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          v += xi(a) * A.entry(l, j, a, b, x, region) * xi(b);
      s.matrix(l, j) = v;
    }
  for (int l = 0; l < n; ++l) {
    s.matrix(l, n) = -xi(l);
    s.matrix(n, l) = -xi(l);
  }
  return s;
}

ADNReport adn_ellipticity_check(const CoeffTensor& A,
                                const std::vector<Point>& samples,
                                int n_directions, unsigned seed) {
  if (n_directions < 1) throw Error("adn_ellipticity_check: n_directions >= 1");
  const int n = A.dim();
  const double scale = std::pow(1.0 + A.sup_norm(samples), n);
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ADNReport rep;
  rep.min_scaled_det = INFINITY;
  rep.pass = true;
  for (const auto& x : samples)
    for (int d = 0; d < n_directions; ++d) {
      Eigen::VectorXd xi(n);
      do {
        for (int k = 0; k < n; ++k) xi(k) = gauss(rng);
      } while (xi.norm() < 1e-8);
      xi.normalize();
      double det = INFINITY;
      for (int reg = 0; reg < 2; ++reg)
        det = std::min(det, std::abs(adn_symbol(A, x, xi, reg).det()) / scale);
      if (det < rep.min_scaled_det) {
        rep.min_scaled_det = det;
        rep.worst_point = x;
        rep.worst_direction = xi;
      }
      if (det <= 1e-10) rep.pass = false;
    }
  return rep;
}

} // namespace astokes
