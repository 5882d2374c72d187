#ifndef ASTOKES_TENSOR_HPP
#define ASTOKES_TENSOR_HPP

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace astokes {

using Point = Eigen::Vector3d; // third component ignored in 2D

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Spatial scalar coefficient: constant, per-region constant, or a callback
/// of position. Region tag convention: 0 = inner, 1 = outer.
class SpatialFn {
public:
  SpatialFn() : kind_(Kind::Constant), c0_(0.0), c1_(0.0) {}
  SpatialFn(double c) : kind_(Kind::Constant), c0_(c), c1_(c) {}
  static SpatialFn constant(double c) { return SpatialFn(c); }
  static SpatialFn per_region(double inner, double outer) {
    SpatialFn f;
    f.kind_ = Kind::PerRegion;
    f.c0_ = inner;
    f.c1_ = outer;
    return f;
  }
  static SpatialFn callback(std::function<double(const Point&)> fn) {
    SpatialFn f;
    f.kind_ = Kind::Callback;
    f.fn_ = std::move(fn);
    return f;
  }
  double operator()(const Point& x, int region = 0) const {
    switch (kind_) {
      case Kind::Constant: return c0_;
      case Kind::PerRegion: return region == 0 ? c0_ : c1_;
      case Kind::Callback: return fn_(x);
    }
    return 0.0;
  }
  bool is_constant() const { return kind_ == Kind::Constant; }

private:
  enum class Kind { Constant, PerRegion, Callback };
  Kind kind_;
  double c0_, c1_;
  std::function<double(const Point&)> fn_;
};

/// Viscosity coefficient tensor a_ij^{alpha beta}(x), dim n in {2,3}.
/// Entries are stored as spatial functions indexed flat by
/// ((i*n+j)*n+alpha)*n+beta. Immutable after construction.
class CoeffTensor {
public:
  CoeffTensor(int dim, std::string label = "");

  int dim() const { return n_; }
  const std::string& label() const { return label_; }

  /// a_{ij}^{alpha beta} evaluated at x (region tag for per-region entries).
  double entry(int i, int j, int alpha, int beta, const Point& x,
               int region = 0) const {
    return entries_[idx(i, j, alpha, beta)](x, region);
  }
  void set_entry(int i, int j, int alpha, int beta, const SpatialFn& f) {
    entries_[idx(i, j, alpha, beta)] = f;
  }
  const SpatialFn& entry_fn(int i, int j, int alpha, int beta) const {
    return entries_[idx(i, j, alpha, beta)];
  }

  /// Dense n^2 x n^2 matrix Q with Q[(i,alpha),(j,beta)] = a_{ij}^{ab}(x);
  /// row index i*n+alpha, column j*n+beta.
  Eigen::MatrixXd entry_matrix(const Point& x, int region = 0) const;

  /// max_{ijab} |a_{ij}^{ab}(x)| over the given sample points.
  double sup_norm(const std::vector<Point>& samples) const;

  bool all_constant() const;

private:
  int idx(int i, int j, int a, int b) const {
    return ((i * n_ + j) * n_ + a) * n_ + b;
  }
  int n_;
  std::string label_;
  std::vector<SpatialFn> entries_;
};

struct EllipticityReport {
  double c_inv = 0.0;          // best constant c_A^{-1} over the samples
  Point worst_point = Point::Zero();
  Eigen::MatrixXd worst_direction; // symmetric trace-free n x n matrix
  bool elliptic = false;
};

struct ADNSymbol {
  Eigen::MatrixXd matrix; // (n+1) x (n+1) modified real symbol
  Point point;
  Eigen::VectorXd direction;
  double det() const { return matrix.determinant(); }
};

struct ADNReport {
  bool pass = false;
  double min_scaled_det = 0.0; // min |det| / scale over all samples
  Point worst_point = Point::Zero();
  Eigen::VectorXd worst_direction;
};

struct SymmetryCheck {
  bool ok = false;
  double max_violation = 0.0;
};

/// Isotropic tensor a_{ij}^{ab} = lambda d_{ia} d_{jb} + mu (d_{aj} d_{bi} + d_{ab} d_{ij}).
/// mu must be positive at every sample the caller later evaluates; a probe at
/// a few canonical points rejects obviously non-positive mu up front.
CoeffTensor make_isotropic(int n, const SpatialFn& mu, const SpatialFn& lambda);

CoeffTensor make_isotropic(int n, double mu, double lambda);

/// Per-region isotropic tensor (mu, lambda) keyed by region tag.
CoeffTensor make_isotropic_per_region(int n, double mu_inner, double mu_outer,
                                      double lambda_inner, double lambda_outer);

/// Both index-swap identities a_{ij}^{ab} = a_{aj}^{ib} = a_{ib}^{aj} at all
/// samples, absolute tolerance 1e-12.
SymmetryCheck check_symmetry(const CoeffTensor& A,
                             const std::vector<Point>& samples,
                             double tol = 1e-12);

/// Smallest eigenvalue of the quadratic form restricted to symmetric
/// trace-free matrices, minimized over samples. Throws if symmetry fails.
EllipticityReport ellipticity_constant(const CoeffTensor& A,
                                       const std::vector<Point>& samples);

/// a*^{ab}_{ij} = a^{ba}_{ji}.
CoeffTensor adjoint_tensor(const CoeffTensor& A);

bool is_self_adjoint(const CoeffTensor& A, const std::vector<Point>& samples,
                     double tol = 1e-12);

/// Modified ADN principal symbol [ xi_a a_{lj}^{ab} xi_b , -xi_l ; -xi_j , 0 ].
ADNSymbol adn_symbol(const CoeffTensor& A, const Point& x,
                     const Eigen::VectorXd& xi, int region = 0);

/// |det sigma~(x,xi)| > 1e-10 * scale for n_directions random unit xi at each
/// sample point; scale = (1 + sup|A|)^n. Failures recorded, not thrown.
ADNReport adn_ellipticity_check(const CoeffTensor& A,
                                const std::vector<Point>& samples,
                                int n_directions, unsigned seed = 12345);

/// Orthonormal basis of symmetric trace-free n x n matrices in the fixed
/// canonical order: off-diagonal pairs (i<j) scaled 1/sqrt(2), then diagonal
/// trace-free combinations.
std::vector<Eigen::MatrixXd> symmetric_tracefree_basis(int n);

} // namespace astokes

#endif
