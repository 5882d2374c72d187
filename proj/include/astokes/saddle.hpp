#ifndef ASTOKES_SADDLE_HPP
#define ASTOKES_SADDLE_HPP

#include <memory>

#include <Eigen/SparseLU>

#include "astokes/fem.hpp"

namespace astokes {

/// Factorized discrete saddle operator
///   [ A_ff  B_f^T  0 ] [u]   [f]
///   [ B_f   0      g ] [p] = [g_rhs]
///   [ 0     g^T    0 ] [l]   [0]
/// on the free velocity dofs, with one scalar multiplier per gauge
/// constraint. Constrained velocity values enter through the right-hand
/// side. The factorization is computed once and reused for every solve.
class SaddleOperator {
public:
  SaddleOperator(const MixedSpace& space, const AssembledForms& forms);

  const MixedSpace& space() const { return *space_; }
  const AssembledForms& forms() const { return *forms_; }
  int n_free() const { return static_cast<int>(space_->free_vdofs().size()); }

  struct Result {
    Vec u;          // full velocity vector (constrained values included)
    Vec p;          // pressure
    double lambda = 0.0; // gauge multiplier (compatibility deficit)
    double res_f = 0.0;  // first-block residual on free dofs
    double res_g = 0.0;  // second-block residual
  };

  /// rhs_f: functional on all velocity dofs; rhs_g: functional on pressures;
  /// constrained_values: imposed velocity values (empty = homogeneous).
  Result solve(const Vec& rhs_f, const Vec& rhs_g,
               const Vec& constrained_values = Vec()) const;

  /// Solve with the transposed matrix (adjoint problems share the factor).
  Result solve_transposed(const Vec& rhs_f, const Vec& rhs_g,
                          const Vec& constrained_values = Vec()) const;

private:
  Result assemble_and_solve(const Vec& rhs_f, const Vec& rhs_g,
                            const Vec& constrained_values, bool transposed) const;
  const MixedSpace* space_;
  const AssembledForms* forms_;
  SparseMat K_;
  std::shared_ptr<Eigen::SparseLU<SparseMat>> lu_;
  std::shared_ptr<Eigen::SparseLU<SparseMat>> lu_t_; // lazy, for transposed solves
  int nf_ = 0, np_ = 0, ng_ = 0;
};

struct SaddleProblem {
  const MixedSpace* space = nullptr;
  const AssembledForms* forms = nullptr;
  Vec rhs_f; // velocity functional (full length)
  Vec rhs_g; // pressure functional
  Vec constrained_values;
};

struct SaddleSolution {
  Field field; // continuous two-sided copy of the solution
  double lambda = 0.0;
  double res_f = 0.0, res_g = 0.0;
  double C_a = 0.0;    // coercivity reciprocal on the divergence-free kernel
  double C_b = 0.0;    // inf-sup reciprocal
  double norm_a = 0.0; // ||a||
};

/// Direct solve; throws if the factorization fails or residuals exceed
/// rtol * data scale.
SaddleSolution solve_saddle(const SaddleProblem& p, double rtol = 1e-8);

/// beta_h = sqrt(lambda_min) of the pressure Schur complement
/// B X^{-1} B^T q = lambda M_p q on the gauge-constrained pressure space.
/// X is the gradient-seminorm matrix on constrained spaces, X + M otherwise.
double infsup_estimate(const MixedSpace& space, const AssembledForms& forms);

/// Same quantity via inverse power iteration on the Schur complement,
/// an independent route used for cross-checks.
double infsup_estimate_power(const MixedSpace& space, const AssembledForms& forms,
                             int maxit = 400, double tol = 1e-12);

/// Smallest Rayleigh quotient of A over the discretely divergence-free
/// subspace, against the gradient-seminorm matrix. Uses inverse iteration
/// with the saddle factorization.
double coercivity_on_kernel(const MixedSpace& space, const AssembledForms& forms,
                            int maxit = 500, double tol = 1e-11);

/// lambda_max of (A_ff, X_ff) by power iteration: the norm of a.
double form_norm(const MixedSpace& space, const AssembledForms& forms,
                 int maxit = 300, double tol = 1e-11);

struct BrezziReport {
  double norm_u = 0.0, norm_p = 0.0;
  double bound_u = 0.0, bound_p = 0.0;
  double norm_f = 0.0, norm_g = 0.0;
  bool u_ok = false, p_ok = false;
};

/// Fill C_a, C_b, ||a|| of a solution by eigensolves on the same matrices.
void estimate_constants(SaddleSolution& sol, const MixedSpace& space,
                        const AssembledForms& forms);

/// Check the a-priori bounds
///   ||u||_X <= C_a ||f|| + C_b (1 + ||a|| C_a) ||g||
///   ||p||_M <= C_b (1 + ||a|| C_a) ||f|| + ||a|| C_b^2 (1 + ||a|| C_a) ||g||
/// with the estimated constants (report only).
BrezziReport brezzi_bound_check(const SaddleSolution& sol, const SaddleProblem& p);

/// Coordinate text dump (row col value per line) for external verification.
void write_coordinate_matrix(const SparseMat& M, std::ostream& os);

} // namespace astokes

#endif
