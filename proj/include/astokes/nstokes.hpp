#ifndef ASTOKES_NSTOKES_HPP
#define ASTOKES_NSTOKES_HPP

#include "astokes/saddle.hpp"

namespace astokes {

/// Context for the nonlinear solver on the bounded composite domain: full
/// outer Dirichlet velocity space, global-mean pressure gauge, one cached
/// factorization of the constant Stokes saddle matrix reused by every
/// Picard step.
class NSContext {
public:
  NSContext(const CompositeMesh& mesh, const CoeffTensor& tensor);

  const MixedSpace& space() const { return space_; }
  const AssembledForms& forms() const { return forms_; }
  const SaddleOperator& op() const { return *op_; }
  const CoeffTensor& tensor() const { return tensor_; }

  /// c_A from the sampled ellipticity constant (c_A = 1 / c_inv).
  double c_A() const { return c_A_; }
  double tensor_sup_norm() const { return sup_norm_; }

  /// |||F||| = sqrt(f' X^{-1} f) on the constrained space.
  double dual_norm(const Vec& F) const;

  /// Riesz representative X^{-1} F (free dofs, returned full length).
  Vec riesz(const Vec& F) const;

private:
  const CompositeMesh* mesh_;
  CoeffTensor tensor_;
  MixedSpace space_;
  AssembledForms forms_;
  std::shared_ptr<SaddleOperator> op_;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMat>> Xff_;
  std::vector<int> free_;
  double c_A_ = 0.0;
  double sup_norm_ = 0.0;
};

/// ||v||_{L4} by quadrature (exact for P2 fields).
double l4_norm(const MixedSpace& s, const Field& v);

struct EmbeddingReport {
  double c = 0.0;          // estimated best constant in ||v||_L4 <= c ||grad v||
  double best_ratio = 0.0; // largest sampled ratio (equals c)
  int iterations = 0;
};

/// Lower bound on the L4 embedding constant by random starts plus fixed-point
/// ascent on the Rayleigh-type ratio.
EmbeddingReport embedding_constant(const NSContext& ctx, int n_starts = 3,
                                   int iters = 40, unsigned seed = 21);

struct PicardOptions {
  double tol = 1e-11;   // on ||grad(u_{k+1} - u_k)||
  int maxit = 60;
  double theta = 1.0;   // damping; halved automatically on residual increase
  bool skew_symmetric = false; // off-paper robustness option
};

struct PicardState {
  Field u;
  std::vector<double> diff_history;  // ||grad(u_{k+1} - u_k)||
  std::vector<double> ratios;        // successive contraction ratios
  bool converged = false;
  int iterations = 0;
  double theta_final = 1.0;
  // estimates and bound checks
  double F_dual = 0.0;       // |||F|||
  double c_A = 0.0;
  double embedding_c = 0.0;  // L4 constant (lower bound)
  double margin = 0.0;       // 4 c_A^2 c^2 |||F|||
  double energy_lhs = 0.0;   // ||grad u||
  double energy_rhs = 0.0;   // 2 c_A |||F|||
  bool energy_ok = false;
  double pressure_lhs = 0.0; // ||pi||_{L2/gauge}
  double pressure_rhs = 0.0; // C' |||F||| + C'' |||F|||^2
  bool pressure_ok = false;
  double energy_identity_gap = 0.0; // |a(u,u) - <F,u>|
  double trilinear_self = 0.0;      // |<(u.grad)u, u>|
  double div_residual = 0.0;        // ||div u||_{L2}
};

/// One Picard step: solve the linear saddle problem with the convection of
/// the current iterate frozen, then apply damping.
Field picard_step(const NSContext& ctx, const Field& w, const Vec& F,
                  double theta, bool skew = false);

/// Fixed-point iteration for the steady Navier-Stokes system; beta_h is the
/// inf-sup estimate used for the divergence-inverse constant in the pressure
/// bound (pass <= 0 to estimate it here).
PicardState solve_navier_stokes(const NSContext& ctx, const Vec& F,
                                const PicardOptions& opts = {},
                                const Field* initial_guess = nullptr,
                                double beta_h = -1.0);

struct UniquenessMargin {
  double margin = 0.0;
  bool unique = false;
  double c_A = 0.0, c = 0.0, F_dual = 0.0;
};
UniquenessMargin uniqueness_margin(const NSContext& ctx, const Vec& F,
                                   double embedding_c = -1.0);

/// First-block residual of a computed solution, including the pressure
/// gradient; also reports the pressure-free residual on discretely
/// divergence-free test directions.
struct PressureRecovery {
  double full_residual = 0.0;     // ||A u + conv + B^T p - F|| on free dofs
  double divfree_residual = 0.0;  // same, tested against div-free directions
};
PressureRecovery pressure_recovery_check(const NSContext& ctx, const Field& u,
                                         const Vec& F, int n_probe = 20,
                                         unsigned seed = 5);

struct NSTransmissionResult {
  PicardState state;
  double trace_jump = 0.0;     // velocity jump across the interface
  double conormal_jump_residual = 0.0; // |[t(u,pi;f+conv)] - psi| dual
};

/// Transmission Navier-Stokes: F = -(f_in + f_out) + gamma* psi; after
/// convergence the nonlinear transmission conditions are verified post hoc.
NSTransmissionResult solve_ns_transmission(const NSContext& ctx, const Vec& f_in,
                                           const Vec& f_out,
                                           const TraceDensity& psi,
                                           const PicardOptions& opts = {});

} // namespace astokes

#endif
