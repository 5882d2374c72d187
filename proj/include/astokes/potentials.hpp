#ifndef ASTOKES_POTENTIALS_HPP
#define ASTOKES_POTENTIALS_HPP

#include <memory>
#include <optional>
#include <string>

#include "astokes/saddle.hpp"

namespace astokes {

/// Velocity-pressure pair produced by a potential operator.
struct PotentialPair {
  Field field;
  std::string kind;
};

/// Holds the mixed space on the truncated composite domain (full outer
/// Dirichlet, collar-mean pressure gauge) and one factorization of the
/// Stokes saddle operator, shared by every potential: all defining
/// transmission problems differ only in their right-hand sides.
class PotentialContext {
public:
  PotentialContext(const CompositeMesh& mesh, const CoeffTensor& tensor,
                   PressureMode pressure_mode = PressureMode::Continuous);

  const MixedSpace& space() const { return space_; }
  const AssembledForms& forms() const { return forms_; }
  const SaddleOperator& op() const { return *op_; }
  const CoeffTensor& tensor() const { return tensor_; }
  const CompositeMesh& mesh() const { return *mesh_; }
  PressureMode pressure_mode() const { return pressure_mode_; }

  const TraceDensity& nu_density() const { return forms_.nu_density; }
  int n_rigid() const { return rigid_traces_.size() ? static_cast<int>(rigid_traces_.size()) : 0; }
  const TraceField& rigid_trace_field(int j) const { return rigid_traces_[j]; }

  /// Pressure coefficients of the indicator of the inner region (exact in
  /// interface-broken mode).
  const Vec& inner_indicator() const { return chi_inner_; }

  /// Subtract the collar mean so the gauge functional vanishes.
  void align_gauge(Vec& p) const;

  /// Dense trace operator V (column k = gamma V e_k); built on first use.
  const Eigen::MatrixXd& single_layer_matrix() const;
  /// Dense hypersingular operator D (column k = t+ of W e_k).
  const Eigen::MatrixXd& hypersingular_matrix() const;

private:
  const CompositeMesh* mesh_;
  CoeffTensor tensor_;
  PressureMode pressure_mode_;
  MixedSpace space_;
  AssembledForms forms_;
  std::shared_ptr<SaddleOperator> op_;
  std::vector<TraceField> rigid_traces_;
  Vec chi_inner_;
  mutable std::optional<Eigen::MatrixXd> V_mat_, D_mat_;
};

// -- potential operators ------------------------------------------------------
/// Newtonian potential: L(u,pi) = f, div u = 0 (truncation surrogate of the
/// whole-space problem). f_vec holds <f, phi_i>.
PotentialPair newtonian(const PotentialContext& ctx, const Vec& f_vec);

/// Compressibility potential: L(u,pi) = 0, div u = g. g_vec holds <g, psi_q>.
/// Rejects g with nonzero total mean (incompatible with full Dirichlet).
PotentialPair compressibility(const PotentialContext& ctx, const Vec& g_vec);

/// Single layer: L(u,pi)=0, div u = 0, [gamma u]=0, [t(u,pi)] = psi.
PotentialPair single_layer(const PotentialContext& ctx, const TraceDensity& psi);

/// Single layer for the adjoint Stokes system (transposed coefficients).
PotentialPair adjoint_single_layer(const PotentialContext& ctx,
                                   const TraceDensity& psi_star);

/// Double layer: L(u,pi)=0, div u = 0, [gamma u] = -phi, [t(u,pi)] = 0.
PotentialPair double_layer(const PotentialContext& ctx, const TraceField& phi);

// -- boundary operators -------------------------------------------------------
TraceField sl_trace(const PotentialContext& ctx, const PotentialPair& V);   // V_op
TraceDensity sl_avg_traction(const PotentialContext& ctx, const PotentialPair& V); // K_op (script K)
TraceDensity sl_avg_traction_adjoint(const PotentialContext& ctx,
                                     const PotentialPair& Vs); // K*_op
TraceField dl_avg_trace(const PotentialContext& ctx, const PotentialPair& W); // K (cap)
TraceDensity hypersingular(const PotentialContext& ctx, const PotentialPair& W); // D

/// Interior/exterior conormal derivatives of a single-layer pair.
TraceDensity sl_traction(const PotentialContext& ctx, const PotentialPair& V,
                         Side side);
TraceDensity sl_traction_adjoint(const PotentialContext& ctx,
                                 const PotentialPair& Vs, Side side);
TraceField dl_trace(const PotentialContext& ctx, const PotentialPair& W, Side side);
TraceDensity dl_traction(const PotentialContext& ctx, const PotentialPair& W,
                         Side side);

// -- inversions ---------------------------------------------------------------
struct InversionResult {
  Vec solution;          // density (V^{-1}) or trace field (D^{-1})
  double residual = 0.0; // operator-equation residual, Euclidean
  double removed_component = 0.0; // magnitude of the projected-out part of the datum
};

/// Solve V psi = phi for phi with <phi, nu> = 0; the span{nu} component of
/// psi is projected out. Data with a small normal component are projected
/// (warning recorded in removed_component); beyond reject_tol * |phi| the
/// call throws.
InversionResult invert_single_layer(const PotentialContext& ctx,
                                    const TraceField& phi,
                                    double reject_tol = 1e-6);

/// Solve D phi = psi for psi orthogonal to the rigid traces; phi is returned
/// with vanishing rigid moments.
InversionResult invert_hypersingular(const PotentialContext& ctx,
                                     const TraceDensity& psi,
                                     double reject_tol = 1e-6);

// -- identity checks ----------------------------------------------------------
struct DualityReport {
  double max_rel_sl = 0.0; // <psi, V* psi*> vs <psi*, V psi>
  double max_rel_k = 0.0;  // <psi*, K phi> vs <K* psi*, phi>
  bool pass = false;
};
DualityReport duality_transpose_checks(const PotentialContext& ctx, int n_samples,
                                       double tol = 1e-9, unsigned seed = 99);

struct GreenReport {
  PotentialPair reconstruction;
  double rel_err_u_in = 0.0, rel_err_u_out = 0.0; // H1 per region
  double rel_err_p_in = 0.0, rel_err_p_out = 0.0; // L2 per region, gauged
  double input_residual = 0.0; // interior-residual consistency of the input
};

/// Third Green identity: reconstruct (u, pi) from its jumps and loads as
/// u = -W[gamma u] + V[t(u,pi;f)] + N f + G g and compare.
GreenReport green_representation(const PotentialContext& ctx, const Field& u,
                                 const Vec& f_in, const Vec& f_out,
                                 const Vec& g_vec, double input_check_tol = 0.5);

/// <phi, nu> pairing used for admissibility checks.
double normal_component(const PotentialContext& ctx, const TraceField& phi);
/// rigid moments <psi, gamma r_j> of a density (literal pairing).
Vec rigid_components(const PotentialContext& ctx, const TraceDensity& psi);

} // namespace astokes

#endif
