#ifndef ASTOKES_BVP_HPP
#define ASTOKES_BVP_HPP

#include "astokes/potentials.hpp"

namespace astokes {

struct SolveReport {
  double res_f = 0.0, res_g = 0.0;  // solver block residuals
  double bc_residual = 0.0;         // boundary/transmission-condition residual
  double cross_method = -1.0;       // direct vs potential-path H1 difference
  double norm_u = 0.0, norm_p = 0.0;
  double data_norm = 0.0;
  double estimated_constant = 0.0;  // ||(u,p)|| / ||data||
};

struct TransmissionData {
  Vec f_in, f_out;  // velocity functionals per side (full length, may be empty)
  Vec g_vec;        // pressure functional (may be empty)
  TraceField phi;   // trace jump gamma+ u - gamma- u
  TraceDensity psi; // conormal jump
};

struct TransmissionSolution {
  Field direct;
  Field by_potentials;
  SolveReport report;
};

/// Poisson transmission problem on the truncated composite domain; solves
/// both by the direct saddle formulation and by the potential sum and
/// reports their H1 distance.
TransmissionSolution solve_transmission(const PotentialContext& ctx,
                                        const TransmissionData& data);

struct DirichletData {
  // analytic loads, assembled against each path's own space
  std::function<Eigen::Vector3d(const Point&)> f;
  std::function<double(const Point&)> g;
  TraceField phi_D; // Dirichlet datum on the interface (canonical trace order)
};

struct DirichletSolution {
  Field field;     // on the outer-region space
  SolveReport report;
};

/// Exterior (truncated) Dirichlet problem: outer region, gamma u = phi_D on
/// the interface, zero on the truncation boundary. Checks the divergence
/// compatibility of (g, phi_D) to 1e-10.
DirichletSolution solve_dirichlet(const CompositeMesh& mesh,
                                  const CoeffTensor& tensor,
                                  const DirichletData& data);

/// Potential representation u = N f~ + G E g + V V_op^{-1}(phi_D - traces);
/// requires <phi_D, nu> = 0 (within the projection tolerance). Returns the
/// composite-domain field; compare on the outer region.
PotentialPair solve_dirichlet_by_potentials(const PotentialContext& ctx,
                                            const DirichletData& data,
                                            double* inversion_residual = nullptr);

/// Exterior Neumann problem via the hypersingular inverse:
/// u = W(D^{-1} psi_N), pi = Q^d(D^{-1} psi_N); psi_N must be orthogonal to
/// the rigid traces. bc_residual reports |t^-(u,pi) - psi_N| in the dual norm.
PotentialPair solve_neumann_by_potentials(const PotentialContext& ctx,
                                          const TraceDensity& psi_N,
                                          SolveReport* report = nullptr);

struct MixedData {
  std::function<Eigen::Vector3d(const Point&)> f;
  std::function<double(const Point&)> g;
  std::function<Eigen::Vector3d(const Point&)> dirichlet; // datum on D
  // Neumann traction on N (position, outward normal)
  std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)> neumann;
};

struct MixedSolution {
  Field field;
  SolveReport report;
  double conormal_invariance = 0.0; // nodal vs harmonic lifting agreement
};

/// Mixed Dirichlet-Neumann problem on the composite domain with the outer
/// boundary split into D and N facets. Throws if no facet is tagged D.
MixedSolution solve_mixed(const CompositeMesh& mesh, const CoeffTensor& tensor,
                          const MixedData& data);

struct TruncationStudy {
  std::vector<double> radii;
  std::vector<double> collar_diffs; // ||u_{R_{k+1}} - u_{R_k}||_{H1(collar)}
  bool decreasing = false;
};

/// Solve the single-layer problem with an analytic density on a family of
/// truncation radii with fixed interface resolution and compare successive
/// solutions on the interface collar.
TruncationStudy exterior_truncation_study(
    const BuildOptions& base, const CoeffTensor& tensor,
    const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& density,
    const std::vector<double>& radii, double collar_width = 0.5);

/// H1 norm of the difference of two fields over matching collar cells of two
/// meshes (cells paired by centroid).
double collar_h1_difference(const MixedSpace& sa, const Field& ua,
                            const MixedSpace& sb, const Field& ub,
                            const std::vector<int>& collar_a,
                            const std::vector<int>& collar_b);

} // namespace astokes

#endif
