#ifndef ASTOKES_FEM_HPP
#define ASTOKES_FEM_HPP

#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "astokes/mesh.hpp"
#include "astokes/quadrature.hpp"
#include "astokes/tensor.hpp"

namespace astokes {

using SparseMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class PressureMode { Continuous, InterfaceBroken };
enum class ConstraintMode { OuterAll, OuterDirichletOnly, None };
enum class Gauge { None, MeanAll, MeanCollar };
enum class DomainFilter { Composite, InnerOnly, OuterOnly };
enum class LiftingVariant { NodalLayer, Harmonic };

struct SpaceOptions {
  PressureMode pressure_mode = PressureMode::Continuous;
  ConstraintMode constraint_mode = ConstraintMode::OuterAll;
  Gauge gauge = Gauge::MeanAll;
  DomainFilter domain = DomainFilter::Composite;
  bool constrain_interface = false; // Dirichlet nodes on dOmega as well
};

/// Taylor-Hood P2/P1 mixed space on (a region filter of) a composite mesh.
/// Scalar velocity nodes are vertices plus edge midpoints; velocity dof
/// layout is node*dim + component. Immutable after construction.
class MixedSpace {
public:
  MixedSpace(const CompositeMesh& mesh, const SpaceOptions& options);

  const CompositeMesh& mesh() const { return *mesh_; }
  const SpaceOptions& options() const { return opts_; }
  int dim() const { return mesh_->dim; }

  // -- velocity nodes ------------------------------------------------------
  int n_nodes() const { return static_cast<int>(node_coord_.size()); }
  int n_vdof() const { return n_nodes() * dim(); }
  const Point& node_coord(int node) const { return node_coord_[node]; }
  bool node_constrained(int node) const { return node_constrained_[node]; }
  bool node_on_interface(int node) const { return node_trace_[node] >= 0; }
  bool node_on_outer(int node) const { return node_on_outer_[node]; }

  // -- pressure dofs -------------------------------------------------------
  int n_pdof() const { return n_pdof_; }
  /// coordinates of a pressure dof (the vertex it sits on)
  const Point& pdof_coord(int p) const { return pdof_coord_[p]; }

  // -- trace space on the interface ---------------------------------------
  int n_tnodes() const { return static_cast<int>(trace_nodes_.size()); }
  int n_tdof() const { return n_tnodes() * dim(); }
  int trace_index(int node) const { return node_trace_[node]; } // -1 if absent
  int trace_node(int t) const { return trace_nodes_[t]; }

  // -- cells ---------------------------------------------------------------
  const std::vector<int>& active_cells() const { return active_cells_; }
  int n_scalar_basis() const { return dim() == 2 ? 6 : 10; }
  /// global scalar node ids of cell c (vertices then edges, local order)
  const std::vector<int>& cell_nodes(int c) const { return cell_nodes_[c]; }
  /// global pressure dof ids of cell c (its dim+1 vertices)
  const std::vector<int>& cell_pdofs(int c) const { return cell_pdofs_[c]; }
  bool cell_active(int c) const { return cell_active_[c]; }

  // -- constrained dof bookkeeping ------------------------------------------
  const std::vector<int>& free_vdofs() const { return free_vdofs_; }
  int free_index(int vdof) const { return vdof_free_index_[vdof]; }

  // -- gauge ----------------------------------------------------------------
  /// integral of each pressure basis function over the gauge region
  const Vec& gauge_vector() const { return gauge_vec_; }
  bool has_gauge() const { return opts_.gauge != Gauge::None; }

  std::vector<Point> quadrature_points(int degree = assembly_degree()) const;

private:
  friend struct SpaceBuilder;
  const CompositeMesh* mesh_;
  SpaceOptions opts_;
  std::vector<Point> node_coord_;
  std::vector<char> node_constrained_;
  std::vector<char> node_on_outer_;
  std::vector<int> node_trace_;
  std::vector<int> trace_nodes_;
  std::vector<int> active_cells_;
  std::vector<char> cell_active_;
  std::vector<std::vector<int>> cell_nodes_;
  std::vector<std::vector<int>> cell_pdofs_;
  std::vector<Point> pdof_coord_;
  int n_pdof_ = 0;
  std::vector<int> free_vdofs_;
  std::vector<int> vdof_free_index_;
  Vec gauge_vec_;
};

MixedSpace build_space(const CompositeMesh& mesh, const SpaceOptions& options);

/// A discrete velocity-pressure state. Velocity coefficients are kept per
/// region so interface jumps are representable; continuous states have
/// u_in == u_out. Pressure is a single vector (the broken dof map already
/// separates regions).
struct Field {
  Vec u_in, u_out, p;
  static Field zero(const MixedSpace& s) {
    Field f;
    f.u_in = Vec::Zero(s.n_vdof());
    f.u_out = Vec::Zero(s.n_vdof());
    f.p = Vec::Zero(s.n_pdof());
    return f;
  }
  static Field continuous(Vec u, Vec p) {
    Field f;
    f.u_in = u;
    f.u_out = std::move(u);
    f.p = std::move(p);
    return f;
  }
};

using TraceField = Vec;   // trace-space coefficients, layout tnode*dim + c
using TraceDensity = Vec; // functional values on trace basis, same layout

struct AssembledForms {
  SparseMat A_in, A_out, A;    // a(u,v) per side and total
  SparseMat B_in, B_out, B;    // b(v,q) = -<div v, q>
  SparseMat Mv, Mp;            // velocity / pressure mass
  SparseMat X_in, X_out, X;    // grad-grad (vector Laplacian)
  SparseMat E_in, E_out, E;    // <E(u), E(v)> per side and total
  SparseMat Mv_in, Mv_out;
  SparseMat Mp_in, Mp_out;
  // trace-space surrogate H^{1/2} inner product S = M_G + K_G and pieces
  SparseMat S_trace, M_trace;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMat>> S_solver;
  // <Phi, nu> boundary density of the interface normal
  TraceDensity nu_density;
};

/// Assemble every bilinear form for the given tensor on the given space.
/// Quadrature degree is fixed (assembly_degree()) so reruns are bit-identical.
/// Throws on degenerate cells, naming the cell.
AssembledForms assemble(const CoeffTensor& A, const MixedSpace& space);

// -- loads -----------------------------------------------------------------
Vec assemble_velocity_load(const MixedSpace& s,
                           const std::function<Eigen::Vector3d(const Point&)>& f,
                           DomainFilter filter = DomainFilter::Composite);
Vec assemble_pressure_load(const MixedSpace& s,
                           const std::function<double(const Point&)>& g,
                           DomainFilter filter = DomainFilter::Composite);
/// Interface functional <psi, gamma v> from an analytic density; also usable
/// as a TraceDensity by restriction.
Vec assemble_interface_load(const MixedSpace& s,
                            const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& psi);
/// Functional supported on tagged outer facets (e.g. Neumann data on N).
Vec assemble_outer_boundary_load(const MixedSpace& s, int facet_tag,
                                 const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& t);

// -- traces and liftings -----------------------------------------------------
enum class Side { Inner, Outer };

TraceField trace(const MixedSpace& s, const Field& u, Side side);
/// Spread trace coefficients into a full velocity vector (zero elsewhere).
Vec scatter_trace(const MixedSpace& s, const TraceField& phi);
TraceField restrict_trace(const MixedSpace& s, const Vec& v);

/// Lifting with side trace phi. NodalLayer: phi on trace dofs, zero
/// elsewhere (support = one cell layer). Harmonic: discrete vector-harmonic
/// extension into the side region, zero on its other boundaries.
Vec lifting(const MixedSpace& s, const AssembledForms& forms,
            const TraceField& phi, Side side,
            LiftingVariant variant = LiftingVariant::NodalLayer);

/// Interpolate analytic fields (nodal for velocity, vertex for pressure).
Field interpolate(const MixedSpace& s,
                  const std::function<Eigen::Vector3d(const Point&)>& u,
                  const std::function<double(const Point&)>& p);

// -- conormal derivatives ----------------------------------------------------
/// Generalized conormal derivative of (u, p; f_side) seen from one side,
/// via the default lifting: t+ = (A_in u + B_in^T p + f_in)|_Gamma and
/// t- = -(A_out u + B_out^T p + f_out)|_Gamma.
TraceDensity conormal_derivative(const MixedSpace& s, const AssembledForms& forms,
                                 const Field& u, Side side,
                                 const Vec& f_side = Vec());
/// Same value computed through harmonic liftings (lifting-invariance checks).
TraceDensity conormal_derivative_harmonic(const MixedSpace& s,
                                          const AssembledForms& forms,
                                          const Field& u, Side side,
                                          const Vec& f_side = Vec());
TraceDensity conormal_jump(const MixedSpace& s, const AssembledForms& forms,
                           const Field& u, const Vec& f_in = Vec(),
                           const Vec& f_out = Vec());

/// v |-> <(w . grad) u, v> by quadrature.
Vec convection_load(const MixedSpace& s, const Field& w, const Field& u,
                    DomainFilter filter = DomainFilter::Composite);
/// v |-> <(w . grad) v, u> (transposed trilinear pairing).
Vec convection_load_transposed(const MixedSpace& s, const Field& w,
                               const Field& u,
                               DomainFilter filter = DomainFilter::Composite);

// -- norms -------------------------------------------------------------------
double h1_seminorm(const AssembledForms& f, const Field& u);
double h1_norm(const AssembledForms& f, const Field& u);
double l2_norm_velocity(const AssembledForms& f, const Field& u);
double l2_norm_pressure(const AssembledForms& f, const Vec& p);
/// sqrt(phi' S phi) with S the trace H^{1/2}-surrogate inner product
double trace_norm(const AssembledForms& f, const TraceField& phi);
/// sqrt(t' S^{-1} t), the discrete dual norm
double trace_dual_norm(const AssembledForms& f, const TraceDensity& t);
/// literal coefficient-functional contraction <t, phi>
double trace_pairing(const TraceDensity& t, const TraceField& phi);

/// (||E(w)||^2_{in} + ||E(w)||^2_{out} + sum_j |int [gamma w] . r_j|^2)^{1/2}
double composite_rigid_norm(const MixedSpace& s, const AssembledForms& f,
                            const Field& w);

/// integral of [gamma w] . gamma r_j over the interface for each rigid field
Vec rigid_jump_moments(const MixedSpace& s, const AssembledForms& f,
                       const Field& w);

/// trace coefficients of rigid field j
TraceField rigid_trace(const MixedSpace& s, int j);

struct KornReport {
  double max_ratio = 0.0;
  int samples = 0;
};
/// max ||grad v||^2 / ||E(v)||^2 over random constrained fields; <= 2.
KornReport korn_check(const MixedSpace& s, const AssembledForms& f,
                      int n_samples = 100, unsigned seed = 7);

/// Serialize a coefficient vector as "index value" rows.
void write_columnar(const Vec& v, std::ostream& os);
Vec read_columnar(std::istream& is);

} // namespace astokes

#endif
