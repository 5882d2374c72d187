#include "astokes/potentials.hpp"

#include <cmath>
#include <random>

namespace astokes {

namespace {

// conormal derivative with transposed coefficient blocks (adjoint system);
// matches the matrix used by solve_transposed exactly.
TraceDensity conormal_adjoint(const MixedSpace& s, const AssembledForms& f,
                              const Field& u, Side side) {
  Vec r;
  if (side == Side::Inner)
    r = f.A_in.transpose() * u.u_in + f.B_in.transpose() * u.p;
  else
    r = f.A_out.transpose() * u.u_out + f.B_out.transpose() * u.p;
  TraceDensity t = restrict_trace(s, r);
  if (side == Side::Outer) t = -t;
  return t;
}

} // namespace

PotentialContext::PotentialContext(const CompositeMesh& mesh,
                                   const CoeffTensor& tensor,
                                   PressureMode pressure_mode)
    : mesh_(&mesh),
      tensor_(tensor),
      pressure_mode_(pressure_mode),
      space_(mesh, SpaceOptions{pressure_mode, ConstraintMode::OuterAll,
                                Gauge::MeanCollar, DomainFilter::Composite, false}),
      forms_(assemble(tensor, space_)) {
  op_ = std::make_shared<SaddleOperator>(space_, forms_);
  const auto rb = rigid_motion_basis(mesh.dim);
  for (int j = 0; j < rb.size(); ++j) rigid_traces_.push_back(rigid_trace(space_, j));
  // inner-region pressure indicator
  chi_inner_ = Vec::Zero(space_.n_pdof());
  for (int c : space_.active_cells())
    if (mesh.cell_region[c] == REGION_INNER)
      for (int p : space_.cell_pdofs(c)) chi_inner_(p) = 1.0;
}

void PotentialContext::align_gauge(Vec& p) const {
  const Vec& g = space_.gauge_vector();
  const double total = g.sum();
  if (total <= 0.0) return;
  const double mean = g.dot(p) / total;
  p.array() -= mean;
}

const Eigen::MatrixXd& PotentialContext::single_layer_matrix() const {
  if (!V_mat_) {
    const int nt = space_.n_tdof();
    Eigen::MatrixXd V(nt, nt);
    for (int k = 0; k < nt; ++k) {
      TraceDensity e = Vec::Zero(nt);
      e(k) = 1.0;
      const auto pair = single_layer(*this, e);
      V.col(k) = trace(space_, pair.field, Side::Inner);
    }
    V_mat_ = V;
  }
  return *V_mat_;
}

const Eigen::MatrixXd& PotentialContext::hypersingular_matrix() const {
  if (!D_mat_) {
    const int nt = space_.n_tdof();
    Eigen::MatrixXd D(nt, nt);
    for (int k = 0; k < nt; ++k) {
      TraceField e = Vec::Zero(nt);
      e(k) = 1.0;
      const auto pair = double_layer(*this, e);
      D.col(k) = conormal_derivative(space_, forms_, pair.field, Side::Inner);
    }
    D_mat_ = D;
  }
  return *D_mat_;
}

PotentialPair newtonian(const PotentialContext& ctx, const Vec& f_vec) {
  const auto r = ctx.op().solve(-f_vec, Vec::Zero(ctx.space().n_pdof()));
  PotentialPair p{Field::continuous(r.u, r.p), "newtonian"};
  return p;
}

PotentialPair compressibility(const PotentialContext& ctx, const Vec& g_vec) {
  const double total = g_vec.sum();
  if (std::abs(total) > 1e-9 * std::max(1.0, g_vec.norm()))
    throw Error("compressibility: datum has nonzero total mean (" +
                std::to_string(total) +
                "), incompatible with the outer Dirichlet constraint");
  const auto r = ctx.op().solve(Vec::Zero(ctx.space().n_vdof()), -g_vec);
  return PotentialPair{Field::continuous(r.u, r.p), "compressibility"};
}

PotentialPair single_layer(const PotentialContext& ctx, const TraceDensity& psi) {
  const Vec rhs_f = scatter_trace(ctx.space(), psi);
  const auto r = ctx.op().solve(rhs_f, Vec::Zero(ctx.space().n_pdof()));
  return PotentialPair{Field::continuous(r.u, r.p), "single_layer"};
}

PotentialPair adjoint_single_layer(const PotentialContext& ctx,
                                   const TraceDensity& psi_star) {
  const Vec rhs_f = scatter_trace(ctx.space(), psi_star);
  const auto r = ctx.op().solve_transposed(rhs_f, Vec::Zero(ctx.space().n_pdof()));
  return PotentialPair{Field::continuous(r.u, r.p), "adjoint_single_layer"};
}

PotentialPair double_layer(const PotentialContext& ctx, const TraceField& phi) {
  const auto& s = ctx.space();
  const auto& f = ctx.forms();
  const Vec w = -scatter_trace(s, phi); // jump lifting, inner side
  const Vec rhs_f = -(f.A_in * w);
  const Vec rhs_g = -(f.B_in * w);
  const auto r = ctx.op().solve(rhs_f, rhs_g);
  PotentialPair p{Field::continuous(r.u, r.p), "double_layer"};
  p.field.u_in += w;
  return p;
}

TraceField sl_trace(const PotentialContext& ctx, const PotentialPair& V) {
  return trace(ctx.space(), V.field, Side::Inner);
}

TraceDensity sl_traction(const PotentialContext& ctx, const PotentialPair& V,
                         Side side) {
  return conormal_derivative(ctx.space(), ctx.forms(), V.field, side);
}

TraceDensity sl_avg_traction(const PotentialContext& ctx, const PotentialPair& V) {
  return 0.5 * (sl_traction(ctx, V, Side::Inner) + sl_traction(ctx, V, Side::Outer));
}

TraceDensity sl_traction_adjoint(const PotentialContext& ctx,
                                 const PotentialPair& Vs, Side side) {
  return conormal_adjoint(ctx.space(), ctx.forms(), Vs.field, side);
}

TraceDensity sl_avg_traction_adjoint(const PotentialContext& ctx,
                                     const PotentialPair& Vs) {
  return 0.5 * (sl_traction_adjoint(ctx, Vs, Side::Inner) +
                sl_traction_adjoint(ctx, Vs, Side::Outer));
}

TraceField dl_trace(const PotentialContext& ctx, const PotentialPair& W, Side side) {
  return trace(ctx.space(), W.field, side);
}

TraceField dl_avg_trace(const PotentialContext& ctx, const PotentialPair& W) {
  return 0.5 * (dl_trace(ctx, W, Side::Inner) + dl_trace(ctx, W, Side::Outer));
}

TraceDensity dl_traction(const PotentialContext& ctx, const PotentialPair& W,
                         Side side) {
  return conormal_derivative(ctx.space(), ctx.forms(), W.field, side);
}

TraceDensity hypersingular(const PotentialContext& ctx, const PotentialPair& W) {
  return dl_traction(ctx, W, Side::Inner);
}

double normal_component(const PotentialContext& ctx, const TraceField& phi) {
  return ctx.nu_density().dot(phi);
}

Vec rigid_components(const PotentialContext& ctx, const TraceDensity& psi) {
  Vec m(ctx.n_rigid());
  for (int j = 0; j < ctx.n_rigid(); ++j) m(j) = psi.dot(ctx.rigid_trace_field(j));
  return m;
}

InversionResult invert_single_layer(const PotentialContext& ctx,
                                    const TraceField& phi, double reject_tol) {
  const Vec& nu = ctx.nu_density();
  const double nn = nu.norm();
  const double comp = nu.dot(phi) / std::max(nn, 1e-300);
  const double scale = std::max(phi.norm(), 1e-300);
  if (std::abs(comp) > reject_tol * scale)
    throw Error("invert_single_layer: datum has a normal component " +
                std::to_string(comp) +
                "; the single layer trace operator only reaches the "
                "nu-orthogonal subspace");
  TraceField phi0 = phi - (nu.dot(phi) / (nn * nn)) * nu;
  const int nt = ctx.space().n_tdof();
  const Eigen::MatrixXd& V = ctx.single_layer_matrix();
  Eigen::MatrixXd Kb = Eigen::MatrixXd::Zero(nt + 1, nt + 1);
  Kb.topLeftCorner(nt, nt) = V;
  Kb.topRightCorner(nt, 1) = nu / nn;
  Kb.bottomLeftCorner(1, nt) = (nu / nn).transpose();
  Vec rhs = Vec::Zero(nt + 1);
  rhs.head(nt) = phi0;
  Vec x = Kb.partialPivLu().solve(rhs);
  InversionResult res;
  res.solution = x.head(nt);
  // project out the span{nu} component of the solution
  res.solution -= (nu.dot(res.solution) / (nn * nn)) * nu;
  res.residual = (V * res.solution - phi0).norm();
  res.removed_component = std::abs(comp);
  return res;
}

InversionResult invert_hypersingular(const PotentialContext& ctx,
                                     const TraceDensity& psi, double reject_tol) {
  const int nt = ctx.space().n_tdof();
  const int m = ctx.n_rigid();
  const auto& s = ctx.space();
  const auto& f = ctx.forms();
  // Gram data for the rigid trace fields
  Eigen::MatrixXd R(nt, m), MR(nt, m);
  for (int j = 0; j < m; ++j) {
    R.col(j) = ctx.rigid_trace_field(j);
    MR.col(j) = f.M_trace * ctx.rigid_trace_field(j);
  }
  const Vec comps = R.transpose() * psi; // literal pairings <psi, gamma r_j>
  const double scale = std::max(psi.norm(), 1e-300);
  if (comps.norm() > reject_tol * scale * R.norm())
    throw Error("invert_hypersingular: datum is not orthogonal to the rigid "
                "trace fields (components " + std::to_string(comps.norm()) + ")");
  // project the datum onto the literal-pairing orthogonal complement
  Eigen::MatrixXd G = R.transpose() * R;
  TraceDensity psi0 = psi - R * G.ldlt().solve(comps);
  const Eigen::MatrixXd& D = ctx.hypersingular_matrix();
  Eigen::MatrixXd Kb = Eigen::MatrixXd::Zero(nt + m, nt + m);
  Kb.topLeftCorner(nt, nt) = D;
  Kb.topRightCorner(nt, m) = R;           // range compensation
  Kb.bottomLeftCorner(m, nt) = MR.transpose(); // rigid-moment constraints
  Vec rhs = Vec::Zero(nt + m);
  rhs.head(nt) = psi0;
  Vec x = Kb.partialPivLu().solve(rhs);
  InversionResult res;
  res.solution = x.head(nt);
  res.residual = (D * res.solution - psi0).norm();
  res.removed_component = comps.norm();
  return res;
}

DualityReport duality_transpose_checks(const PotentialContext& ctx, int n_samples,
                                       double tol, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int nt = ctx.space().n_tdof();
  DualityReport rep;
  for (int k = 0; k < n_samples; ++k) {
    TraceDensity psi(nt), psis(nt);
    TraceField phi(nt);
    for (int i = 0; i < nt; ++i) {
      psi(i) = gauss(rng);
      psis(i) = gauss(rng);
      phi(i) = gauss(rng);
    }
    const auto Vp = single_layer(ctx, psi);
    const auto Vs = adjoint_single_layer(ctx, psis);
    const double lhs1 = psi.dot(trace(ctx.space(), Vs.field, Side::Inner));
    const double rhs1 = psis.dot(trace(ctx.space(), Vp.field, Side::Inner));
    const double rel1 = std::abs(lhs1 - rhs1) /
                        std::max({std::abs(lhs1), std::abs(rhs1), 1e-300});
    rep.max_rel_sl = std::max(rep.max_rel_sl, rel1);

    const auto Wp = double_layer(ctx, phi);
    const TraceField Kphi = dl_avg_trace(ctx, Wp);
    const TraceDensity Kspsis = sl_avg_traction_adjoint(ctx, Vs);
    const double lhs2 = psis.dot(Kphi);
    const double rhs2 = Kspsis.dot(phi);
    const double rel2 = std::abs(lhs2 - rhs2) /
                        std::max({std::abs(lhs2), std::abs(rhs2), 1e-300});
    rep.max_rel_k = std::max(rep.max_rel_k, rel2);
  }
  rep.pass = rep.max_rel_sl <= tol && rep.max_rel_k <= tol;
  return rep;
}

GreenReport green_representation(const PotentialContext& ctx, const Field& u,
                                 const Vec& f_in, const Vec& f_out,
                                 const Vec& g_vec, double input_check_tol) {
  const auto& s = ctx.space();
  const auto& forms = ctx.forms();
  Vec fi = f_in.size() ? f_in : Vec::Zero(s.n_vdof());
  Vec fo = f_out.size() ? f_out : Vec::Zero(s.n_vdof());
  Vec gv = g_vec.size() ? g_vec : Vec::Zero(s.n_pdof());

  // residual of the Stokes system at interior (non-trace) free dofs
  const Vec r = forms.A_in * u.u_in + forms.A_out * u.u_out +
                forms.B.transpose() * u.p + fi + fo;
  double rint = 0.0, scale = fi.norm() + fo.norm() +
                             forms.A.cwiseAbs().sum() / forms.A.rows() *
                                 (u.u_in.norm() + u.u_out.norm());
  for (int d : s.free_vdofs())
    if (s.trace_index(d / s.dim()) < 0) rint += r(d) * r(d);
  rint = std::sqrt(rint);
  GreenReport rep;
  rep.input_residual = rint / std::max(scale, 1e-300);
  if (rep.input_residual > input_check_tol)
    throw Error("green_representation: input does not satisfy the Stokes "
                "system (relative interior residual " +
                std::to_string(rep.input_residual) + ")");

  const TraceField phi = trace(s, u, Side::Inner) - trace(s, u, Side::Outer);
  const TraceDensity psi = restrict_trace(s, r); // jump of conormal derivatives

  const auto W = double_layer(ctx, phi);
  const auto V = single_layer(ctx, psi);
  const auto N = newtonian(ctx, fi + fo);
  const auto G = compressibility(ctx, gv);

  PotentialPair rec{Field::zero(s), "green_representation"};
  rec.field.u_in = -W.field.u_in + V.field.u_in + N.field.u_in + G.field.u_in;
  rec.field.u_out = -W.field.u_out + V.field.u_out + N.field.u_out + G.field.u_out;
  rec.field.p = -W.field.p + V.field.p + N.field.p + G.field.p;

  Field diff = Field::zero(s);
  diff.u_in = rec.field.u_in - u.u_in;
  diff.u_out = rec.field.u_out - u.u_out;
  Vec p_state = u.p;
  ctx.align_gauge(p_state);
  Vec p_rec = rec.field.p;
  ctx.align_gauge(p_rec);
  diff.p = p_rec - p_state;

  auto h1_region = [&](const Vec& v, const SparseMat& X, const SparseMat& M) {
    return std::sqrt(std::max(0.0, v.dot((X + M) * v)));
  };
  const double nu_in = std::max(h1_region(u.u_in, forms.X_in, forms.Mv_in), 1e-300);
  const double nu_out = std::max(h1_region(u.u_out, forms.X_out, forms.Mv_out), 1e-300);
  rep.rel_err_u_in = h1_region(diff.u_in, forms.X_in, forms.Mv_in) / nu_in;
  rep.rel_err_u_out = h1_region(diff.u_out, forms.X_out, forms.Mv_out) / nu_out;
  auto l2p = [&](const Vec& p, const SparseMat& Mp) {
    return std::sqrt(std::max(0.0, p.dot(Mp * p)));
  };
  rep.rel_err_p_in = l2p(diff.p, forms.Mp_in) / std::max(l2p(p_state, forms.Mp_in), 1e-300);
  rep.rel_err_p_out =
      l2p(diff.p, forms.Mp_out) / std::max(l2p(p_state, forms.Mp_out), 1e-300);
  rep.reconstruction = std::move(rec);
  return rep;
}

} // namespace astokes
