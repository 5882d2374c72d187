#include "astokes/bvp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace astokes {

namespace {

Vec or_zero(const Vec& v, int n) { return v.size() ? v : Vec::Zero(n); }

double field_h1(const AssembledForms& f, const Field& u) { return h1_norm(f, u); }

} // namespace

TransmissionSolution solve_transmission(const PotentialContext& ctx,
                                        const TransmissionData& data) {
  const auto& s = ctx.space();
  const auto& f = ctx.forms();
  const int nv = s.n_vdof();
  const int np = s.n_pdof();
  const Vec fi = or_zero(data.f_in, nv), fo = or_zero(data.f_out, nv);
  const Vec gv = or_zero(data.g_vec, np);
  const TraceField phi = data.phi.size() ? data.phi : Vec::Zero(s.n_tdof());
  const TraceDensity psi = data.psi.size() ? data.psi : Vec::Zero(s.n_tdof());

  // direct path: u = u0 + w, w the inner-side jump lifting with gamma+ - gamma- = phi
  const Vec w = scatter_trace(s, phi);
  const Vec rhs_f = -(fi + fo) + scatter_trace(s, psi) - f.A_in * w;
  const Vec rhs_g = -gv - f.B_in * w;
  const auto r = ctx.op().solve(rhs_f, rhs_g);
  TransmissionSolution sol;
  sol.direct = Field::continuous(r.u, r.p);
  sol.direct.u_in += w;
  sol.report.res_f = r.res_f;
  sol.report.res_g = r.res_g;

  // potential path: per-side Newtonian parts, one shared compressibility
  // potential (its trace and traction jumps vanish, so it needs no
  // correction), plus layer corrections for the remaining jumps.
  const auto Nin = newtonian(ctx, fi);
  const auto Nout = newtonian(ctx, fo);
  PotentialPair Gz{Field::zero(s), "compressibility"};
  if (gv.norm() > 0.0) Gz = compressibility(ctx, gv);

  auto tr = [&](const PotentialPair& p) { return trace(s, p.field, Side::Inner); };
  TraceField phi0 = phi;
  phi0 -= tr(Nin) - tr(Nout);
  TraceDensity psi0 = psi;
  psi0 -= restrict_trace(s, Vec(f.A_in * Nin.field.u_in +
                                f.B_in.transpose() * Nin.field.p + fi)) +
          restrict_trace(s, Vec(f.A_out * Nout.field.u_out +
                                f.B_out.transpose() * Nout.field.p + fo));

  const auto Vp = single_layer(ctx, psi0);
  const auto Wp = double_layer(ctx, phi0);
  Field up = Field::zero(s);
  up.u_in = Nin.field.u_in + Gz.field.u_in + Vp.field.u_in - Wp.field.u_in;
  up.u_out = Nout.field.u_out + Gz.field.u_out + Vp.field.u_out - Wp.field.u_out;
  // pressure: per-side combination through the dof regions
  Vec p_pot(np);
  for (int p = 0; p < np; ++p) {
    const bool inner = ctx.inner_indicator()(p) > 0.5;
    const double vol = inner ? Nin.field.p(p) : Nout.field.p(p);
    p_pot(p) = vol + Gz.field.p(p) + Vp.field.p(p) - Wp.field.p(p);
  }
  up.p = p_pot;
  sol.by_potentials = up;

  // cross-method distance (gauge-aligned pressures)
  Field diff = Field::zero(s);
  diff.u_in = sol.direct.u_in - up.u_in;
  diff.u_out = sol.direct.u_out - up.u_out;
  sol.report.cross_method =
      h1_seminorm(f, diff) / std::max(1e-300, h1_seminorm(f, sol.direct) + 1.0e-30);

  // transmission-condition residuals of the direct solution
  const TraceField jump_u =
      trace(s, sol.direct, Side::Inner) - trace(s, sol.direct, Side::Outer);
  const TraceDensity jump_t = conormal_jump(s, f, sol.direct, fi, fo);
  sol.report.bc_residual =
      (jump_u - phi).norm() + (jump_t - psi).norm() / std::max(1.0, psi.norm());

  sol.report.norm_u = field_h1(f, sol.direct);
  sol.report.norm_p = l2_norm_pressure(f, sol.direct.p);
  sol.report.data_norm = fi.norm() + fo.norm() + gv.norm() + phi.norm() + psi.norm();
  sol.report.estimated_constant =
      (sol.report.norm_u + sol.report.norm_p) / std::max(sol.report.data_norm, 1e-300);
  return sol;
}

DirichletSolution solve_dirichlet(const CompositeMesh& mesh,
                                  const CoeffTensor& tensor,
                                  const DirichletData& data) {
  SpaceOptions opts;
  opts.domain = DomainFilter::OuterOnly;
  opts.constraint_mode = ConstraintMode::OuterAll;
  opts.constrain_interface = true;
  opts.gauge = Gauge::MeanAll;
  opts.pressure_mode = PressureMode::Continuous;
  MixedSpace s(mesh, opts);
  AssembledForms f = assemble(tensor, s);

  const Vec fv = data.f ? assemble_velocity_load(s, data.f) : Vec::Zero(s.n_vdof());
  const Vec gv = data.g ? assemble_pressure_load(s, data.g) : Vec::Zero(s.n_pdof());
  const TraceField phi_D = data.phi_D.size() ? data.phi_D : Vec::Zero(s.n_tdof());

  // compatibility: total divergence vs boundary flux of the datum
  const double flux = f.nu_density.dot(phi_D); // outward of the inner region
  const double total_g = gv.sum();
  if (std::abs(total_g + flux) >
      1e-10 * std::max({1.0, gv.norm(), phi_D.norm()}))
    throw Error("solve_dirichlet: divergence datum incompatible with the "
                "boundary flux (sum g = " + std::to_string(total_g) +
                ", interface flux = " + std::to_string(-flux) + ")");

  Vec constrained = scatter_trace(s, phi_D);
  SaddleOperator op(s, f);
  const auto r = op.solve(-fv, -gv, constrained);
  DirichletSolution sol;
  sol.field = Field::continuous(r.u, r.p);
  sol.report.res_f = r.res_f;
  sol.report.res_g = r.res_g;
  const TraceField got = trace(s, sol.field, Side::Outer);
  sol.report.bc_residual = (got - phi_D).norm();
  sol.report.norm_u = field_h1(f, sol.field);
  sol.report.norm_p = l2_norm_pressure(f, sol.field.p);
  sol.report.data_norm = fv.norm() + gv.norm() + phi_D.norm();
  sol.report.estimated_constant =
      (sol.report.norm_u + sol.report.norm_p) / std::max(sol.report.data_norm, 1e-300);
  return sol;
}

PotentialPair solve_dirichlet_by_potentials(const PotentialContext& ctx,
                                            const DirichletData& data,
                                            double* inversion_residual) {
  const auto& s = ctx.space();
  // extension by zero of the outer loads into the composite domain
  const Vec fv = data.f ? assemble_velocity_load(s, data.f, DomainFilter::OuterOnly)
                        : Vec::Zero(s.n_vdof());
  const Vec gv = data.g ? assemble_pressure_load(s, data.g, DomainFilter::OuterOnly)
                        : Vec::Zero(s.n_pdof());
  const auto N = newtonian(ctx, fv);
  const auto G = compressibility(ctx, gv);
  TraceField phi = data.phi_D;
  phi -= trace(s, N.field, Side::Inner);
  phi -= trace(s, G.field, Side::Inner);
  const auto inv = invert_single_layer(ctx, phi);
  if (inversion_residual) *inversion_residual = inv.residual;
  const auto V = single_layer(ctx, inv.solution);
  PotentialPair out{Field::zero(s), "dirichlet_by_potentials"};
  out.field.u_in = N.field.u_in + G.field.u_in + V.field.u_in;
  out.field.u_out = N.field.u_out + G.field.u_out + V.field.u_out;
  out.field.p = N.field.p + G.field.p + V.field.p;
  return out;
}

PotentialPair solve_neumann_by_potentials(const PotentialContext& ctx,
                                          const TraceDensity& psi_N,
                                          SolveReport* report) {
  const auto inv = invert_hypersingular(ctx, psi_N);
  const auto W = double_layer(ctx, inv.solution);
  if (report) {
    const TraceDensity t_out =
        conormal_derivative(ctx.space(), ctx.forms(), W.field, Side::Outer);
    report->bc_residual = trace_dual_norm(ctx.forms(), t_out - psi_N) /
                          std::max(1e-300, trace_dual_norm(ctx.forms(), psi_N));
    report->norm_u = field_h1(ctx.forms(), W.field);
    report->norm_p = l2_norm_pressure(ctx.forms(), W.field.p);
    report->data_norm = psi_N.norm();
  }
  return PotentialPair{W.field, "neumann_by_potentials"};
}

MixedSolution solve_mixed(const CompositeMesh& mesh, const CoeffTensor& tensor,
                          const MixedData& data) {
  bool has_d = false, has_n = false;
  for (const auto& fc : mesh.outer_facets) {
    if (fc.tag == FACET_OUTER_D) has_d = true;
    if (fc.tag == FACET_OUTER_N) has_n = true;
  }
  if (!has_d)
    throw Error("solve_mixed: no Dirichlet facet on the outer boundary "
                "(uniqueness lost)");
  SpaceOptions opts;
  opts.domain = DomainFilter::Composite;
  opts.constraint_mode = ConstraintMode::OuterDirichletOnly;
  opts.gauge = has_n ? Gauge::None : Gauge::MeanAll;
  opts.pressure_mode = PressureMode::Continuous;
  MixedSpace s(mesh, opts);
  AssembledForms f = assemble(tensor, s);

  const Vec fv = data.f ? assemble_velocity_load(s, data.f) : Vec::Zero(s.n_vdof());
  const Vec gv = data.g ? assemble_pressure_load(s, data.g) : Vec::Zero(s.n_pdof());
  const Vec psiN = data.neumann
                       ? assemble_outer_boundary_load(s, FACET_OUTER_N, data.neumann)
                       : Vec::Zero(s.n_vdof());

  Vec constrained = Vec::Zero(s.n_vdof());
  if (data.dirichlet) {
    for (int nd = 0; nd < s.n_nodes(); ++nd)
      if (s.node_constrained(nd)) {
        const Eigen::Vector3d val = data.dirichlet(s.node_coord(nd));
        for (int c = 0; c < s.dim(); ++c) constrained(nd * s.dim() + c) = val(c);
      }
  }

  SaddleOperator op(s, f);
  const auto r = op.solve(-fv + psiN, -gv, constrained);
  MixedSolution sol;
  sol.field = Field::continuous(r.u, r.p);
  sol.report.res_f = r.res_f;
  sol.report.res_g = r.res_g;

  // restricted conormal residual on N: the full residual at free N dofs
  const Vec res = f.A * sol.field.u_in + f.B.transpose() * sol.field.p + fv - psiN;
  double rn = 0.0, rint = 0.0;
  for (int d : s.free_vdofs()) {
    rn += res(d) * res(d);
    if (!s.node_on_outer(d / s.dim())) rint += res(d) * res(d);
  }
  sol.report.bc_residual = std::sqrt(rn) / std::max(1.0, psiN.norm() + fv.norm());
  // lifting invariance of r_N t holds exactly when the interior residual
  // vanishes; report that residual
  sol.conormal_invariance = std::sqrt(rint) / std::max(1.0, psiN.norm() + fv.norm());
  sol.report.norm_u = field_h1(f, sol.field);
  sol.report.norm_p = l2_norm_pressure(f, sol.field.p);
  sol.report.data_norm = fv.norm() + gv.norm() + psiN.norm();
  sol.report.estimated_constant =
      (sol.report.norm_u + sol.report.norm_p) / std::max(sol.report.data_norm, 1e-300);
  return sol;
}

double collar_h1_difference(const MixedSpace& sa, const Field& ua,
                            const MixedSpace& sb, const Field& ub,
                            const std::vector<int>& collar_a,
                            const std::vector<int>& collar_b) {
  // pair cells by centroid
  auto key_of = [](const Point& p) {
    return std::array<long long, 3>{static_cast<long long>(std::llround(p.x() * 1e9)),
                                    static_cast<long long>(std::llround(p.y() * 1e9)),
                                    static_cast<long long>(std::llround(p.z() * 1e9))};
  };
  std::map<std::array<long long, 3>, int> bmap;
  for (int c : collar_b) bmap[key_of(sb.mesh().cell_centroid(c))] = c;

  const int dim = sa.dim();
  const QuadRule rule = simplex_rule(dim, assembly_degree());
  double acc = 0.0;
  for (int ca : collar_a) {
    auto it = bmap.find(key_of(sa.mesh().cell_centroid(ca)));
    if (it == bmap.end())
      throw Error("collar_h1_difference: collar cells do not match across meshes");
    const int cb = it->second;
    // evaluate both fields on the shared geometry
    const auto& mesh = sa.mesh();
    Eigen::MatrixXd J(dim, dim);
    for (int k = 0; k < dim; ++k)
      J.col(k) = (mesh.vertices[mesh.cells[ca][k + 1]] - mesh.vertices[mesh.cells[ca][0]])
                     .head(dim);
    const double jac = std::abs(J.determinant());
    const Eigen::MatrixXd Jinv = J.inverse();
    const bool inner_a = mesh.cell_region[ca] == REGION_INNER;
    const Vec& va = inner_a ? ua.u_in : ua.u_out;
    const Vec& vb = inner_a ? ub.u_in : ub.u_out;
    const auto& cna = sa.cell_nodes(ca);
    const auto& cnb = sb.cell_nodes(cb);

    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd N;
      Eigen::MatrixXd dN;
      // P2 basis on the reference simplex
      {
        Eigen::VectorXd r = rule.points.row(q);
        // reuse fem's basis through a local copy: quadratic simplex basis
        const int nv = dim + 1;
        Eigen::VectorXd L(nv);
        L(0) = 1.0;
        Eigen::MatrixXd dL = Eigen::MatrixXd::Zero(nv, dim);
        for (int k = 0; k < dim; ++k) {
          L(0) -= r(k);
          L(k + 1) = r(k);
          dL(0, k) = -1.0;
          dL(k + 1, k) = 1.0;
        }
        const int ne = dim == 2 ? 3 : 6;
        static const std::array<std::pair<int, int>, 6> e2{
            {{0, 1}, {0, 2}, {1, 2}, {-1, -1}, {-1, -1}, {-1, -1}}};
        static const std::array<std::pair<int, int>, 6> e3{
            {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
        const auto& et = dim == 2 ? e2 : e3;
        N.resize(nv + ne);
        dN.resize(nv + ne, dim);
        for (int i = 0; i < nv; ++i) {
          N(i) = L(i) * (2.0 * L(i) - 1.0);
          dN.row(i) = (4.0 * L(i) - 1.0) * dL.row(i);
        }
        for (int e = 0; e < ne; ++e) {
          N(nv + e) = 4.0 * L(et[e].first) * L(et[e].second);
          dN.row(nv + e) = 4.0 * (L(et[e].first) * dL.row(et[e].second) +
                                  L(et[e].second) * dL.row(et[e].first));
        }
      }
      const Eigen::MatrixXd G = dN * Jinv;
      const double w = rule.weights(q) * jac;
      for (int comp = 0; comp < dim; ++comp) {
        double dv = 0.0;
        Eigen::VectorXd dgrad = Eigen::VectorXd::Zero(dim);
        for (int m = 0; m < static_cast<int>(cna.size()); ++m) {
          const double ca_v = va(cna[m] * dim + comp);
          const double cb_v = vb(cnb[m] * dim + comp);
          dv += N(m) * (ca_v - cb_v);
          dgrad += G.row(m).transpose() * (ca_v - cb_v);
        }
        acc += w * (dv * dv + dgrad.squaredNorm());
      }
    }
  }
  return std::sqrt(acc);
}

TruncationStudy exterior_truncation_study(
    const BuildOptions& base, const CoeffTensor& tensor,
    const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& density,
    const std::vector<double>& radii, double collar_width) {
  TruncationStudy study;
  study.radii = radii;
  struct LevelData {
    std::shared_ptr<CompositeMesh> mesh; // stable address for the context
    std::shared_ptr<PotentialContext> ctx;
    Field u;
  };
  std::vector<LevelData> levels;
  for (double R : radii) {
    BuildOptions opt = base;
    opt.R = R;
    LevelData ld;
    ld.mesh = std::make_shared<CompositeMesh>(build_composite(opt));
    ld.ctx = std::make_shared<PotentialContext>(*ld.mesh, tensor,
                                                PressureMode::Continuous);
    const Vec psi_vec = assemble_interface_load(ld.ctx->space(), density);
    TraceDensity psi = restrict_trace(ld.ctx->space(), psi_vec);
    // remove net force and torque: those single-layer modes do not decay in
    // 2D, so only the rigid-orthogonal part is meaningful on truncations
    const int m = ld.ctx->n_rigid();
    Eigen::MatrixXd Rtr(psi.size(), m);
    for (int j = 0; j < m; ++j) Rtr.col(j) = ld.ctx->rigid_trace_field(j);
    const Eigen::MatrixXd G = Rtr.transpose() * Rtr;
    psi -= Rtr * G.ldlt().solve(Vec(Rtr.transpose() * psi));
    ld.u = single_layer(*ld.ctx, psi).field;
    levels.push_back(std::move(ld));
  }
  for (size_t k = 0; k + 1 < levels.size(); ++k) {
    const auto ca = interface_collar_cells(*levels[k].mesh, collar_width);
    const auto cb = interface_collar_cells(*levels[k + 1].mesh, collar_width);
    study.collar_diffs.push_back(collar_h1_difference(
        levels[k + 1].ctx->space(), levels[k + 1].u, levels[k].ctx->space(),
        levels[k].u, cb, ca));
  }
  study.decreasing = true;
  for (size_t k = 0; k + 1 < study.collar_diffs.size(); ++k)
    if (!(study.collar_diffs[k + 1] < study.collar_diffs[k]))
      study.decreasing = false;
  return study;
}

} // namespace astokes
