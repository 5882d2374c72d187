#include "astokes/nstokes.hpp"

#include <cmath>
#include <random>

namespace astokes {

namespace {

SparseMat restrict_ff_local(const MixedSpace& s, const SparseMat& M) {
  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> t;
  for (int col = 0; col < M.outerSize(); ++col)
    for (SparseMat::InnerIterator it(M, col); it; ++it) {
      const int fi = s.free_index(static_cast<int>(it.row()));
      const int fj = s.free_index(static_cast<int>(it.col()));
      if (fi >= 0 && fj >= 0) t.emplace_back(fi, fj, it.value());
    }
  const int nf = static_cast<int>(s.free_vdofs().size());
  SparseMat R(nf, nf);
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

} // namespace

NSContext::NSContext(const CompositeMesh& mesh, const CoeffTensor& tensor)
    : mesh_(&mesh),
      tensor_(tensor),
      space_(mesh, SpaceOptions{PressureMode::Continuous, ConstraintMode::OuterAll,
                                Gauge::MeanAll, DomainFilter::Composite, false}),
      forms_(assemble(tensor, space_)) {
  op_ = std::make_shared<SaddleOperator>(space_, forms_);
  Xff_ = std::make_shared<Eigen::SimplicialLDLT<SparseMat>>();
  Xff_->compute(restrict_ff_local(space_, forms_.X));
  if (Xff_->info() != Eigen::Success)
    throw Error("NSContext: gradient-seminorm matrix not SPD");
  free_ = space_.free_vdofs();
  const auto samples = space_.quadrature_points(2);
  const auto rep = ellipticity_constant(tensor, samples);
  if (!rep.elliptic) throw Error("NSContext: tensor is not elliptic on samples");
  c_A_ = 1.0 / rep.c_inv;
  sup_norm_ = tensor.sup_norm(samples);
}

double NSContext::dual_norm(const Vec& F) const {
  const int nf = static_cast<int>(free_.size());
  Vec ff(nf);
  for (int k = 0; k < nf; ++k) ff(k) = F(free_[k]);
  const Vec z = Xff_->solve(ff);
  return std::sqrt(std::max(0.0, ff.dot(z)));
}

Vec NSContext::riesz(const Vec& F) const {
  const int nf = static_cast<int>(free_.size());
  Vec ff(nf);
  for (int k = 0; k < nf; ++k) ff(k) = F(free_[k]);
  const Vec z = Xff_->solve(ff);
  Vec out = Vec::Zero(space_.n_vdof());
  for (int k = 0; k < nf; ++k) out(free_[k]) = z(k);
  return out;
}

double l4_norm(const MixedSpace& s, const Field& v) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  const QuadRule rule = simplex_rule(dim, quartic_degree());
  double acc = 0.0;
  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  for (int c : s.active_cells()) {
    const Vec& uu = mesh.cell_region[c] == REGION_INNER ? v.u_in : v.u_out;
    Eigen::MatrixXd J(dim, dim);
    for (int k = 0; k < dim; ++k)
      J.col(k) = (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]])
                     .head(dim);
    const double jac = std::abs(J.determinant());
    const auto& cn = s.cell_nodes(c);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      // quadratic basis values
      const int nv = dim + 1;
      Eigen::VectorXd L(nv);
      L(0) = 1.0;
      for (int k = 0; k < dim; ++k) {
        L(0) -= r(k);
        L(k + 1) = r(k);
      }
      double v2 = 0.0;
      Eigen::Vector3d val = Eigen::Vector3d::Zero();
      // P2 values: vertices then edges in lexicographic order
      std::vector<double> Nv(cn.size());
      for (int i = 0; i < nv; ++i) Nv[i] = L(i) * (2.0 * L(i) - 1.0);
      static const std::array<std::pair<int, int>, 6> e2{
          {{0, 1}, {0, 2}, {1, 2}, {-1, -1}, {-1, -1}, {-1, -1}}};
      static const std::array<std::pair<int, int>, 6> e3{
          {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
      const auto& et = dim == 2 ? e2 : e3;
      const int ne = dim == 2 ? 3 : 6;
      for (int e = 0; e < ne; ++e)
        Nv[nv + e] = 4.0 * L(et[e].first) * L(et[e].second);
      for (size_t m = 0; m < cn.size(); ++m)
        for (int comp = 0; comp < dim; ++comp)
          val(comp) += Nv[m] * uu(cn[m] * dim + comp);
      v2 = val.squaredNorm();
      acc += rule.weights(q) * jac * v2 * v2;
    }
  }
  return std::pow(std::max(0.0, acc), 0.25);
}

EmbeddingReport embedding_constant(const NSContext& ctx, int n_starts, int iters,
                                   unsigned seed) {
  const auto& s = ctx.space();
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  EmbeddingReport rep;
  const int dim = s.dim();
  const QuadRule rule = simplex_rule(dim, quartic_degree());
  for (int start = 0; start < n_starts; ++start) {
    Field v = Field::zero(s);
    for (int d : s.free_vdofs()) v.u_in(d) = gauss(rng);
    v.u_out = v.u_in;
    for (int it = 0; it < iters; ++it) {
      const double gn = h1_seminorm(ctx.forms(), v);
      if (gn <= 0.0) break;
      v.u_in /= gn;
      v.u_out = v.u_in;
      const double ratio = l4_norm(s, v);
      rep.best_ratio = std::max(rep.best_ratio, ratio);
      // fixed-point ascent: w_i = int |v|^2 v . phi_i, v <- X^{-1} w
      Vec w = Vec::Zero(s.n_vdof());
      const auto& mesh = s.mesh();
      Eigen::VectorXd N;
      Eigen::MatrixXd dN;
      for (int c : s.active_cells()) {
        Eigen::MatrixXd J(dim, dim);
        for (int k = 0; k < dim; ++k)
          J.col(k) =
              (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]])
                  .head(dim);
        const double jac = std::abs(J.determinant());
        const auto& cn = s.cell_nodes(c);
        for (int q = 0; q < rule.size(); ++q) {
          Eigen::VectorXd r = rule.points.row(q);
          const int nv = dim + 1;
          Eigen::VectorXd L(nv);
          L(0) = 1.0;
          for (int k = 0; k < dim; ++k) {
            L(0) -= r(k);
            L(k + 1) = r(k);
          }
          std::vector<double> Nv(cn.size());
          for (int i = 0; i < nv; ++i) Nv[i] = L(i) * (2.0 * L(i) - 1.0);
          static const std::array<std::pair<int, int>, 6> e2{
              {{0, 1}, {0, 2}, {1, 2}, {-1, -1}, {-1, -1}, {-1, -1}}};
          static const std::array<std::pair<int, int>, 6> e3{
              {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
          const auto& et = dim == 2 ? e2 : e3;
          const int ne = dim == 2 ? 3 : 6;
          for (int e = 0; e < ne; ++e)
            Nv[nv + e] = 4.0 * L(et[e].first) * L(et[e].second);
          Eigen::Vector3d val = Eigen::Vector3d::Zero();
          for (size_t m = 0; m < cn.size(); ++m)
            for (int comp = 0; comp < dim; ++comp)
              val(comp) += Nv[m] * v.u_in(cn[m] * dim + comp);
          const double wq = rule.weights(q) * jac * val.squaredNorm();
          for (size_t m = 0; m < cn.size(); ++m)
            for (int comp = 0; comp < dim; ++comp)
              w(cn[m] * dim + comp) += wq * Nv[m] * val(comp);
        }
      }
      Vec vn = ctx.riesz(w);
      v.u_in = vn;
      v.u_out = vn;
      rep.iterations++;
    }
  }
  rep.c = rep.best_ratio;
  return rep;
}

Field picard_step(const NSContext& ctx, const Field& w, const Vec& F,
                  double theta, bool skew) {
  const auto& s = ctx.space();
  Vec conv = convection_load(s, w, w);
  if (skew) {
    // skew-symmetrized trilinear form (off-paper robustness option)
    conv = 0.5 * (conv - convection_load_transposed(s, w, w));
  }
  const Vec rhs_f = F - conv;
  const auto r = ctx.op().solve(rhs_f, Vec::Zero(s.n_pdof()));
  Field u = Field::continuous(r.u, r.p);
  if (theta != 1.0) {
    u.u_in = (1.0 - theta) * w.u_in + theta * u.u_in;
    u.u_out = u.u_in;
    u.p = (1.0 - theta) * w.p + theta * u.p;
  }
  return u;
}

PicardState solve_navier_stokes(const NSContext& ctx, const Vec& F,
                                const PicardOptions& opts,
                                const Field* initial_guess, double beta_h) {
  const auto& s = ctx.space();
  const auto& forms = ctx.forms();
  PicardState st;
  st.u = initial_guess ? *initial_guess : Field::zero(s);
  st.c_A = ctx.c_A();
  st.F_dual = ctx.dual_norm(F);
  double theta = opts.theta;
  double last_diff = -1.0;
  for (int k = 0; k < opts.maxit; ++k) {
    Field next = picard_step(ctx, st.u, F, theta, opts.skew_symmetric);
    Field d = Field::zero(s);
    d.u_in = next.u_in - st.u.u_in;
    d.u_out = d.u_in;
    const double diff = h1_seminorm(forms, d);
    st.diff_history.push_back(diff);
    if (last_diff > 0.0) st.ratios.push_back(diff / last_diff);
    if (last_diff > 0.0 && diff > last_diff && theta > 0.26) {
      theta *= 0.5; // damp on residual increase
    }
    st.u = next;
    st.iterations = k + 1;
    if (diff <= opts.tol) {
      st.converged = true;
      break;
    }
    last_diff = diff;
  }
  st.theta_final = theta;

  // estimates and bound checks
  const auto emb = embedding_constant(ctx);
  st.embedding_c = emb.c;
  st.margin = 4.0 * st.c_A * st.c_A * emb.c * emb.c * st.F_dual;
  st.energy_lhs = h1_seminorm(forms, st.u);
  st.energy_rhs = 2.0 * st.c_A * st.F_dual;
  st.energy_ok = st.energy_lhs <= st.energy_rhs + 1e-10;

  // pressure bound with computed constants; C_Omega estimated by 1/beta_h
  if (beta_h <= 0.0) beta_h = infsup_estimate(s, forms);
  const double C_om = 1.0 / beta_h;
  const int n = s.dim();
  const double Cp1 = C_om * (1.0 + 2.0 * st.c_A * std::pow(n, 4) * ctx.tensor_sup_norm());
  const double Cp2 = 4.0 * C_om * emb.c * emb.c * st.c_A * st.c_A;
  Vec pg = st.u.p;
  const Vec& g = s.gauge_vector();
  if (g.sum() > 0.0) pg.array() -= g.dot(pg) / g.sum();
  st.pressure_lhs = l2_norm_pressure(forms, pg);
  st.pressure_rhs = Cp1 * st.F_dual + Cp2 * st.F_dual * st.F_dual;
  st.pressure_ok = st.pressure_lhs <= st.pressure_rhs + 1e-10;

  // energy identity a(u,u) = <F,u> up to the trilinear defect
  const double auu = st.u.u_in.dot(forms.A * st.u.u_in);
  double Fu = 0.0;
  for (int d : s.free_vdofs()) Fu += F(d) * st.u.u_in(d);
  st.energy_identity_gap = std::abs(auu - Fu);
  const Vec conv = convection_load(s, st.u, st.u);
  st.trilinear_self = std::abs(conv.dot(st.u.u_in));
  Vec divu = forms.B * st.u.u_in; // functional q -> -<div u, q>
  // ||div u||_{L2} via mass solve
  Eigen::SimplicialLDLT<SparseMat> mp(forms.Mp);
  st.div_residual = std::sqrt(std::max(0.0, divu.dot(mp.solve(divu))));
  return st;
}

UniquenessMargin uniqueness_margin(const NSContext& ctx, const Vec& F,
                                   double embedding_c) {
  UniquenessMargin m;
  m.c_A = ctx.c_A();
  m.c = embedding_c > 0.0 ? embedding_c : embedding_constant(ctx).c;
  m.F_dual = ctx.dual_norm(F);
  m.margin = 4.0 * m.c_A * m.c_A * m.c * m.c * m.F_dual;
  m.unique = m.margin < 1.0;
  return m;
}

PressureRecovery pressure_recovery_check(const NSContext& ctx, const Field& u,
                                         const Vec& F, int n_probe,
                                         unsigned seed) {
  const auto& s = ctx.space();
  const auto& forms = ctx.forms();
  const Vec conv = convection_load(s, u, u);
  const Vec res = forms.A * u.u_in + conv + forms.B.transpose() * u.p - F;
  PressureRecovery pr;
  double acc = 0.0;
  for (int d : s.free_vdofs()) acc += res(d) * res(d);
  pr.full_residual = std::sqrt(acc);

  // pressure-free residual on discretely divergence-free directions: project
  // random fields onto ker B with the saddle factorization, then test
  const Vec res_nop = forms.A * u.u_in + conv - F;
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < n_probe; ++k) {
    Vec rf = Vec::Zero(s.n_vdof());
    for (int d : s.free_vdofs()) rf(d) = gauss(rng);
    // one Stokes solve projects the load onto a div-free field
    const auto r = ctx.op().solve(rf, Vec::Zero(s.n_pdof()));
    Vec v = r.u;
    const double nx = h1_seminorm(forms, Field::continuous(v, Vec::Zero(s.n_pdof())));
    if (nx <= 0.0) continue;
    v /= nx;
    worst = std::max(worst, std::abs(res_nop.dot(v)));
  }
  pr.divfree_residual = worst;
  return pr;
}

NSTransmissionResult solve_ns_transmission(const NSContext& ctx, const Vec& f_in,
                                           const Vec& f_out,
                                           const TraceDensity& psi,
                                           const PicardOptions& opts) {
  const auto& s = ctx.space();
  const auto& forms = ctx.forms();
  Vec F = Vec::Zero(s.n_vdof());
  if (f_in.size()) F -= f_in;
  if (f_out.size()) F -= f_out;
  if (psi.size()) F += scatter_trace(s, psi);
  NSTransmissionResult out;
  out.state = solve_navier_stokes(ctx, F, opts);
  // nonlinear transmission conditions post hoc
  const Field& u = out.state.u;
  out.trace_jump =
      (trace(s, u, Side::Inner) - trace(s, u, Side::Outer)).norm();
  const Vec conv_in = convection_load(s, u, u, DomainFilter::InnerOnly);
  const Vec conv_out = convection_load(s, u, u, DomainFilter::OuterOnly);
  Vec fi = f_in.size() ? f_in : Vec::Zero(s.n_vdof());
  Vec fo = f_out.size() ? f_out : Vec::Zero(s.n_vdof());
  const TraceDensity jump =
      conormal_jump(s, forms, u, Vec(fi + conv_in), Vec(fo + conv_out));
  out.conormal_jump_residual =
      (jump - (psi.size() ? psi : Vec::Zero(s.n_tdof()))).norm() /
      std::max(1.0, psi.size() ? psi.norm() : 0.0);
  return out;
}

} // namespace astokes
