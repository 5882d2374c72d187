#include "astokes/saddle.hpp"

#include <cmath>
#include <ostream>

namespace astokes {

namespace {
using Trip = Eigen::Triplet<double>;

// X used as the velocity norm matrix: gradient seminorm on constrained
// spaces, full H1 matrix when no dof is constrained.
SparseMat velocity_norm_matrix(const MixedSpace& s, const AssembledForms& f) {
  const bool unconstrained =
      static_cast<int>(s.free_vdofs().size()) == s.n_vdof();
  return unconstrained ? SparseMat(f.X + f.Mv) : f.X;
}

SparseMat restrict_ff(const MixedSpace& s, const SparseMat& M) {
  const auto& free = s.free_vdofs();
  std::vector<Trip> t;
  for (int col = 0; col < M.outerSize(); ++col)
    for (SparseMat::InnerIterator it(M, col); it; ++it) {
      const int fi = s.free_index(static_cast<int>(it.row()));
      const int fj = s.free_index(static_cast<int>(it.col()));
      if (fi >= 0 && fj >= 0) t.emplace_back(fi, fj, it.value());
    }
  SparseMat R(static_cast<int>(free.size()), static_cast<int>(free.size()));
  R.setFromTriplets(t.begin(), t.end());
  return R;
}

SparseMat restrict_pf(const MixedSpace& s, const SparseMat& B) {
  std::vector<Trip> t;
  for (int col = 0; col < B.outerSize(); ++col)
    for (SparseMat::InnerIterator it(B, col); it; ++it) {
      const int fj = s.free_index(static_cast<int>(it.col()));
      if (fj >= 0) t.emplace_back(static_cast<int>(it.row()), fj, it.value());
    }
  SparseMat R(B.rows(), static_cast<int>(s.free_vdofs().size()));
  R.setFromTriplets(t.begin(), t.end());
  return R;
}
} // namespace

SaddleOperator::SaddleOperator(const MixedSpace& space, const AssembledForms& forms)
    : space_(&space), forms_(&forms) {
  nf_ = static_cast<int>(space.free_vdofs().size());
  np_ = space.n_pdof();
  ng_ = space.has_gauge() ? 1 : 0;
  const int n = nf_ + np_ + ng_;
  std::vector<Trip> t;
  const auto add_block = [&](const SparseMat& M, int r0, int c0, bool vrow, bool vcol) {
    for (int col = 0; col < M.outerSize(); ++col)
      for (SparseMat::InnerIterator it(M, col); it; ++it) {
        int r = static_cast<int>(it.row());
        int c = static_cast<int>(it.col());
        if (vrow) {
          r = space_->free_index(r);
          if (r < 0) continue;
        }
        if (vcol) {
          c = space_->free_index(c);
          if (c < 0) continue;
        }
        t.emplace_back(r0 + r, c0 + c, it.value());
      }
  };
  add_block(forms.A, 0, 0, true, true);
  add_block(forms.B, nf_, 0, false, true);
  SparseMat Bt = forms.B.transpose();
  add_block(Bt, 0, nf_, true, false);
  if (ng_) {
    const Vec& g = space.gauge_vector();
    for (int p = 0; p < np_; ++p)
      if (g(p) != 0.0) {
        t.emplace_back(nf_ + p, nf_ + np_, g(p));
        t.emplace_back(nf_ + np_, nf_ + p, g(p));
      }
  }
  K_.resize(n, n);
  K_.setFromTriplets(t.begin(), t.end());
  K_.makeCompressed();
  lu_ = std::make_shared<Eigen::SparseLU<SparseMat>>();
  lu_->compute(K_);
  if (lu_->info() != Eigen::Success)
    throw Error(
        "SaddleOperator: factorization failed (singular system; check the "
        "inf-sup condition / pressure gauge)");
}

SaddleOperator::Result SaddleOperator::assemble_and_solve(
    const Vec& rhs_f, const Vec& rhs_g, const Vec& constrained_values,
    bool transposed) const {
  const auto& s = *space_;
  const auto& forms = *forms_;
  const int n = nf_ + np_ + ng_;
  Vec rhs = Vec::Zero(n);
  Vec uc = Vec::Zero(s.n_vdof());
  if (constrained_values.size() > 0) uc = constrained_values;
  // zero out free entries of uc so it carries only constrained data
  for (int d : s.free_vdofs()) uc(d) = 0.0;

  Vec lift_f(s.n_vdof());
  if (!transposed)
    lift_f = forms.A * uc;
  else
    lift_f = forms.A.transpose() * uc;
  const Vec lift_g = forms.B * uc;
  for (int k = 0; k < nf_; ++k) {
    const int d = s.free_vdofs()[k];
    rhs(k) = (rhs_f.size() ? rhs_f(d) : 0.0) - lift_f(d);
  }
  for (int p = 0; p < np_; ++p)
    rhs(nf_ + p) = (rhs_g.size() ? rhs_g(p) : 0.0) - lift_g(p);

  Vec x;
  if (!transposed) {
    x = lu_->solve(rhs);
  } else {
    if (!lu_t_) {
      auto self = const_cast<SaddleOperator*>(this);
      self->lu_t_ = std::make_shared<Eigen::SparseLU<SparseMat>>();
      SparseMat Kt = K_.transpose();
      self->lu_t_->compute(Kt);
      if (self->lu_t_->info() != Eigen::Success)
        throw Error("SaddleOperator: transposed factorization failed");
    }
    x = lu_t_->solve(rhs);
  }

  Result r;
  r.u = uc;
  for (int k = 0; k < nf_; ++k) r.u(s.free_vdofs()[k]) = x(k);
  r.p = x.segment(nf_, np_);
  r.lambda = ng_ ? x(nf_ + np_) : 0.0;
  // block residuals
  Vec Ku = (transposed ? Vec(K_.transpose() * x) : Vec(K_ * x)) - rhs;
  r.res_f = Ku.head(nf_).norm();
  r.res_g = Ku.segment(nf_, np_).norm();
  return r;
}

SaddleOperator::Result SaddleOperator::solve(const Vec& rhs_f, const Vec& rhs_g,
                                             const Vec& constrained_values) const {
  return assemble_and_solve(rhs_f, rhs_g, constrained_values, false);
}

SaddleOperator::Result SaddleOperator::solve_transposed(
    const Vec& rhs_f, const Vec& rhs_g, const Vec& constrained_values) const {
  return assemble_and_solve(rhs_f, rhs_g, constrained_values, true);
}

SaddleSolution solve_saddle(const SaddleProblem& p, double rtol) {
  SaddleOperator op(*p.space, *p.forms);
  const auto r = op.solve(p.rhs_f, p.rhs_g, p.constrained_values);
  const double scale = std::max({1e-300, p.rhs_f.size() ? p.rhs_f.norm() : 0.0,
                                 p.rhs_g.size() ? p.rhs_g.norm() : 0.0, 1.0});
  if (r.res_f > rtol * scale || r.res_g > rtol * scale)
    throw Error("solve_saddle: residuals exceed tolerance (res_f=" +
                std::to_string(r.res_f) + ", res_g=" + std::to_string(r.res_g) + ")");
  SaddleSolution sol;
  sol.field = Field::continuous(r.u, r.p);
  sol.lambda = r.lambda;
  sol.res_f = r.res_f;
  sol.res_g = r.res_g;
  return sol;
}

namespace {

// Dense pressure Schur complement S = B_f X_ff^{-1} B_f^T.
Eigen::MatrixXd schur_dense(const MixedSpace& s, const AssembledForms& f) {
  const SparseMat X = restrict_ff(s, velocity_norm_matrix(s, f));
  const SparseMat Bf = restrict_pf(s, f.B);
  Eigen::SimplicialLDLT<SparseMat> chol(X);
  if (chol.info() != Eigen::Success)
    throw Error("infsup_estimate: velocity norm matrix not SPD");
  const int np = s.n_pdof();
  Eigen::MatrixXd S(np, np);
  for (int p = 0; p < np; ++p) {
    Vec bp = Bf.row(p).transpose();
    Vec z = chol.solve(bp);
    S.col(p) = Bf * z;
  }
  return 0.5 * (S + S.transpose());
}

// Basis of the gauge-orthogonal complement (Euclidean) via Householder.
Eigen::MatrixXd gauge_complement(const MixedSpace& s) {
  const int np = s.n_pdof();
  if (!s.has_gauge()) return Eigen::MatrixXd::Identity(np, np);
  Vec g = s.gauge_vector();
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(g)
                          .householderQ();
  return Q.rightCols(np - 1);
}

} // namespace

double infsup_estimate(const MixedSpace& s, const AssembledForms& f) {
  const Eigen::MatrixXd S = schur_dense(s, f);
  Eigen::MatrixXd Mp = Eigen::MatrixXd(f.Mp);
  const Eigen::MatrixXd Z = gauge_complement(s);
  Eigen::MatrixXd Sz = Z.transpose() * S * Z;
  Eigen::MatrixXd Mz = Z.transpose() * Mp * Z;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Sz, Mz);
  const double lmin = es.eigenvalues()(0);
  if (lmin < -1e-10)
    throw Error("infsup_estimate: negative Schur eigenvalue " + std::to_string(lmin));
  return std::sqrt(std::max(0.0, lmin));
}

double infsup_estimate_power(const MixedSpace& s, const AssembledForms& f,
                             int maxit, double tol) {
  const SparseMat X = restrict_ff(s, velocity_norm_matrix(s, f));
  const SparseMat Bf = restrict_pf(s, f.B);
  Eigen::SimplicialLDLT<SparseMat> cholX(X);
  Eigen::SimplicialLDLT<SparseMat> cholM(f.Mp);
  const int np = s.n_pdof();
  Vec g = s.has_gauge() ? s.gauge_vector() : Vec::Zero(np);
  const double gn2 = g.squaredNorm();
  auto project = [&](Vec& q) {
    if (gn2 > 0.0) q -= (g.dot(q) / gn2) * g;
  };
  // Inverse power iteration on M_p^{-1} S with deflation of the gauge
  // direction. S q = B X^{-1} B^T q.
  auto apply_S = [&](const Vec& q) { return Vec(Bf * cholX.solve(Vec(Bf.transpose() * q))); };
  // smallest eigenvalue via inverse iteration: solve S z = M q each step
  // using CG on the (projected) Schur complement.
  Vec q = Vec::Ones(np);
  for (int i = 0; i < np; ++i) q(i) += 0.01 * std::sin(1.0 + i);
  project(q);
  q /= std::sqrt(q.dot(f.Mp * q));
  double lambda = 0.0, lambda_old = -1.0;
  for (int it = 0; it < maxit; ++it) {
    // CG solve S z = M q (S SPD on the projected space)
    Vec b = f.Mp * q;
    project(b);
    Vec z = Vec::Zero(np), r = b, pdir = r;
    double rs = r.squaredNorm();
    for (int k = 0; k < 4 * np; ++k) {
      if (std::sqrt(rs) < 1e-13 * b.norm()) break;
      Vec Sp = apply_S(pdir);
      project(Sp);
      const double alpha = rs / pdir.dot(Sp);
      z += alpha * pdir;
      r -= alpha * Sp;
      const double rs2 = r.squaredNorm();
      pdir = r + (rs2 / rs) * pdir;
      rs = rs2;
    }
    project(z);
    const double nz = std::sqrt(z.dot(f.Mp * z));
    q = z / nz;
    lambda = q.dot(apply_S(q)) / q.dot(f.Mp * q);
    if (std::abs(lambda - lambda_old) < tol * std::max(1.0, lambda)) break;
    lambda_old = lambda;
  }
  return std::sqrt(std::max(0.0, lambda));
}

double coercivity_on_kernel(const MixedSpace& s, const AssembledForms& f,
                            int maxit, double tol) {
  SaddleOperator op(s, f);
  const SparseMat Xff = restrict_ff(s, velocity_norm_matrix(s, f));
  const SparseMat Aff = restrict_ff(s, f.A);
  const int nf = static_cast<int>(s.free_vdofs().size());
  // start vector: project an arbitrary field onto the kernel by one solve
  Vec v = Vec::Zero(s.n_vdof());
  for (int k = 0; k < nf; ++k) v(s.free_vdofs()[k]) = std::sin(0.3 + 0.7 * k);
  double lambda = 0.0, lambda_old = -1.0;
  Vec vf(nf);
  for (int it = 0; it < maxit; ++it) {
    // one inverse-iteration step: solve A u + B^T q = X v, B u = 0
    Vec rhs_f = Vec::Zero(s.n_vdof());
    for (int k = 0; k < nf; ++k) vf(k) = v(s.free_vdofs()[k]);
    Vec Xv = Xff * vf;
    for (int k = 0; k < nf; ++k) rhs_f(s.free_vdofs()[k]) = Xv(k);
    auto r = op.solve(rhs_f, Vec::Zero(s.n_pdof()));
    Vec uf(nf);
    for (int k = 0; k < nf; ++k) uf(k) = r.u(s.free_vdofs()[k]);
    const double nx = std::sqrt(uf.dot(Xff * uf));
    if (nx <= 0.0) break;
    uf /= nx;
    lambda = uf.dot(Aff * uf) / uf.dot(Xff * uf);
    for (int k = 0; k < nf; ++k) v(s.free_vdofs()[k]) = uf(k);
    if (std::abs(lambda - lambda_old) < tol * std::max(1.0, std::abs(lambda))) break;
    lambda_old = lambda;
  }
  return lambda;
}

double form_norm(const MixedSpace& s, const AssembledForms& f, int maxit,
                 double tol) {
  const SparseMat Xff = restrict_ff(s, velocity_norm_matrix(s, f));
  const SparseMat Aff = restrict_ff(s, f.A);
  Eigen::SimplicialLDLT<SparseMat> chol(Xff);
  const int nf = Aff.rows();
  Vec v = Vec::Ones(nf);
  for (int i = 0; i < nf; ++i) v(i) += 0.01 * std::cos(0.5 * i);
  double lambda = 0.0, lambda_old = -1.0;
  for (int it = 0; it < maxit; ++it) {
    // power iteration on X^{-1} A_sym with A_sym = (A + A^T)/2
    Vec w = 0.5 * (Aff * v + Aff.transpose() * v);
    Vec z = chol.solve(w);
    const double nx = std::sqrt(z.dot(Xff * z));
    if (nx <= 0.0) break;
    z /= nx;
    lambda = 0.5 * (z.dot(Aff * z) + z.dot(Aff.transpose() * z)) / z.dot(Xff * z);
    v = z;
    if (std::abs(lambda - lambda_old) < tol * std::max(1.0, std::abs(lambda))) break;
    lambda_old = lambda;
  }
  return std::abs(lambda);
}

void estimate_constants(SaddleSolution& sol, const MixedSpace& space,
                        const AssembledForms& forms) {
  sol.C_a = 1.0 / coercivity_on_kernel(space, forms);
  sol.C_b = 1.0 / infsup_estimate(space, forms);
  sol.norm_a = form_norm(space, forms);
}

BrezziReport brezzi_bound_check(const SaddleSolution& sol, const SaddleProblem& p) {
  const auto& s = *p.space;
  const auto& f = *p.forms;
  const SparseMat Xff = restrict_ff(s, velocity_norm_matrix(s, f));
  Eigen::SimplicialLDLT<SparseMat> cholX(Xff);
  Eigen::SimplicialLDLT<SparseMat> cholM(f.Mp);
  const int nf = Xff.rows();
  Vec ff(nf), uf(nf);
  for (int k = 0; k < nf; ++k) {
    ff(k) = p.rhs_f.size() ? p.rhs_f(s.free_vdofs()[k]) : 0.0;
    uf(k) = sol.field.u_in(s.free_vdofs()[k]);
  }
  BrezziReport rep;
  rep.norm_f = std::sqrt(std::max(0.0, ff.dot(cholX.solve(ff))));
  Vec g = p.rhs_g.size() ? p.rhs_g : Vec::Zero(s.n_pdof());
  rep.norm_g = std::sqrt(std::max(0.0, g.dot(cholM.solve(g))));
  rep.norm_u = std::sqrt(std::max(0.0, uf.dot(Xff * uf)));
  rep.norm_p = std::sqrt(std::max(0.0, sol.field.p.dot(f.Mp * sol.field.p)));
  const double Ca = sol.C_a, Cb = sol.C_b, na = sol.norm_a;
  rep.bound_u = Ca * rep.norm_f + Cb * (1.0 + na * Ca) * rep.norm_g;
  rep.bound_p = Cb * (1.0 + na * Ca) * rep.norm_f +
                na * Cb * Cb * (1.0 + na * Ca) * rep.norm_g;
  const double slack = 1e-9 * (rep.norm_f + rep.norm_g + 1e-300);
  rep.u_ok = rep.norm_u <= rep.bound_u + slack;
  rep.p_ok = rep.norm_p <= rep.bound_p + slack;
  return rep;
}

void write_coordinate_matrix(const SparseMat& M, std::ostream& os) {
  os.precision(17);
  for (int col = 0; col < M.outerSize(); ++col)
    for (SparseMat::InnerIterator it(M, col); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

} // namespace astokes
