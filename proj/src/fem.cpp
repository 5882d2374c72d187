#include "astokes/fem.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>

namespace astokes {

namespace {

int n_edges(int dim) { return dim == 1 ? 1 : (dim == 2 ? 3 : 6); }

const std::array<std::pair<int, int>, 6>& edge_table(int dim) {
  static const std::array<std::pair<int, int>, 6> e1{
      {{0, 1}, {-1, -1}, {-1, -1}, {-1, -1}, {-1, -1}, {-1, -1}}};
  static const std::array<std::pair<int, int>, 6> e2{
      {{0, 1}, {0, 2}, {1, 2}, {-1, -1}, {-1, -1}, {-1, -1}}};
  static const std::array<std::pair<int, int>, 6> e3{
      {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  return dim == 1 ? e1 : (dim == 2 ? e2 : e3);
}

// P2 scalar basis on the reference simplex; x has `dim` entries.
void p2_basis(int dim, const Eigen::VectorXd& x, Eigen::VectorXd& N,
              Eigen::MatrixXd& dN) {
  const int nv = dim + 1;
  const int nn = nv + n_edges(dim);
  N.resize(nn);
  dN.resize(nn, dim);
  Eigen::VectorXd L(nv);
  Eigen::MatrixXd dL = Eigen::MatrixXd::Zero(nv, dim);
  L(0) = 1.0;
  for (int k = 0; k < dim; ++k) {
    L(0) -= x(k);
    L(k + 1) = x(k);
    dL(0, k) = -1.0;
    dL(k + 1, k) = 1.0;
  }
  for (int i = 0; i < nv; ++i) {
    N(i) = L(i) * (2.0 * L(i) - 1.0);
    dN.row(i) = (4.0 * L(i) - 1.0) * dL.row(i);
  }
  const auto& et = edge_table(dim);
  for (int e = 0; e < n_edges(dim); ++e) {
    const int a = et[e].first, b = et[e].second;
    N(nv + e) = 4.0 * L(a) * L(b);
    dN.row(nv + e) = 4.0 * (L(a) * dL.row(b) + L(b) * dL.row(a));
  }
}

void p1_basis(int dim, const Eigen::VectorXd& x, Eigen::VectorXd& N,
              Eigen::MatrixXd& dN) {
  const int nv = dim + 1;
  N.resize(nv);
  dN = Eigen::MatrixXd::Zero(nv, dim);
  N(0) = 1.0;
  for (int k = 0; k < dim; ++k) {
    N(0) -= x(k);
    N(k + 1) = x(k);
    dN(0, k) = -1.0;
    dN(k + 1, k) = 1.0;
  }
}

struct CellGeometry {
  Eigen::MatrixXd Jinv_t; // dim x dim
  double detJ = 0.0;
};

CellGeometry cell_geometry(const CompositeMesh& mesh, int c) {
  const int dim = mesh.dim;
  Eigen::MatrixXd J(dim, dim);
  for (int k = 0; k < dim; ++k)
    J.col(k) = (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]])
                   .head(dim);
  CellGeometry g;
  g.detJ = J.determinant();
  if (std::abs(g.detJ) < 1e-14)
    throw Error("assemble: degenerate cell " + std::to_string(c));
  g.Jinv_t = J.inverse().transpose();
  return g;
}

} // namespace

// ---------------------------------------------------------------------------
// MixedSpace construction
// ---------------------------------------------------------------------------

namespace {
struct NodeMaps {
  std::map<int, int> vnode;
  std::map<std::pair<int, int>, int> enode;
};
} // namespace

struct SpaceBuilder {
  static void build(MixedSpace& s, const CompositeMesh& mesh,
                    const SpaceOptions& opts, NodeMaps& maps);
};

void SpaceBuilder::build(MixedSpace& s, const CompositeMesh& mesh,
                         const SpaceOptions& opts, NodeMaps& maps) {
  const int dim = mesh.dim;
  s.cell_active_.assign(mesh.n_cells(), 0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const bool in = mesh.cell_region[c] == REGION_INNER;
    const bool keep = opts.domain == DomainFilter::Composite ||
                      (opts.domain == DomainFilter::InnerOnly && in) ||
                      (opts.domain == DomainFilter::OuterOnly && !in);
    if (keep) {
      s.active_cells_.push_back(c);
      s.cell_active_[c] = 1;
    }
  }
  if (s.active_cells_.empty()) throw Error("build_space: no active cells");

  auto vnode_id = [&](int v) {
    auto it = maps.vnode.find(v);
    if (it != maps.vnode.end()) return it->second;
    const int id = static_cast<int>(s.node_coord_.size());
    maps.vnode[v] = id;
    s.node_coord_.push_back(mesh.vertices[v]);
    return id;
  };
  auto enode_id = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = maps.enode.find(key);
    if (it != maps.enode.end()) return it->second;
    const int id = static_cast<int>(s.node_coord_.size());
    maps.enode[key] = id;
    s.node_coord_.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    return id;
  };

  s.cell_nodes_.resize(mesh.n_cells());
  s.cell_pdofs_.resize(mesh.n_cells());
  const auto& et = edge_table(dim);
  for (int c : s.active_cells_) {
    auto& cn = s.cell_nodes_[c];
    for (int k = 0; k <= dim; ++k) cn.push_back(vnode_id(mesh.cells[c][k]));
    for (int e = 0; e < n_edges(dim); ++e)
      cn.push_back(enode_id(mesh.cells[c][et[e].first], mesh.cells[c][et[e].second]));
  }

  // node flags from facets
  const int nn = static_cast<int>(s.node_coord_.size());
  s.node_trace_.assign(nn, -1);
  std::vector<char> on_outer(nn, 0), on_outer_d(nn, 0);
  auto facet_nodes = [&](const Facet& f, std::vector<int>& out) {
    out.clear();
    for (int k = 0; k < dim; ++k) {
      auto it = maps.vnode.find(f.v[k]);
      if (it != maps.vnode.end()) out.push_back(it->second);
    }
    for (int a = 0; a < dim; ++a)
      for (int b = a + 1; b < dim; ++b) {
        auto it = maps.enode.find(std::minmax(f.v[a], f.v[b]));
        if (it != maps.enode.end()) out.push_back(it->second);
      }
  };
  std::vector<int> fn;
  for (const auto& f : mesh.interface_facets) {
    facet_nodes(f, fn);
    for (int nd : fn)
      if (s.node_trace_[nd] < 0) s.node_trace_[nd] = 0; // mark, index later
  }
  // canonical trace enumeration (coordinate-lexicographic) so trace vectors
  // are portable between spaces built on the same mesh
  for (int nd = 0; nd < nn; ++nd)
    if (s.node_trace_[nd] == 0) s.trace_nodes_.push_back(nd);
  std::sort(s.trace_nodes_.begin(), s.trace_nodes_.end(), [&](int a, int b) {
    const Point& pa = s.node_coord_[a];
    const Point& pb = s.node_coord_[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    return pa.z() < pb.z();
  });
  for (size_t t = 0; t < s.trace_nodes_.size(); ++t)
    s.node_trace_[s.trace_nodes_[t]] = static_cast<int>(t);
  for (const auto& f : mesh.outer_facets) {
    facet_nodes(f, fn);
    for (int nd : fn) {
      on_outer[nd] = 1;
      if (f.tag == FACET_OUTER_D) on_outer_d[nd] = 1;
    }
  }

  s.node_constrained_.assign(nn, 0);
  s.node_on_outer_.assign(nn, 0);
  for (int nd = 0; nd < nn; ++nd) s.node_on_outer_[nd] = on_outer[nd];
  for (int nd = 0; nd < nn; ++nd) {
    bool c = false;
    if (opts.constraint_mode == ConstraintMode::OuterAll && on_outer[nd]) c = true;
    if (opts.constraint_mode == ConstraintMode::OuterDirichletOnly && on_outer_d[nd])
      c = true;
    if (opts.constrain_interface && s.node_trace_[nd] >= 0) c = true;
    s.node_constrained_[nd] = c;
  }

  // pressure dofs (P1); broken mode duplicates interface vertices per region
  std::vector<char> vertex_on_interface(mesh.n_vertices(), 0);
  for (const auto& f : mesh.interface_facets)
    for (int k = 0; k < dim; ++k) vertex_on_interface[f.v[k]] = 1;
  std::map<std::pair<int, int>, int> pmap; // (vertex, copy) -> pdof
  auto pdof_id = [&](int v, int region) {
    const bool dup = opts.pressure_mode == PressureMode::InterfaceBroken &&
                     vertex_on_interface[v];
    const auto key = std::make_pair(v, dup ? region : 0);
    auto it = pmap.find(key);
    if (it != pmap.end()) return it->second;
    const int id = s.n_pdof_++;
    pmap[key] = id;
    s.pdof_coord_.push_back(mesh.vertices[v]);
    return id;
  };
  for (int c : s.active_cells_) {
    auto& cp = s.cell_pdofs_[c];
    for (int k = 0; k <= dim; ++k)
      cp.push_back(pdof_id(mesh.cells[c][k], mesh.cell_region[c]));
  }

  // free velocity dofs
  s.vdof_free_index_.assign(nn * dim, -1);
  for (int nd = 0; nd < nn; ++nd)
    if (!s.node_constrained_[nd])
      for (int c = 0; c < dim; ++c) {
        s.vdof_free_index_[nd * dim + c] = static_cast<int>(s.free_vdofs_.size());
        s.free_vdofs_.push_back(nd * dim + c);
      }

  // gauge vector: integral of each pressure basis over the gauge region
  s.gauge_vec_ = Vec::Zero(s.n_pdof_);
  if (opts.gauge != Gauge::None) {
    std::vector<char> in_gauge(mesh.n_cells(), 0);
    if (opts.gauge == Gauge::MeanAll) {
      for (int c : s.active_cells_) in_gauge[c] = 1;
    } else {
      for (int c : collar_cells(mesh))
        if (s.cell_active_[c]) in_gauge[c] = 1;
    }
    bool any = false;
    for (int c : s.active_cells_)
      if (in_gauge[c]) {
        any = true;
        const double w = std::abs(mesh.cell_volume(c)) / (dim + 1);
        for (int k = 0; k <= dim; ++k) s.gauge_vec_[s.cell_pdofs_[c][k]] += w;
      }
    if (!any) throw Error("build_space: gauge region is empty for this domain filter");
  }
}

MixedSpace::MixedSpace(const CompositeMesh& mesh, const SpaceOptions& options)
    : mesh_(&mesh), opts_(options) {
  NodeMaps maps;
  SpaceBuilder::build(*this, mesh, options, maps);
}

MixedSpace build_space(const CompositeMesh& mesh, const SpaceOptions& options) {
  return MixedSpace(mesh, options);
}

std::vector<Point> MixedSpace::quadrature_points(int degree) const {
  const auto rule = simplex_rule(dim(), degree);
  std::vector<Point> pts;
  for (int c : active_cells_) {
    const auto& cell = mesh_->cells[c];
    for (int q = 0; q < rule.size(); ++q) {
      Point x = mesh_->vertices[cell[0]];
      Eigen::VectorXd r = rule.points.row(q);
      for (int k = 0; k < dim(); ++k)
        x += r(k) * (mesh_->vertices[cell[k + 1]] - mesh_->vertices[cell[0]]);
      pts.push_back(x);
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

namespace {

using Trip = Eigen::Triplet<double>;

void finalize(SparseMat& M, int rows, int cols, const std::vector<Trip>& t) {
  M.resize(rows, cols);
  M.setFromTriplets(t.begin(), t.end());
}

// trace-facet helper: nodes and P2 basis on an interface facet
struct FacetBasis {
  std::vector<int> nodes;   // global scalar node ids (vertices then edges)
  Eigen::MatrixXd qp;       // nq x 3 physical points
  Eigen::MatrixXd N;        // nq x n_loc values
  std::vector<Eigen::MatrixXd> dS; // per qp: n_loc x 3 surface gradients
  Eigen::VectorXd w;        // physical weights
};

FacetBasis facet_basis(const MixedSpace& s, const Facet& f, int degree) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  FacetBasis fb;
  // collect nodes: dim vertices + C(dim,2) edge midpoints
  // (uses the node coordinates to find edge nodes through the cells)
  // vertices
  {
    // find global node ids through an active adjacent cell
    int c = f.cell_in;
    if (!s.cell_active(c) && f.cell_out >= 0) c = f.cell_out;
    if (!s.cell_active(c)) throw Error("facet_basis: facet has no active cell");
    const auto& cn = s.cell_nodes(c);
    const auto& cv = mesh.cells[c];
    auto local_of_vertex = [&](int v) {
      for (int k = 0; k <= dim; ++k)
        if (cv[k] == v) return k;
      return -1;
    };
    for (int k = 0; k < dim; ++k) fb.nodes.push_back(cn[local_of_vertex(f.v[k])]);
    const auto& et = edge_table(dim);
    for (int a = 0; a < dim; ++a)
      for (int b = a + 1; b < dim; ++b) {
        const int la = local_of_vertex(f.v[a]);
        const int lb = local_of_vertex(f.v[b]);
        for (int e = 0; e < n_edges(dim); ++e)
          if ((et[e].first == la && et[e].second == lb) ||
              (et[e].first == lb && et[e].second == la))
            fb.nodes.push_back(cn[dim + 1 + e]);
      }
  }
  const int n_loc = static_cast<int>(fb.nodes.size());

  const QuadRule rule = simplex_rule(dim - 1, degree);
  const int nq = rule.size();
  fb.qp.resize(nq, 3);
  fb.N.resize(nq, n_loc);
  fb.dS.resize(nq);
  fb.w.resize(nq);

  const Point& p0 = mesh.vertices[f.v[0]];
  Eigen::MatrixXd Jf(3, dim - 1);
  for (int k = 1; k < dim; ++k) Jf.col(k - 1) = mesh.vertices[f.v[k]] - p0;
  const Eigen::MatrixXd G = Jf.transpose() * Jf; // metric
  const double darea = std::sqrt(G.determinant());
  const Eigen::MatrixXd Ginv = G.inverse();

  for (int q = 0; q < nq; ++q) {
    Eigen::VectorXd r = rule.points.row(q);
    Point x = p0;
    for (int k = 0; k < dim - 1; ++k) x += r(k) * Jf.col(k);
    fb.qp.row(q) = x.transpose();
    fb.w(q) = rule.weights(q) * darea;
    // P2 basis on the (dim-1)-simplex
    Eigen::VectorXd Nf;
    Eigen::MatrixXd dNf;
    p2_basis(dim - 1, r, Nf, dNf);
    // facet-local node order from p2_basis: vertices then edges (0,1),(0,2),(1,2)
    // our fb.nodes order: vertices v0..v{dim-1}, then edges in (a<b) order,
    // which matches edge_table(dim-1) lexicographic order.
    for (int m = 0; m < n_loc; ++m) fb.N(q, m) = Nf(m);
    Eigen::MatrixXd dSq(n_loc, 3);
    for (int m = 0; m < n_loc; ++m) {
      Eigen::VectorXd gref = dNf.row(m).transpose();      // (dim-1)
      Eigen::VectorXd gpar = Ginv * gref;                 // contravariant
      Eigen::Vector3d gph = Eigen::Vector3d::Zero();
      for (int k = 0; k < dim - 1; ++k) gph += gpar(k) * Jf.col(k);
      dSq.row(m) = gph.transpose();
    }
    fb.dS[q] = dSq;
  }
  return fb;
}

} // namespace

AssembledForms assemble(const CoeffTensor& A, const MixedSpace& s) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  const int nsb = s.n_scalar_basis();
  const int nv = s.n_vdof();
  const int np = s.n_pdof();
  const QuadRule rule = simplex_rule(dim, assembly_degree());

  std::vector<Trip> tA[2], tB[2], tMv[2], tX[2], tE[2], tMp[2];

  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  Eigen::VectorXd Np;
  Eigen::MatrixXd dNp;

  for (int c : s.active_cells()) {
    const int reg = mesh.cell_region[c];
    const CellGeometry g = cell_geometry(mesh, c);
    const double jac = std::abs(g.detJ);
    const auto& cn = s.cell_nodes(c);
    const auto& cp = s.cell_pdofs(c);

    Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(nsb * dim, nsb * dim);
    Eigen::MatrixXd Ee = Eigen::MatrixXd::Zero(nsb * dim, nsb * dim);
    Eigen::MatrixXd Xe = Eigen::MatrixXd::Zero(nsb * dim, nsb * dim);
    Eigen::MatrixXd Me = Eigen::MatrixXd::Zero(nsb * dim, nsb * dim);
    Eigen::MatrixXd Be = Eigen::MatrixXd::Zero(dim + 1, nsb * dim);
    Eigen::MatrixXd Pe = Eigen::MatrixXd::Zero(dim + 1, dim + 1);

    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      p2_basis(dim, r, N, dN);
      p1_basis(dim, r, Np, dNp);
      Eigen::MatrixXd G = dN * g.Jinv_t.transpose(); // n x dim physical grads
      Point x = mesh.vertices[mesh.cells[c][0]];
      for (int k = 0; k < dim; ++k)
        x += r(k) * (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]]);
      const double w = rule.weights(q) * jac;

      // per-local-dof symmetric-gradient vectors, flattened (i*dim + a)
      Eigen::MatrixXd Evec(nsb * dim, dim * dim);
      for (int m = 0; m < nsb; ++m)
        for (int comp = 0; comp < dim; ++comp) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(dim * dim);
          for (int a = 0; a < dim; ++a) {
            e(comp * dim + a) += 0.5 * G(m, a);
            e(a * dim + comp) += 0.5 * G(m, a);
          }
          Evec.row(m * dim + comp) = e.transpose();
        }
      const Eigen::MatrixXd Q = A.entry_matrix(x, reg);
      Ke.noalias() += w * Evec * Q * Evec.transpose();
      Ee.noalias() += w * Evec * Evec.transpose();
      for (int m = 0; m < nsb; ++m)
        for (int m2 = 0; m2 < nsb; ++m2) {
          const double gg = w * G.row(m).dot(G.row(m2));
          const double mm = w * N(m) * N(m2);
          for (int comp = 0; comp < dim; ++comp) {
            Xe(m * dim + comp, m2 * dim + comp) += gg;
            Me(m * dim + comp, m2 * dim + comp) += mm;
          }
        }
      for (int pl = 0; pl <= dim; ++pl)
        for (int m = 0; m < nsb; ++m)
          for (int comp = 0; comp < dim; ++comp)
            Be(pl, m * dim + comp) -= w * Np(pl) * G(m, comp);
      Pe.noalias() += w * Np * Np.transpose();
    }

    const int side = reg == REGION_INNER ? 0 : 1;
    auto scatter_vv = [&](std::vector<Trip>& t, const Eigen::MatrixXd& Ke_) {
      for (int m = 0; m < nsb; ++m)
        for (int m2 = 0; m2 < nsb; ++m2)
          for (int ci = 0; ci < dim; ++ci)
            for (int cj = 0; cj < dim; ++cj) {
              const double v = Ke_(m * dim + ci, m2 * dim + cj);
              if (v != 0.0)
                t.emplace_back(cn[m] * dim + ci, cn[m2] * dim + cj, v);
            }
    };
    scatter_vv(tA[side], Ke);
    scatter_vv(tE[side], Ee);
    scatter_vv(tX[side], Xe);
    scatter_vv(tMv[side], Me);
    for (int pl = 0; pl <= dim; ++pl)
      for (int m = 0; m < nsb; ++m)
        for (int comp = 0; comp < dim; ++comp) {
          const double v = Be(pl, m * dim + comp);
          if (v != 0.0) tB[side].emplace_back(cp[pl], cn[m] * dim + comp, v);
        }
    for (int pl = 0; pl <= dim; ++pl)
      for (int pl2 = 0; pl2 <= dim; ++pl2)
        tMp[side].emplace_back(cp[pl], cp[pl2], Pe(pl, pl2));
  }

  AssembledForms f;
  finalize(f.A_in, nv, nv, tA[0]);
  finalize(f.A_out, nv, nv, tA[1]);
  finalize(f.B_in, np, nv, tB[0]);
  finalize(f.B_out, np, nv, tB[1]);
  finalize(f.Mv_in, nv, nv, tMv[0]);
  finalize(f.Mv_out, nv, nv, tMv[1]);
  finalize(f.X_in, nv, nv, tX[0]);
  finalize(f.X_out, nv, nv, tX[1]);
  finalize(f.E_in, nv, nv, tE[0]);
  finalize(f.E_out, nv, nv, tE[1]);
  finalize(f.Mp_in, np, np, tMp[0]);
  finalize(f.Mp_out, np, np, tMp[1]);
  f.A = f.A_in + f.A_out;
  f.B = f.B_in + f.B_out;
  f.Mv = f.Mv_in + f.Mv_out;
  f.X = f.X_in + f.X_out;
  f.E = f.E_in + f.E_out;
  f.Mp = f.Mp_in + f.Mp_out;

  // trace-space surrogate inner product and the interface-normal density
  const int nt = s.n_tdof();
  std::vector<Trip> tS, tM;
  f.nu_density = Vec::Zero(nt);
  for (const auto& facet : s.mesh().interface_facets) {
    const FacetBasis fb = facet_basis(s, facet, assembly_degree());
    const int n_loc = static_cast<int>(fb.nodes.size());
    for (int q = 0; q < fb.w.size(); ++q) {
      for (int m = 0; m < n_loc; ++m) {
        const int tm = s.trace_index(fb.nodes[m]);
        for (int comp = 0; comp < dim; ++comp)
          f.nu_density(tm * dim + comp) +=
              fb.w(q) * fb.N(q, m) * facet.normal(comp);
        for (int m2 = 0; m2 < n_loc; ++m2) {
          const int tm2 = s.trace_index(fb.nodes[m2]);
          const double mm = fb.w(q) * fb.N(q, m) * fb.N(q, m2);
          const double kk = fb.w(q) * fb.dS[q].row(m).dot(fb.dS[q].row(m2));
          for (int comp = 0; comp < dim; ++comp) {
            tM.emplace_back(tm * dim + comp, tm2 * dim + comp, mm);
            tS.emplace_back(tm * dim + comp, tm2 * dim + comp, mm + kk);
          }
        }
      }
    }
  }
  finalize(f.M_trace, nt, nt, tM);
  finalize(f.S_trace, nt, nt, tS);
  if (nt > 0) {
    f.S_solver = std::make_shared<Eigen::SimplicialLDLT<SparseMat>>();
    f.S_solver->compute(f.S_trace);
    if (f.S_solver->info() != Eigen::Success)
      throw Error("assemble: trace inner product factorization failed");
  }
  return f;
}

// ---------------------------------------------------------------------------
// Loads
// ---------------------------------------------------------------------------

namespace {
bool cell_in_filter(const CompositeMesh& mesh, int c, DomainFilter filter) {
  if (filter == DomainFilter::Composite) return true;
  const bool in = mesh.cell_region[c] == REGION_INNER;
  return filter == DomainFilter::InnerOnly ? in : !in;
}
} // namespace

Vec assemble_velocity_load(const MixedSpace& s,
                           const std::function<Eigen::Vector3d(const Point&)>& fn,
                           DomainFilter filter) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_vdof());
  const QuadRule rule = simplex_rule(dim, assembly_degree());
  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  for (int c : s.active_cells()) {
    if (!cell_in_filter(mesh, c, filter)) continue;
    const CellGeometry g = cell_geometry(mesh, c);
    const auto& cn = s.cell_nodes(c);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      p2_basis(dim, r, N, dN);
      Point x = mesh.vertices[mesh.cells[c][0]];
      for (int k = 0; k < dim; ++k)
        x += r(k) * (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]]);
      const Eigen::Vector3d fx = fn(x);
      const double w = rule.weights(q) * std::abs(g.detJ);
      for (int m = 0; m < s.n_scalar_basis(); ++m)
        for (int comp = 0; comp < dim; ++comp)
          out(cn[m] * dim + comp) += w * N(m) * fx(comp);
    }
  }
  return out;
}

Vec assemble_pressure_load(const MixedSpace& s,
                           const std::function<double(const Point&)>& fn,
                           DomainFilter filter) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_pdof());
  const QuadRule rule = simplex_rule(dim, assembly_degree());
  Eigen::VectorXd Np;
  Eigen::MatrixXd dNp;
  for (int c : s.active_cells()) {
    if (!cell_in_filter(mesh, c, filter)) continue;
    const CellGeometry g = cell_geometry(mesh, c);
    const auto& cp = s.cell_pdofs(c);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      p1_basis(dim, r, Np, dNp);
      Point x = mesh.vertices[mesh.cells[c][0]];
      for (int k = 0; k < dim; ++k)
        x += r(k) * (mesh.vertices[mesh.cells[c][k + 1]] - mesh.vertices[mesh.cells[c][0]]);
      const double w = rule.weights(q) * std::abs(g.detJ) * fn(x);
      for (int pl = 0; pl <= dim; ++pl) out(cp[pl]) += w * Np(pl);
    }
  }
  return out;
}

Vec assemble_interface_load(
    const MixedSpace& s,
    const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& psi) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_vdof());
  for (const auto& facet : mesh.interface_facets) {
    const FacetBasis fb = facet_basis(s, facet, assembly_degree());
    for (int q = 0; q < fb.w.size(); ++q) {
      const Point x = fb.qp.row(q).transpose();
      const Eigen::Vector3d val = psi(x, facet.normal);
      for (size_t m = 0; m < fb.nodes.size(); ++m)
        for (int comp = 0; comp < dim; ++comp)
          out(fb.nodes[m] * dim + comp) += fb.w(q) * fb.N(q, m) * val(comp);
    }
  }
  return out;
}

Vec assemble_outer_boundary_load(
    const MixedSpace& s, int facet_tag,
    const std::function<Eigen::Vector3d(const Point&, const Eigen::Vector3d&)>& t) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_vdof());
  for (const auto& facet : mesh.outer_facets) {
    if (facet.tag != facet_tag) continue;
    if (!s.cell_active(facet.cell_in)) continue;
    const FacetBasis fb = facet_basis(s, facet, assembly_degree());
    for (int q = 0; q < fb.w.size(); ++q) {
      const Point x = fb.qp.row(q).transpose();
      const Eigen::Vector3d val = t(x, facet.normal);
      for (size_t m = 0; m < fb.nodes.size(); ++m)
        for (int comp = 0; comp < dim; ++comp)
          out(fb.nodes[m] * dim + comp) += fb.w(q) * fb.N(q, m) * val(comp);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Traces, liftings, conormal derivatives
// ---------------------------------------------------------------------------

TraceField trace(const MixedSpace& s, const Field& u, Side side) {
  const int dim = s.dim();
  TraceField phi = Vec::Zero(s.n_tdof());
  const Vec& uu = side == Side::Inner ? u.u_in : u.u_out;
  for (int t = 0; t < s.n_tnodes(); ++t)
    for (int c = 0; c < dim; ++c)
      phi(t * dim + c) = uu(s.trace_node(t) * dim + c);
  return phi;
}

Vec scatter_trace(const MixedSpace& s, const TraceField& phi) {
  const int dim = s.dim();
  Vec v = Vec::Zero(s.n_vdof());
  for (int t = 0; t < s.n_tnodes(); ++t)
    for (int c = 0; c < dim; ++c) v(s.trace_node(t) * dim + c) = phi(t * dim + c);
  return v;
}

TraceField restrict_trace(const MixedSpace& s, const Vec& v) {
  const int dim = s.dim();
  TraceField phi = Vec::Zero(s.n_tdof());
  for (int t = 0; t < s.n_tnodes(); ++t)
    for (int c = 0; c < dim; ++c) phi(t * dim + c) = v(s.trace_node(t) * dim + c);
  return phi;
}

namespace {

// velocity dofs interior to one side: nodes of that side's cells that are
// neither trace nodes nor constrained
std::vector<int> side_interior_vdofs(const MixedSpace& s, Side side) {
  const auto& mesh = s.mesh();
  std::vector<char> node_on_side(s.n_nodes(), 0);
  for (int c : s.active_cells()) {
    const bool in = mesh.cell_region[c] == REGION_INNER;
    if ((side == Side::Inner) != in) continue;
    for (int nd : s.cell_nodes(c)) node_on_side[nd] = 1;
  }
  std::vector<int> dofs;
  for (int nd = 0; nd < s.n_nodes(); ++nd)
    if (node_on_side[nd] && s.trace_index(nd) < 0 && !s.node_constrained(nd))
      for (int c = 0; c < s.dim(); ++c) dofs.push_back(nd * s.dim() + c);
  return dofs;
}

} // namespace

Vec lifting(const MixedSpace& s, const AssembledForms& forms,
            const TraceField& phi, Side side, LiftingVariant variant) {
  Vec v = scatter_trace(s, phi);
  if (variant == LiftingVariant::NodalLayer) return v;
  // discrete harmonic extension into the side region
  const SparseMat& X = side == Side::Inner ? forms.X_in : forms.X_out;
  const auto idofs = side_interior_vdofs(s, side);
  if (idofs.empty()) return v;
  std::vector<int> pos(s.n_vdof(), -1);
  for (size_t k = 0; k < idofs.size(); ++k) pos[idofs[k]] = static_cast<int>(k);
  std::vector<Trip> trips;
  Vec rhs = Vec::Zero(static_cast<int>(idofs.size()));
  for (int col = 0; col < X.outerSize(); ++col)
    for (SparseMat::InnerIterator it(X, col); it; ++it) {
      const int pi = pos[it.row()], pj = pos[it.col()];
      if (pi >= 0 && pj >= 0) trips.emplace_back(pi, pj, it.value());
      else if (pi >= 0) rhs(pi) -= it.value() * v(it.col());
    }
  SparseMat Xii(static_cast<int>(idofs.size()), static_cast<int>(idofs.size()));
  Xii.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SparseMat> solver(Xii);
  Vec w = solver.solve(rhs);
  for (size_t k = 0; k < idofs.size(); ++k) v(idofs[k]) = w(static_cast<int>(k));
  return v;
}

Field interpolate(const MixedSpace& s,
                  const std::function<Eigen::Vector3d(const Point&)>& u,
                  const std::function<double(const Point&)>& p) {
  Field f = Field::zero(s);
  for (int nd = 0; nd < s.n_nodes(); ++nd) {
    const Eigen::Vector3d val = u(s.node_coord(nd));
    for (int c = 0; c < s.dim(); ++c) f.u_in(nd * s.dim() + c) = val(c);
  }
  f.u_out = f.u_in;
  for (int q = 0; q < s.n_pdof(); ++q) f.p(q) = p(s.pdof_coord(q));
  return f;
}

TraceDensity conormal_derivative(const MixedSpace& s, const AssembledForms& forms,
                                 const Field& u, Side side, const Vec& f_side) {
  Vec r;
  if (side == Side::Inner) {
    r = forms.A_in * u.u_in + forms.B_in.transpose() * u.p;
  } else {
    r = forms.A_out * u.u_out + forms.B_out.transpose() * u.p;
  }
  if (f_side.size() > 0) r += f_side;
  TraceDensity t = restrict_trace(s, r);
  if (side == Side::Outer) t = -t;
  return t;
}

TraceDensity conormal_derivative_harmonic(const MixedSpace& s,
                                          const AssembledForms& forms,
                                          const Field& u, Side side,
                                          const Vec& f_side) {
  Vec r;
  if (side == Side::Inner) {
    r = forms.A_in * u.u_in + forms.B_in.transpose() * u.p;
  } else {
    r = forms.A_out * u.u_out + forms.B_out.transpose() * u.p;
  }
  if (f_side.size() > 0) r += f_side;
  // t_i = <r, L_i> with L_i the harmonic lifting: t = r|_G - X_it^T Xii^{-1} r|_i
  const SparseMat& X = side == Side::Inner ? forms.X_in : forms.X_out;
  const auto idofs = side_interior_vdofs(s, side);
  TraceDensity t = restrict_trace(s, r);
  if (!idofs.empty()) {
    std::vector<int> pos(s.n_vdof(), -1);
    for (size_t k = 0; k < idofs.size(); ++k) pos[idofs[k]] = static_cast<int>(k);
    std::vector<Trip> trips;
    Vec ri(static_cast<int>(idofs.size()));
    for (size_t k = 0; k < idofs.size(); ++k) ri(static_cast<int>(k)) = r(idofs[k]);
    for (int col = 0; col < X.outerSize(); ++col)
      for (SparseMat::InnerIterator it(X, col); it; ++it) {
        const int pi = pos[it.row()], pj = pos[it.col()];
        if (pi >= 0 && pj >= 0) trips.emplace_back(pi, pj, it.value());
      }
    SparseMat Xii(static_cast<int>(idofs.size()), static_cast<int>(idofs.size()));
    Xii.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SparseMat> solver(Xii);
    Vec z = solver.solve(ri); // Xii^{-1} r_i
    // accumulate -X(trace,i) z onto trace dofs
    const int dim = s.dim();
    for (int col = 0; col < X.outerSize(); ++col)
      for (SparseMat::InnerIterator it(X, col); it; ++it) {
        const int pj = pos[it.col()];
        if (pj < 0) continue;
        const int node = static_cast<int>(it.row()) / dim;
        const int ti = s.trace_index(node);
        if (ti >= 0) t(ti * dim + it.row() % dim) -= it.value() * z(pj);
      }
  }
  if (side == Side::Outer) t = -t;
  return t;
}

TraceDensity conormal_jump(const MixedSpace& s, const AssembledForms& forms,
                           const Field& u, const Vec& f_in, const Vec& f_out) {
  return conormal_derivative(s, forms, u, Side::Inner, f_in) -
         conormal_derivative(s, forms, u, Side::Outer, f_out);
}

Vec convection_load(const MixedSpace& s, const Field& w, const Field& u,
                    DomainFilter filter) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_vdof());
  const QuadRule rule = simplex_rule(dim, convection_degree());
  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  for (int c : s.active_cells()) {
    if (!cell_in_filter(mesh, c, filter)) continue;
    const int reg = mesh.cell_region[c];
    const Vec& wv = reg == REGION_INNER ? w.u_in : w.u_out;
    const Vec& uv = reg == REGION_INNER ? u.u_in : u.u_out;
    const CellGeometry g = cell_geometry(mesh, c);
    const auto& cn = s.cell_nodes(c);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      p2_basis(dim, r, N, dN);
      Eigen::MatrixXd G = dN * g.Jinv_t.transpose();
      // w(x) and grad u(x)
      Eigen::Vector3d wx = Eigen::Vector3d::Zero();
      Eigen::Matrix3d gu = Eigen::Matrix3d::Zero(); // gu(i,j) = d_j u_i
      for (int m = 0; m < s.n_scalar_basis(); ++m)
        for (int comp = 0; comp < dim; ++comp) {
          wx(comp) += N(m) * wv(cn[m] * dim + comp);
          for (int d = 0; d < dim; ++d) gu(comp, d) += G(m, d) * uv(cn[m] * dim + comp);
        }
      Eigen::Vector3d conv = Eigen::Vector3d::Zero();
      for (int comp = 0; comp < dim; ++comp)
        for (int d = 0; d < dim; ++d) conv(comp) += wx(d) * gu(comp, d);
      const double wq = rule.weights(q) * std::abs(g.detJ);
      for (int m = 0; m < s.n_scalar_basis(); ++m)
        for (int comp = 0; comp < dim; ++comp)
          out(cn[m] * dim + comp) += wq * N(m) * conv(comp);
    }
  }
  return out;
}

Vec convection_load_transposed(const MixedSpace& s, const Field& w,
                               const Field& u, DomainFilter filter) {
  const auto& mesh = s.mesh();
  const int dim = mesh.dim;
  Vec out = Vec::Zero(s.n_vdof());
  const QuadRule rule = simplex_rule(dim, convection_degree());
  Eigen::VectorXd N;
  Eigen::MatrixXd dN;
  for (int c : s.active_cells()) {
    if (!cell_in_filter(mesh, c, filter)) continue;
    const int reg = mesh.cell_region[c];
    const Vec& wv = reg == REGION_INNER ? w.u_in : w.u_out;
    const Vec& uv = reg == REGION_INNER ? u.u_in : u.u_out;
    const CellGeometry g = cell_geometry(mesh, c);
    const auto& cn = s.cell_nodes(c);
    for (int q = 0; q < rule.size(); ++q) {
      Eigen::VectorXd r = rule.points.row(q);
      p2_basis(dim, r, N, dN);
      Eigen::MatrixXd G = dN * g.Jinv_t.transpose();
      Eigen::Vector3d wx = Eigen::Vector3d::Zero(), ux = Eigen::Vector3d::Zero();
      for (int m = 0; m < s.n_scalar_basis(); ++m)
        for (int comp = 0; comp < dim; ++comp) {
          wx(comp) += N(m) * wv(cn[m] * dim + comp);
          ux(comp) += N(m) * uv(cn[m] * dim + comp);
        }
      const double wq = rule.weights(q) * std::abs(g.detJ);
      // <(w . grad) phi_{m,comp}, u> = (w . grad N_m) u_comp
      for (int m = 0; m < s.n_scalar_basis(); ++m) {
        double wg = 0.0;
        for (int d = 0; d < dim; ++d) wg += wx(d) * G(m, d);
        for (int comp = 0; comp < dim; ++comp)
          out(cn[m] * dim + comp) += wq * wg * ux(comp);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

double h1_seminorm(const AssembledForms& f, const Field& u) {
  const double v = u.u_in.dot(f.X_in * u.u_in) + u.u_out.dot(f.X_out * u.u_out);
  return std::sqrt(std::max(0.0, v));
}

double h1_norm(const AssembledForms& f, const Field& u) {
  const double v = u.u_in.dot((f.X_in + f.Mv_in) * u.u_in) +
                   u.u_out.dot((f.X_out + f.Mv_out) * u.u_out);
  return std::sqrt(std::max(0.0, v));
}

double l2_norm_velocity(const AssembledForms& f, const Field& u) {
  const double v = u.u_in.dot(f.Mv_in * u.u_in) + u.u_out.dot(f.Mv_out * u.u_out);
  return std::sqrt(std::max(0.0, v));
}

double l2_norm_pressure(const AssembledForms& f, const Vec& p) {
  return std::sqrt(std::max(0.0, p.dot(f.Mp * p)));
}

double trace_norm(const AssembledForms& f, const TraceField& phi) {
  return std::sqrt(std::max(0.0, phi.dot(f.S_trace * phi)));
}

double trace_dual_norm(const AssembledForms& f, const TraceDensity& t) {
  if (!f.S_solver) throw Error("trace_dual_norm: no trace space");
  Vec z = f.S_solver->solve(t);
  return std::sqrt(std::max(0.0, t.dot(z)));
}

double trace_pairing(const TraceDensity& t, const TraceField& phi) {
  return t.dot(phi);
}

TraceField rigid_trace(const MixedSpace& s, int j) {
  const auto rb = rigid_motion_basis(s.dim());
  TraceField phi = Vec::Zero(s.n_tdof());
  for (int t = 0; t < s.n_tnodes(); ++t) {
    const Eigen::Vector3d v = rb.value(j, s.node_coord(s.trace_node(t)));
    for (int c = 0; c < s.dim(); ++c) phi(t * s.dim() + c) = v(c);
  }
  return phi;
}

Vec rigid_jump_moments(const MixedSpace& s, const AssembledForms& f,
                       const Field& w) {
  const auto rb = rigid_motion_basis(s.dim());
  const TraceField jump = trace(s, w, Side::Inner) - trace(s, w, Side::Outer);
  Vec m(rb.size());
  for (int j = 0; j < rb.size(); ++j)
    m(j) = jump.dot(f.M_trace * rigid_trace(s, j));
  return m;
}

double composite_rigid_norm(const MixedSpace& s, const AssembledForms& f,
                            const Field& w) {
  double v = w.u_in.dot(f.E_in * w.u_in) + w.u_out.dot(f.E_out * w.u_out);
  const Vec m = rigid_jump_moments(s, f, w);
  v += m.squaredNorm();
  return std::sqrt(std::max(0.0, v));
}

KornReport korn_check(const MixedSpace& s, const AssembledForms& f,
                      int n_samples, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  KornReport rep;
  rep.samples = n_samples;
  for (int k = 0; k < n_samples; ++k) {
    Vec v = Vec::Zero(s.n_vdof());
    for (int d : s.free_vdofs()) v(d) = gauss(rng);
    const double num = v.dot(f.X * v);
    const double den = v.dot(f.E * v);
    if (den > 0.0) rep.max_ratio = std::max(rep.max_ratio, num / den);
  }
  return rep;
}

void write_columnar(const Vec& v, std::ostream& os) {
  os.precision(17);
  for (int i = 0; i < v.size(); ++i) os << i << ' ' << v(i) << '\n';
}

Vec read_columnar(std::istream& is) {
  std::vector<double> vals;
  int idx;
  double val;
  while (is >> idx >> val) {
    if (idx != static_cast<int>(vals.size()))
      throw Error("read_columnar: indices must be consecutive");
    vals.push_back(val);
  }
  Vec v(static_cast<int>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) v(static_cast<int>(i)) = vals[i];
  return v;
}

} // namespace astokes
