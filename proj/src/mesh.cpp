#include "astokes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace astokes {

double CompositeMesh::cell_volume(int c) const {
  const auto& cc = cells[c];
  if (dim == 2) {
    Eigen::Vector2d a = (vertices[cc[1]] - vertices[cc[0]]).head<2>();
    Eigen::Vector2d b = (vertices[cc[2]] - vertices[cc[0]]).head<2>();
    return 0.5 * (a.x() * b.y() - a.y() * b.x());
  }
  Eigen::Vector3d a = vertices[cc[1]] - vertices[cc[0]];
  Eigen::Vector3d b = vertices[cc[2]] - vertices[cc[0]];
  Eigen::Vector3d d = vertices[cc[3]] - vertices[cc[0]];
  return a.cross(b).dot(d) / 6.0;
}

Point CompositeMesh::cell_centroid(int c) const {
  Point p = Point::Zero();
  for (int k = 0; k <= dim; ++k) p += vertices[cells[c][k]];
  return p / (dim + 1);
}

Eigen::Matrix3d CompositeMesh::cell_jacobian(int c) const {
  Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
  for (int k = 0; k < dim; ++k)
    J.col(k) = vertices[cells[c][k + 1]] - vertices[cells[c][0]];
  return J;
}

namespace {

std::vector<double> build_axis(double a, double h, double R, double growth) {
  const int n_in = std::max(1, static_cast<int>(std::lround(a / h)));
  const double step = a / n_in;
  std::vector<double> pos; // nonnegative half
  for (int k = 0; k <= n_in; ++k) pos.push_back(k * step);
  double p = a, w = 2.0 * step;
  while (p < R - 1e-12) {
    double pn = p + w;
    if (pn > R - 0.25 * w) pn = R;
    pos.push_back(pn);
    p = pn;
    w *= growth;
  }
  std::vector<double> axis;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it)
    if (*it > 0.0) axis.push_back(-*it);
  for (double q : pos) axis.push_back(q);
  return axis;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Morph lattice shells (max-norm spheres) toward round spheres. beta(rho)
// reaches 1 at rho = 2a so the profile is independent of the truncation
// radius and collar vertices coincide across R.
Point warp_vertex(const Point& v, int dim, double a, double R,
                  InnerShape inner, OuterShape outer) {
  Point x = v;
  if (dim == 2) x.z() = 0.0;
  double rho = 0.0;
  for (int k = 0; k < dim; ++k) rho = std::max(rho, std::abs(x[k]));
  if (rho < 1e-14) return x;
  double beta = 0.0;
  const bool round_in = inner == InnerShape::Disk;
  const bool round_out = outer == OuterShape::Disk;
  if (rho <= a + 1e-12) {
    beta = round_in ? smoothstep(rho / a) : 0.0;
  } else {
    if (round_out) {
      beta = round_in ? 1.0 : smoothstep((rho - a) / a);
    } else {
      beta = round_in ? 1.0 - smoothstep((rho - a) / (R - a)) : 0.0;
    }
  }
  if (beta == 0.0) return x;
  const double r2 = x.head(3).norm();
  Point u_inf = x / rho;
  Point u_2 = x / r2;
  return rho * ((1.0 - beta) * u_inf + beta * u_2);
}

struct FaceKey {
  std::array<int, 3> v{-1, -1, -1};
  bool operator<(const FaceKey& o) const { return v < o.v; }
};

FaceKey make_face_key(int dim, std::array<int, 3> f) {
  if (dim == 2) f[2] = -1;
  std::sort(f.begin(), f.end());
  return FaceKey{f};
}

void facet_geometry(const CompositeMesh& m, Facet& f) {
  if (m.dim == 2) {
    Eigen::Vector3d d = m.vertices[f.v[1]] - m.vertices[f.v[0]];
    f.measure = d.norm();
    f.normal = Eigen::Vector3d(d.y(), -d.x(), 0.0) / f.measure;
  } else {
    Eigen::Vector3d d1 = m.vertices[f.v[1]] - m.vertices[f.v[0]];
    Eigen::Vector3d d2 = m.vertices[f.v[2]] - m.vertices[f.v[0]];
    Eigen::Vector3d n = d1.cross(d2);
    f.measure = 0.5 * n.norm();
    f.normal = n.normalized();
  }
}

void orient_facet(const CompositeMesh& m, Facet& f, int from_cell) {
  Point fc = Point::Zero();
  for (int k = 0; k < m.dim; ++k) fc += m.vertices[f.v[k]];
  fc /= m.dim;
  if (f.normal.dot(fc - m.cell_centroid(from_cell)) < 0.0) f.normal = -f.normal;
}

void derive_facets(CompositeMesh& m,
                   const std::function<bool(const Point&)>& dirichlet_sel) {
  m.interface_facets.clear();
  m.outer_facets.clear();
  // face -> (cell, local face) occurrences
  std::map<FaceKey, std::vector<int>> face_cells;
  const int nf = m.dim + 1;
  for (int c = 0; c < m.n_cells(); ++c)
    for (int lf = 0; lf < nf; ++lf) {
      std::array<int, 3> fv{-1, -1, -1};
      int k = 0;
      for (int lv = 0; lv < nf; ++lv)
        if (lv != lf) fv[k++] = m.cells[c][lv];
      face_cells[make_face_key(m.dim, fv)].push_back(c);
    }
  for (const auto& [key, cs] : face_cells) {
    if (cs.size() == 2) {
      const int r0 = m.cell_region[cs[0]], r1 = m.cell_region[cs[1]];
      if (r0 != r1) {
        Facet f;
        f.v = key.v;
        if (m.dim == 2) f.v = {key.v[1], key.v[2], -1};
        f.tag = FACET_INTERFACE;
        f.cell_in = r0 == REGION_INNER ? cs[0] : cs[1];
        f.cell_out = r0 == REGION_INNER ? cs[1] : cs[0];
        facet_geometry(m, f);
        orient_facet(m, f, f.cell_in);
        m.interface_facets.push_back(f);
      }
    } else if (cs.size() == 1) {
      Facet f;
      f.v = key.v;
      if (m.dim == 2) f.v = {key.v[1], key.v[2], -1};
      f.cell_in = cs[0];
      facet_geometry(m, f);
      orient_facet(m, f, cs[0]);
      Point fc = Point::Zero();
      for (int k = 0; k < m.dim; ++k) fc += m.vertices[f.v[k]];
      fc /= m.dim;
      f.tag = (!dirichlet_sel || dirichlet_sel(fc)) ? FACET_OUTER_D : FACET_OUTER_N;
      m.outer_facets.push_back(f);
    }
  }
}

} // namespace

CompositeMesh build_composite(const BuildOptions& opt) {
  const double a = opt.inner_halfwidth;
  if (opt.dim != 2 && opt.dim != 3) throw Error("build_composite: dim must be 2 or 3");
  if (!(opt.R > a)) throw Error("build_composite: R must exceed the inner halfwidth");
  if (!(opt.h <= 2.0 * a))
    throw Error("build_composite: h too large to resolve the interface");

  const auto axis = build_axis(a, opt.h, opt.R, opt.growth);
  const int na = static_cast<int>(axis.size());

  CompositeMesh m;
  m.dim = opt.dim;
  m.truncation_radius = opt.R;
  m.h_interface = opt.h;
  m.inner_shape = opt.inner_shape;
  m.outer_shape = opt.outer_shape;
  m.inner_halfwidth = a;

  auto vid = [&](int i, int j, int k) {
    return opt.dim == 2 ? i * na + j : (i * na + j) * na + k;
  };

  // Lattice vertices (warped afterwards).
  if (opt.dim == 2) {
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j) m.vertices.push_back(Point(axis[i], axis[j], 0.0));
  } else {
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < na; ++j)
        for (int k = 0; k < na; ++k)
          m.vertices.push_back(Point(axis[i], axis[j], axis[k]));
  }

  auto box_inner = [&](double cx, double cy, double cz) {
    double r = std::max(std::abs(cx), std::abs(cy));
    if (opt.dim == 3) r = std::max(r, std::abs(cz));
    return r < a;
  };

  if (opt.dim == 2) {
    for (int i = 0; i + 1 < na; ++i)
      for (int j = 0; j + 1 < na; ++j) {
        const int v00 = vid(i, j, 0), v10 = vid(i + 1, j, 0);
        const int v11 = vid(i + 1, j + 1, 0), v01 = vid(i, j + 1, 0);
        const bool inner =
            box_inner(0.5 * (axis[i] + axis[i + 1]), 0.5 * (axis[j] + axis[j + 1]), 0);
        m.cells.push_back({v00, v10, v11, -1});
        m.cell_region.push_back(inner ? REGION_INNER : REGION_OUTER);
        m.cells.push_back({v00, v11, v01, -1});
        m.cell_region.push_back(inner ? REGION_INNER : REGION_OUTER);
      }
  } else {
    // Kuhn split: 6 tets per box along vertex permutations, conforming on
    // tensor grids.
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int i = 0; i + 1 < na; ++i)
      for (int j = 0; j + 1 < na; ++j)
        for (int k = 0; k + 1 < na; ++k) {
          const bool inner = box_inner(0.5 * (axis[i] + axis[i + 1]),
                                       0.5 * (axis[j] + axis[j + 1]),
                                       0.5 * (axis[k] + axis[k + 1]));
          for (const auto& p : perms) {
            std::array<int, 3> d{0, 0, 0};
            std::array<int, 4> tet;
            tet[0] = vid(i, j, k);
            for (int s = 0; s < 3; ++s) {
              d[p[s]] = 1;
              tet[s + 1] = vid(i + d[0], j + d[1], k + d[2]);
            }
            m.cells.push_back(tet);
            m.cell_region.push_back(inner ? REGION_INNER : REGION_OUTER);
          }
        }
  }

  for (auto& v : m.vertices)
    v = warp_vertex(v, opt.dim, a, opt.R, opt.inner_shape, opt.outer_shape);

  // Fix orientation, then validate.
  for (int c = 0; c < m.n_cells(); ++c) {
    if (m.cell_volume(c) < 0.0) std::swap(m.cells[c][0], m.cells[c][1]);
    if (m.cell_volume(c) <= 1e-14)
      throw Error("build_composite: degenerate cell " + std::to_string(c) +
                  " (h too large for the requested shapes)");
  }

  derive_facets(m, opt.dirichlet_selector);
  return m;
}

CompositeMesh refine(const CompositeMesh& mesh) {
  CompositeMesh m;
  m.dim = mesh.dim;
  m.truncation_radius = mesh.truncation_radius;
  m.h_interface = 0.5 * mesh.h_interface;
  m.inner_shape = mesh.inner_shape;
  m.outer_shape = mesh.outer_shape;
  m.inner_halfwidth = mesh.inner_halfwidth;
  m.vertices = mesh.vertices;

  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int p, int q) {
    auto key = std::minmax(p, q);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = m.n_vertices();
    m.vertices.push_back(0.5 * (mesh.vertices[p] + mesh.vertices[q]));
    midpoint[key] = id;
    return id;
  };

  // Maps child cells back for facet inheritance via vertex membership.
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.cells[c];
    const int reg = mesh.cell_region[c];
    if (mesh.dim == 2) {
      const int m01 = mid(t[0], t[1]), m12 = mid(t[1], t[2]), m02 = mid(t[0], t[2]);
      const std::array<std::array<int, 4>, 4> kids = {{{t[0], m01, m02, -1},
                                                       {m01, t[1], m12, -1},
                                                       {m02, m12, t[2], -1},
                                                       {m01, m12, m02, -1}}};
      for (const auto& k : kids) {
        m.cells.push_back(k);
        m.cell_region.push_back(reg);
      }
    } else {
      const int m01 = mid(t[0], t[1]), m02 = mid(t[0], t[2]), m03 = mid(t[0], t[3]);
      const int m12 = mid(t[1], t[2]), m13 = mid(t[1], t[3]), m23 = mid(t[2], t[3]);
      // Bey's red refinement, interior diagonal m02-m13.
      const std::array<std::array<int, 4>, 8> kids = {{{t[0], m01, m02, m03},
                                                       {m01, t[1], m12, m13},
                                                       {m02, m12, t[2], m23},
                                                       {m03, m13, m23, t[3]},
                                                       {m01, m02, m03, m13},
                                                       {m01, m02, m12, m13},
                                                       {m02, m03, m13, m23},
                                                       {m02, m12, m13, m23}}};
      for (const auto& k : kids) {
        m.cells.push_back(k);
        m.cell_region.push_back(reg);
      }
    }
  }
  for (int c = 0; c < m.n_cells(); ++c)
    if (m.cell_volume(c) < 0.0) std::swap(m.cells[c][0], m.cells[c][1]);

  // Rebuild facets; re-tag outer facets by matching the parent facet planes.
  // Parent tags are piecewise constant on flat facets, so a child facet
  // inherits the tag of the unique parent containing its centroid.
  derive_facets(m, nullptr);
  // Inherit outer D/N split: find the parent whose span contains the child.
  if (!mesh.outer_facets.empty()) {
    // map: parent facet id by matching vertices (children share at least one
    // parent vertex or midpoint of parent edge).
    std::map<std::pair<int, int>, int> parent_edge_tag; // 2D: edge->tag
    if (mesh.dim == 2) {
      for (const auto& pf : mesh.outer_facets) {
        auto key = std::minmax(pf.v[0], pf.v[1]);
        parent_edge_tag[key] = pf.tag;
      }
      for (auto& f : m.outer_facets) {
        // child (p, mid) comes from parent (p, q) with mid = midpoint(p,q)
        int tag = -1;
        for (const auto& [key, t] : parent_edge_tag) {
          const Point& A = mesh.vertices[key.first];
          const Point& B = mesh.vertices[key.second];
          const Point& P = m.vertices[f.v[0]];
          const Point& Q = m.vertices[f.v[1]];
          auto on_seg = [&](const Point& X) {
            const Eigen::Vector3d ab = B - A, ax = X - A;
            const double t2 = ab.squaredNorm();
            const double s = ax.dot(ab) / t2;
            return (ax - s * ab).norm() < 1e-10 && s > -1e-10 && s < 1 + 1e-10;
          };
          if (on_seg(P) && on_seg(Q)) {
            tag = t;
            break;
          }
        }
        if (tag >= 0) f.tag = tag;
      }
    } else {
      for (auto& f : m.outer_facets) {
        Point fc = (m.vertices[f.v[0]] + m.vertices[f.v[1]] + m.vertices[f.v[2]]) / 3.0;
        for (const auto& pf : mesh.outer_facets) {
          const Point& A = mesh.vertices[pf.v[0]];
          const Point& B = mesh.vertices[pf.v[1]];
          const Point& C = mesh.vertices[pf.v[2]];
          // barycentric containment in the parent triangle plane
          Eigen::Vector3d n = (B - A).cross(C - A);
          const double area2 = n.norm();
          if (std::abs(n.dot(fc - A)) > 1e-9 * area2) continue;
          Eigen::Vector3d w(((B - fc).cross(C - fc)).dot(n) / (area2 * area2),
                            ((C - fc).cross(A - fc)).dot(n) / (area2 * area2),
                            ((A - fc).cross(B - fc)).dot(n) / (area2 * area2));
          if (w.minCoeff() > -1e-9) {
            f.tag = pf.tag;
            break;
          }
        }
      }
    }
  }
  return m;
}

Eigen::Vector3d interface_normal(const CompositeMesh& mesh, int facet_index) {
  if (facet_index < 0 ||
      facet_index >= static_cast<int>(mesh.interface_facets.size()))
    throw Error("interface_normal: not an interface facet");
  return mesh.interface_facets[facet_index].normal;
}

double region_measure(const CompositeMesh& mesh, int region) {
  double v = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c)
    if (mesh.cell_region[c] == region) v += mesh.cell_volume(c);
  return v;
}

double interface_measure(const CompositeMesh& mesh) {
  double s = 0.0;
  for (const auto& f : mesh.interface_facets) s += f.measure;
  return s;
}

std::vector<int> collar_cells(const CompositeMesh& mesh) {
  std::vector<char> on_outer(mesh.n_vertices(), 0);
  for (const auto& f : mesh.outer_facets)
    for (int k = 0; k < mesh.dim; ++k) on_outer[f.v[k]] = 1;
  std::vector<int> cells;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    if (mesh.cell_region[c] != REGION_OUTER) continue;
    for (int k = 0; k <= mesh.dim; ++k)
      if (on_outer[mesh.cells[c][k]]) {
        cells.push_back(c);
        break;
      }
  }
  return cells;
}

std::vector<int> interface_collar_cells(const CompositeMesh& mesh, double width) {
  std::vector<int> cells;
  const double a = mesh.inner_halfwidth;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    bool in = true;
    for (int k = 0; k <= mesh.dim; ++k) {
      const Point& v = mesh.vertices[mesh.cells[c][k]];
      double rho = std::max(std::abs(v.x()), std::abs(v.y()));
      if (mesh.dim == 3) rho = std::max(rho, std::abs(v.z()));
      // warped vertices keep their 2-norm equal to the lattice max-norm once
      // fully morphed; use the max of both so the collar is shape-agnostic
      rho = std::max(rho, v.norm());
      if (rho > a + width + 1e-12) in = false;
    }
    if (in) cells.push_back(c);
  }
  return cells;
}

Eigen::Vector3d RigidMotionBasis::value(int j, const Point& x) const {
  if (dim == 2) {
    switch (j) {
      case 0: return {1, 0, 0};
      case 1: return {0, 1, 0};
      case 2: return {-x.y(), x.x(), 0};
    }
  } else {
    switch (j) {
      case 0: return {1, 0, 0};
      case 1: return {0, 1, 0};
      case 2: return {0, 0, 1};
      case 3: return {-x.y(), x.x(), 0};
      case 4: return {-x.z(), 0, x.x()};
      case 5: return {0, -x.z(), x.y()};
    }
  }
  throw Error("RigidMotionBasis: index out of range");
}

RigidMotionBasis rigid_motion_basis(int dim) {
  if (dim != 2 && dim != 3) throw Error("rigid_motion_basis: dim must be 2 or 3");
  return RigidMotionBasis{dim};
}

void write_amesh(const CompositeMesh& m, std::ostream& os) {
  os << "amesh 1\n";
  os << m.n_vertices() << ' ' << m.n_cells() << ' ' << m.interface_facets.size()
     << ' ' << m.outer_facets.size() << '\n';
  os << std::setprecision(17);
  for (const auto& v : m.vertices) {
    os << v.x() << ' ' << v.y();
    if (m.dim == 3) os << ' ' << v.z();
    os << '\n';
  }
  for (int c = 0; c < m.n_cells(); ++c) {
    for (int k = 0; k <= m.dim; ++k) os << m.cells[c][k] << ' ';
    os << m.cell_region[c] << '\n';
  }
  for (const auto& f : m.interface_facets) {
    for (int k = 0; k < m.dim; ++k) os << f.v[k] << ' ';
    os << f.tag << '\n';
  }
  for (const auto& f : m.outer_facets) {
    for (int k = 0; k < m.dim; ++k) os << f.v[k] << ' ';
    os << f.tag << '\n';
  }
}

CompositeMesh read_amesh(std::istream& is) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "amesh" || version != 1) throw Error("read_amesh: bad header");
  int nv, nc, nfi, nfo;
  is >> nv >> nc >> nfi >> nfo;
  if (!is) throw Error("read_amesh: bad counts");
  std::string rest;
  std::getline(is, rest);
  // Infer dim from the first vertex line token count.
  std::string line;
  std::getline(is, line);
  std::istringstream first(line);
  std::vector<double> c0;
  double t;
  while (first >> t) c0.push_back(t);
  if (c0.size() != 2 && c0.size() != 3) throw Error("read_amesh: bad vertex line");
  CompositeMesh m;
  m.dim = static_cast<int>(c0.size());
  m.vertices.push_back(Point(c0[0], c0[1], m.dim == 3 ? c0[2] : 0.0));
  for (int i = 1; i < nv; ++i) {
    double x, y, z = 0.0;
    is >> x >> y;
    if (m.dim == 3) is >> z;
    m.vertices.push_back(Point(x, y, z));
  }
  for (int c = 0; c < nc; ++c) {
    std::array<int, 4> cell{-1, -1, -1, -1};
    for (int k = 0; k <= m.dim; ++k) is >> cell[k];
    int reg;
    is >> reg;
    m.cells.push_back(cell);
    m.cell_region.push_back(reg);
  }
  std::map<FaceKey, int> file_tags;
  auto read_facets = [&](int n) {
    for (int i = 0; i < n; ++i) {
      std::array<int, 3> fv{-1, -1, -1};
      int tag;
      for (int k = 0; k < m.dim; ++k) is >> fv[k];
      is >> tag;
      file_tags[make_face_key(m.dim, fv)] = tag;
    }
  };
  read_facets(nfi);
  read_facets(nfo);
  if (!is) throw Error("read_amesh: truncated file");
  // Restore orientation and adjacency from cell regions, then the file tags.
  derive_facets(m, nullptr);
  for (auto& f : m.outer_facets) {
    auto it = file_tags.find(make_face_key(m.dim, f.v));
    if (it != file_tags.end()) f.tag = it->second;
  }
  return m;
}

} // namespace astokes
