#ifndef ASTOKES_MESH_HPP
#define ASTOKES_MESH_HPP

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "astokes/tensor.hpp" // Point, Error

namespace astokes {

enum class InnerShape { Square, Disk }; // Disk means cube->ball in 3D terms too
enum class OuterShape { Box, Disk };

enum Region { REGION_INNER = 0, REGION_OUTER = 1 };
enum FacetTag { FACET_INTERFACE = 0, FACET_OUTER_D = 1, FACET_OUTER_N = 2 };

struct Facet {
  std::array<int, 3> v{-1, -1, -1}; // dim vertices used
  int tag = FACET_INTERFACE;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero(); // unit, inner->outer / outward
  double measure = 0.0;
  int cell_in = -1;  // adjacent cell on the inner side (interface) or the cell (outer)
  int cell_out = -1; // adjacent cell on the outer side (interface only)
};

/// Conforming simplicial mesh of the truncated composite domain
/// Omega^0 = Omega_+ cup dOmega cup Omega_-^0. Immutable after build;
/// refine() returns a new mesh.
struct CompositeMesh {
  int dim = 2;
  std::vector<Point> vertices;
  std::vector<std::array<int, 4>> cells; // dim+1 vertices used
  std::vector<int> cell_region;          // REGION_INNER / REGION_OUTER
  std::vector<Facet> interface_facets;
  std::vector<Facet> outer_facets;
  double truncation_radius = 0.0;
  double h_interface = 0.0;
  InnerShape inner_shape = InnerShape::Square;
  OuterShape outer_shape = OuterShape::Box;
  double inner_halfwidth = 0.5;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
  double cell_volume(int c) const;
  Point cell_centroid(int c) const;
  /// Jacobian columns (edge vectors from vertex 0) of cell c.
  Eigen::Matrix3d cell_jacobian(int c) const;
};

struct BuildOptions {
  int dim = 2;
  InnerShape inner_shape = InnerShape::Square;
  OuterShape outer_shape = OuterShape::Disk;
  double inner_halfwidth = 0.5; // half side of the square/cube, or disk radius
  double R = 4.0;               // truncation radius
  double h = 0.25;              // target size at the interface
  double growth = 2.0;          // radial grading factor
  /// Optional Dirichlet/Neumann split of the outer boundary: returns true for
  /// facets tagged Dirichlet. Default: everything Dirichlet.
  std::function<bool(const Point& facet_centroid)> dirichlet_selector;
};

CompositeMesh build_composite(const BuildOptions& opt);

/// Uniform red refinement; preserves tags, flat-facet normals and all vertex
/// positions (nested vertex set, no reprojection of warped boundaries).
CompositeMesh refine(const CompositeMesh& mesh);

/// Unit normal of an interface facet, pointing from Omega_+ into Omega_-.
Eigen::Vector3d interface_normal(const CompositeMesh& mesh, int facet_index);

double region_measure(const CompositeMesh& mesh, int region);
double interface_measure(const CompositeMesh& mesh);

/// Outer-region cells touching the outer boundary (the gauge collar).
std::vector<int> collar_cells(const CompositeMesh& mesh);

/// Cells within max-norm lattice distance `width` of the inner shape; with
/// square/cube inner shapes these coincide across truncation radii.
std::vector<int> interface_collar_cells(const CompositeMesh& mesh, double width);

/// Rigid body motion fields r = b + Bx with skew B; n(n+1)/2 fields.
struct RigidMotionBasis {
  int dim = 2;
  /// value of field j at x
  Eigen::Vector3d value(int j, const Point& x) const;
  int size() const { return dim * (dim + 1) / 2; }
};

RigidMotionBasis rigid_motion_basis(int dim);

/// ASCII "amesh 1" format: header, counts (nv nc nf_interface nf_outer),
/// vertices, cells (vertices + region tag), facets (vertices + tag).
void write_amesh(const CompositeMesh& mesh, std::ostream& os);
CompositeMesh read_amesh(std::istream& is);

} // namespace astokes

#endif
