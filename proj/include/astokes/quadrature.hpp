#ifndef ASTOKES_QUADRATURE_HPP
#define ASTOKES_QUADRATURE_HPP

#include <vector>

#include <Eigen/Dense>

namespace astokes {

/// Quadrature rule on the reference simplex (unit triangle / tetrahedron),
/// points in barycentric-last-dropped coordinates, weights summing to the
/// reference measure (1/2 in 2D, 1/6 in 3D).
struct QuadRule {
  int dim = 2;
  int degree = 0;
  Eigen::MatrixXd points;  // nq x dim
  Eigen::VectorXd weights; // nq
  int size() const { return static_cast<int>(weights.size()); }
};

/// Grundmann-Moller rule of odd degree 2s+1 on the dim-simplex. Exact for
/// polynomials of total degree <= 2s+1. Weights of mixed sign for s >= 1,
/// which is harmless for the polynomial integrands assembled here.
QuadRule simplex_rule(int dim, int degree);

/// Fixed rule degrees used across assembly so reruns are bit-identical.
inline int assembly_degree() { return 5; }   // stiffness/mass/divergence
inline int convection_degree() { return 5; } // (w . grad u) . v, all P2
inline int quartic_degree() { return 9; }    // |u|^4 terms

} // namespace astokes

#endif
