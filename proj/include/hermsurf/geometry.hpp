#pragma once
// Differential geometry of a J-compatible metric on the periodic chart:
// orthonormal J-adapted frame, Christoffel symbols, curvature scalars
// (s, s*, k), the Lee form theta with its derivatives, the Kaehler form,
// and the frame connection coefficients feeding the spinor operators.
//
// Conventions (pinned by the embedded reference values and by the identity
// s - s* = 2*delta(theta) + |theta|^2):
//   J e1 = e2, J e3 = e4 (constant standard complex structure);
//   Omega(X, Y) = g(X, JY);
//   R(X,Y,Z,W) = g([nabla_X, nabla_Y]Z - nabla_{[X,Y]}Z, W);
//   s = sum_{ij} R(e_i, e_j, e_j, e_i);
//   s* = sum_{ij} R(e_i, e_j, J e_j, J e_i);
//   rho*(X, Y) = sum_i R(e_i, X, JY, J e_i);
//   k = (3 s* - s) / 2;
//   delta(alpha) = -sum_i (nabla_{e_i} alpha)(e_i, ...);
//   theta = delta(Omega) o J   (so a conformal factor e^f shifts theta by df).
//
// Two derivative modes: lattice central differences of the pointwise tables
// (default), or analytic forward-mode jets of the metric entries.  delta_theta
// and d(theta) always use central differences of the theta table, since they
// involve one more derivative of the metric than the jets carry.

#include <array>
#include <cstddef>
#include <vector>

#include "hermsurf/grid.hpp"
#include "hermsurf/metric.hpp"

namespace hs {

// Constant complex structure as a matrix: (J v)^mu = J[mu][nu] v^nu.
extern const int kJmat[4][4];

// Index of the unordered pair (j,k), j<k, in the fixed order
// (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
int pair6(int j, int k);

struct GeometryTables {
  Grid4 grid;
  bool analytic = false;

  // Per-site arrays; layouts noted per field (s = site index).
  std::vector<double> g;            // 16V  g[16s + 4mu + nu]
  std::vector<double> ginv;         // 16V
  std::vector<double> dg;           // 64V  dg[64s + 16rho + 4mu + nu] = d_rho g_{mu nu}
  std::vector<double> gamma;        // 64V  gamma[64s + 16l + 4mu + nu] = Gamma^l_{mu nu}
  std::vector<double> frame;        // 16V  frame[16s + 4i + mu] = e_i^mu
  std::vector<double> coframe;      // 16V  e^i_mu = g_{mu nu} e_i^nu
  std::vector<double> omega_form;   // 16V  Omega_{mu nu}
  std::vector<double> rho;          // V    sqrt(det g)
  std::vector<double> omega_conn;   // 24V  omega_{ijk} = g(nabla_{e_i} e_j, e_k),
                                    //      antisymmetrized in (j,k): [24s + 6i + pair6(j,k)]
  std::vector<double> theta_coord;  // 4V   theta_mu
  std::vector<double> theta_frame;  // 4V   theta(e_i)
  std::vector<double> theta_norm2;  // V    |theta|^2
  std::vector<double> s;            // V
  std::vector<double> s_star;       // V
  std::vector<double> k;            // V
  std::vector<double> ricci_star;   // 16V  rho*(e_i, e_j)
  std::vector<double> delta_theta;  // V
  std::vector<double> dtheta;       // 6V   (d theta)_{mu nu}, mu<nu, pair6 order
  std::vector<double> eq3_residual;    // V  s - s* - 2 delta(theta) - |theta|^2
  std::vector<double> domega_residual; // V  max |dOmega - theta ^ Omega| at the site
  std::vector<double> full_curv;    // 256V R(e_i,e_j,e_k,e_l), only if requested

  double max_omega_sym_defect = 0.0;  // pre-antisymmetrization defect of omega_{ijk}
  double max_frame_orthonormality = 0.0;  // max |g(e_i,e_j) - delta_ij|
};

// Builds all tables.  Derivative mode follows spec.analytic.  Throws
// InputError if the metric fails positivity anywhere on the grid.
GeometryTables compute_tables(const Grid4& grid, const MetricSpec& spec,
                              bool keep_curvature = false);

// Exact pointwise geometry at an arbitrary point (analytic jets; no lattice).
struct PointGeometry {
  std::array<double, 16> g, ginv, frame, coframe, omega_form, ricci_star;
  std::array<double, 64> gamma;  // gamma[16l + 4mu + nu]
  std::array<double, 4> theta_coord, theta_frame;
  double rho, s, s_star, k, theta_norm2, domega_residual;
};
PointGeometry geometry_at_point(const MetricSpec& spec, const std::array<double, 4>& x,
                                const std::array<double, 4>& periods);

// delta(theta) at a point by central differences (step fd_step) of the
// pointwise theta, with exact Gamma/ginv/theta at the center.
double delta_theta_at_point(const MetricSpec& spec, const std::array<double, 4>& x,
                            const std::array<double, 4>& periods, double fd_step);

// Residuals of the one-parameter family of Hermitian connections: the
// t-connection is Levi-Civita plus the torsion built from theta.  Returns
// max |nabla^t g|, max |nabla^t J|, max |nabla^t Omega| over the grid.
struct ConnectionResiduals {
  double grad_g = 0.0;
  double grad_J = 0.0;
  double grad_Omega = 0.0;
};
ConnectionResiduals hermitian_connection_residuals(const GeometryTables& t, double tpar);

// Torsion of the t-connection at one site as A^l_{mu nu} (row-major 4x4x4,
// [16l + 4mu + nu]); Gamma^t = Gamma + A.
std::array<double, 64> hermitian_torsion_site(const GeometryTables& t, std::size_t site,
                                              double tpar);

// Max over sites of |R(e_i,e_j,e_k,e_l) - R(e_k,e_l,e_i,e_j)| (requires
// tables built with keep_curvature).
double curvature_pair_symmetry_defect(const GeometryTables& t);

// The per-site `domega_residual` is an exact discrete identity: in real
// dimension four, dOmega = theta ^ Omega follows by pointwise linear algebra
// from ANY symmetric first-derivative data dg, and the same dg feeds both
// sides, so the residual sits at rounding level in either derivative mode and
// says nothing about truncation error.  This helper measures the honest
// discretization error instead: it re-derives theta analytically at each site
// and returns max |dOmega_from_tables - theta_exact ^ Omega| over the grid.
// Meaningful for tables built with spec.analytic == false.
double domega_residual_vs_exact(const GeometryTables& t, const MetricSpec& spec);

}  // namespace hs
