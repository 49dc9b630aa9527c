#pragma once
// First-order lattice operators on spinor half-densities over a metric
// 4-torus: the Riemannian Dirac operator, the one-parameter family of
// canonical-Hermitian-connection Dirac operators, the Dolbeault-type
// operator, per-direction covariant derivatives with their composed
// Laplacian, the degree-0 twistor (gradient-part) operator, and the
// identity checkers built from them.
//
// Half-density convention: every operator here is the conjugate
// rho^(1/2) A rho^(-1/2) of its geometric counterpart A, where rho is the
// Riemannian volume density.  In this gauge the continuum volume-weighted
// inner product becomes the plain lattice product, so discrete
// self-adjointness can hold exactly rather than approximately.
//
// Shared-stencil discipline: all members of the Dirac family ride on one
// covariant midpoint hop table (link-averaged frame components over 2h)
// and one geometric zeroth-order block (spin connection contracted into
// the Clifford algebra plus the half-density divergence compensation).
// They differ only in a pointwise Lee-form correction
//     Z_theta(x) = sum_j theta_j(x) K_j,
// where the four constant 4x4 coefficient matrices K_j are computed in
// exact rational arithmetic and rounded once.  Operator relations between
// family members are therefore exact statements about the K_j, checkable
// with zero residual, rather than floating-point coincidences.

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hermsurf/geometry.hpp"
#include "hermsurf/grid.hpp"
#include "hermsurf/kernels.hpp"
#include "hermsurf/rat.hpp"

namespace hs {

// ---------------------------------------------------------------------------
// Dirac family
// ---------------------------------------------------------------------------

// Two independent derivations of the Lee-form correction of the t-family
// Dirac operator:
//   ContractedFrame: Clifford-contract the per-direction torsion
//     endomorphisms of the canonical connection (mu o nabla^t route).
//   GlobalCorrection: the closed-form zeroth-order correction
//     -(3t/4) gamma(theta) - ((2t-1)/4) gamma(J theta) omega.
// Both are evaluated in exact rational arithmetic; they agree exactly, so
// the two built operators are bitwise identical.
enum class TorsionRoute { ContractedFrame, GlobalCorrection };

// A Dirac-family operator: the fused, apply-ready stencil plus the two
// zeroth-order components it was fused from (certification payload) and
// the rounded Lee-form coefficient matrices.
struct DiracOp {
  StencilOp op;                      // what you apply
  std::vector<cdouble> zeroth_base;  // geometric zeroth (shared bitwise across the family)
  std::vector<cdouble> zeroth_lee;   // Lee-form part sum_j theta_j(x) K_j
  std::array<std::array<cdouble, 16>, 4> kmat{};  // K_j, row-major
  bool hermitian_storage = false;  // fused zeroth stored exactly Hermitian
  std::string label;
};

// Riemannian (Levi-Civita) Dirac operator; exact-Hermitian storage.
DiracOp build_dirac(const GeometryTables& tab);

// Dolbeault-type operator: Dirac plus quarter Lee-form corrections;
// exact-Hermitian storage.
DiracOp build_dolbeault(const GeometryTables& tab);

// t-family Dirac operator (not self-adjoint for t != -1; stored unfused
// with no Hermitian symmetrization so the two routes stay bitwise equal).
DiracOp build_dirac_t(const GeometryTables& tab, double t, TorsionRoute route);

// Exact Lee-form coefficient matrices K_j (coefficient of theta_j in the
// zeroth-order correction) for the Dolbeault operator and for the t-family
// operator under each derivation route.
std::array<QMat4, 4> lee_coeff_dolbeault();
std::array<QMat4, 4> lee_coeff_dirac_t(const BigQ& t, TorsionRoute route);

// ---------------------------------------------------------------------------
// Covariant derivatives and the connection Laplacian
// ---------------------------------------------------------------------------

// Per-direction covariant derivative nabla^t_{e_i} on spinor half-densities
// (scalar link-averaged hops; zeroth = spin connection + torsion
// endomorphism + half-density divergence compensation).
StencilOp build_covariant_derivative(const GeometryTables& tab, double t, int i);

// Composed spinor Laplacian sum_i (nabla^t_i)^dagger nabla^t_i.  The
// adjoint factors are exact conjugate transposes of the stored gradient
// stencils, so the induced matrix is Hermitian positive semi-definite by
// construction.
struct ConnectionLaplacian {
  std::array<StencilOp, 4> grad;
  std::array<StencilOp, 4> grad_adj;
  std::size_t dim() const { return grad[0].dim(); }
  // y = sum_i adj_i(grad_i(x)); s1 and s2 are scratch buffers of length dim().
  void apply(const cdouble* x, cdouble* y, cdouble* s1, cdouble* s2) const;
  void apply(const SpinorField& x, SpinorField& y) const;  // allocates scratch
};
ConnectionLaplacian build_connection_laplacian(const GeometryTables& tab, double t);

// ---------------------------------------------------------------------------
// Pointwise spinor algebra
// ---------------------------------------------------------------------------

// Volume-form grading diag(-1, 1, 1, -1) (degree parity / chirality).
SpinorField volume_graded(const SpinorField& f);

// Quaternionic structure j = C o conjugation (antilinear, j^2 = -1).
SpinorField j_conjugate(const SpinorField& f);

// Keep only the Sigma_r components (r = 0: comp 0; r = 1: comps 1,2;
// r = 2: comp 3); and the largest magnitude outside Sigma_r.
SpinorField degree_project(const SpinorField& f, int r);
double degree_leak(const SpinorField& f, int r);

// Pointwise Clifford multiplication by scale * theta(x) (Lee form read
// from the tables in the orthonormal coframe).
SpinorField lee_clifford_mult(const GeometryTables& tab, const SpinorField& f, double scale);

// Band-limited random field supported in Sigma_0, unit plain-measure norm.
SpinorField random_degree0_field(const Grid4& g, std::uint64_t seed, int nmax);

// ---------------------------------------------------------------------------
// Structural certification of stored stencils
// ---------------------------------------------------------------------------

// Sup-norm defects of structural identities of the STORED tables (these
// are exact statements about the assembled stencil, all zero by
// construction; any nonzero value indicates an assembly bug):
//   hermiticity        sup |entry - mirrored conj entry| (Hermitian labels)
//   grading_structural sup |zeroth/hop entries coupling equal-parity components|
//   j_commutation      sup |C conj(block) C^-1 - block| over zeroth and hops
struct StencilCertificate {
  double hermiticity = 0.0;
  double grading_structural = 0.0;
  double j_commutation = 0.0;
};
StencilCertificate certify_dirac_family(const DiracOp& d);

// ---------------------------------------------------------------------------
// Degree-0 twistor (gradient-part) operator
// ---------------------------------------------------------------------------

// Two independent reductions of the twistor operator on degree-0 fields:
//   HolomorphicSplit: the (1,0)-part of the covariant derivative,
//     slot_i = nabla^t_{p(e_i)} psi0 with p(X) = (X - i JX)/2.
//   DiracCompletion: nabla^t psi0 + (1/2) sum_i e^i (x) p_0 e_i D^t psi0,
//     with D^t realized as the Clifford contraction of the same
//     per-direction derivatives and p_0 the degree-0 projection.
// Both reduce, on the degree-0 line bundle, to constant coefficient
// combinations of the same four covariant-derivative fields; the
// coefficients are derived per route in exact rational arithmetic and
// agree exactly, so the two outputs are bitwise identical.
enum class TwistorRoute { HolomorphicSplit, DiracCompletion };

// Coframe-slot-indexed spinor field: a[16*site + 4*slot + comp].
struct CoSpinorField {
  std::vector<cdouble> a;
  explicit CoSpinorField(const Grid4& g) : a(16 * g.volume, cdouble{0.0, 0.0}) {}
};

// Exact route-specific reduction coefficients a_{ij} (slot_i = sum_j
// a_{ij} v_j on the degree-0 line bundle, v_j the covariant derivatives).
std::array<std::array<QC, 4>, 4> twistor_reduction_coeff(TwistorRoute route);

// Apply the twistor operator to a degree-0 field.  Inputs with components
// outside Sigma_0 are rejected (InputError).
CoSpinorField twistor_p0(const GeometryTables& tab, double t, const SpinorField& psi0,
                         TwistorRoute route);

// Plain-measure norm of a coframe-slot spinor field.
double cofield_norm(const Grid4& g, const CoSpinorField& f);

// ---------------------------------------------------------------------------
// Identity checkers
// ---------------------------------------------------------------------------

// Defect of the Dolbeault Weitzenboeck identity
//   Box^2 = Delta^t + s/4 + (1/4) delta(theta) . (volume grading) - |theta|^2/8
// evaluated on psi, normalized by |psi|: returns |defect| / |psi|.  The
// identity holds (as h -> 0) only for the torsion parameter t = -1; other
// values of t serve as negative controls.  psi = 0 is rejected.
double weitzenboeck_residual(const GeometryTables& tab, const SpinorField& psi,
                             double laplacian_t = -1.0);

// Global norm identity for the degree-0 twistor operator:
//   |P^t_0 psi0|^2 = 1/2 (Box^2 psi0, psi0) - 1/4 (s psi0, psi0)
//                    - t/4 (delta(theta) psi0, psi0)
//                    + (t^2 - 2t - 3)/32 (|theta|^2 psi0, psi0)
//                    - (t+3)/4 Re(gamma(theta) Box psi0, psi0).
// residual() uses |lhs - rhs| / max(|lhs|, h^2).
struct TwistorNormIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  double h2 = 0.0;
  double residual() const;
};
TwistorNormIdentity twistor_norm_identity(const GeometryTables& tab, double t,
                                          const SpinorField& psi0);

// Pointwise norm identity |P^t_0 psi0|^2 = |nabla^t psi0|^2
// - 1/2 |D^t psi0|^2; returns the maximum pointwise defect over sites,
// normalized by the maximum of |nabla^t psi0|^2.
double twistor_pointwise_identity_residual(const GeometryTables& tab, double t,
                                           const SpinorField& psi0);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

// Deterministic sparse export: one "row col re im" line per structurally
// nonzero entry, 0-based indices, row-major site/component order, zeroth
// block first then hops in (axis, dir) order, 17 significant digits.
void export_coo(const StencilOp& op, std::ostream& os);

}  // namespace hs
