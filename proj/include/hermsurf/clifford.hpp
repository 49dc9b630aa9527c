#pragma once
// Frozen spinor-space model for a 4-dimensional Hermitian structure.
//
// Spinor space splits as S = S0 (+) S1 (+) S2 with complex dims 1,2,1 in the
// fixed component order (S0, S1, S1, S2).  The four generators act with
// X.X = -|X|^2, the almost-complex structure rotates frame legs pairwise
// (J e1 = e2, J e3 = e4), and the Kaehler-form action omega_k has eigenvalue
// (2 - 2r) i on S_r.  All tables are Gaussian-rational and every algebraic
// identity asserted about them holds with zero residual in exact arithmetic.

#include <array>

#include "hermsurf/rat.hpp"

namespace hs {

// J-pattern on frame indices: J e_i = j_sign[i] * e_{j_index[i]} (0-based).
inline constexpr int j_index[4] = {1, 0, 3, 2};
inline constexpr int j_sign[4] = {+1, -1, +1, -1};

struct CliffordRep {
  std::array<QMat4, 4> gamma;  // generators, anti-Hermitian, gamma_i^2 = -1
  QMat4 omega_k;               // Kaehler-form action, diag(2i, 0, 0, -2i)
  QMat4 volume;                // gamma1..gamma4, diag(-1, 1, 1, -1)
  QMat4 jmat;                  // real structure matrix C; j = C o complex-conjugation
};

// The frozen representation tables (built once, exact).
const CliffordRep& clifford();

// Sigma_r projector (r = 0, 1, 2) as an exact matrix.
QMat4 sigma_projector(int r);

// Component pattern shared by J on vectors and by J on 1-forms with the
// convention (J alpha)(X) = -alpha(J X):  (J v) = (-v1, v0, -v3, v2).
QVec4 j_apply(const QVec4& v);

// Clifford action of a (possibly complex) coefficient vector: sum_i v_i gamma_i.
QMat4 gamma_of(const QVec4& v);

// gamma(p(X)) = 1/2 (gamma(X) - i gamma(JX)) and gamma(pbar(X)) with +i.
QMat4 p_gamma(const QVec4& x);
QMat4 pbar_gamma(const QVec4& x);

// Canonical torsion endomorphism of the t-family connection applied to frame
// direction i, for Lee-form frame components theta (exact inputs):
//   T^t(e_i) = 1/8 [ (t+1) gamma(e_i) gamma(theta)
//                  + (t-1) gamma(J e_i) gamma(J theta)
//                  + 2 t theta_i Id + 2 t theta(J e_i) omega_k ].
QMat4 torsion_endo(const BigQ& t, const QVec4& theta, int i);

// Zeroth-order correction turning the Levi-Civita Dirac operator into the
// t-family one:  -(3t/4) gamma(theta) - ((2t-1)/4) gamma(J theta) omega_k.
QMat4 dirac_t_correction(const BigQ& t, const QVec4& theta);

// Zeroth-order correction turning the Levi-Civita Dirac operator into the
// Dolbeault-type operator:  +(1/4) gamma(theta) + (1/4) gamma(J theta) omega_k.
QMat4 dolbeault_correction(const QVec4& theta);

// Levi-Civita spin-connection endomorphism for frame direction i from
// frame-connection coefficients om[i][j][k] = g(nabla_{e_i} e_j, e_k):
//   W_i = 1/4 sum_{jk} om[i][j][k] gamma_j gamma_k.
using FrameConn = std::array<std::array<std::array<BigQ, 4>, 4>, 4>;
QMat4 spin_zeroth(const FrameConn& om, int i);

// Elements of T* (x) S are stored as 4 spinors tau[i] (coframe components).
using CotanSpinor = std::array<QVec4, 4>;

// Clifford contraction mu(sum e^i (x) tau_i) = sum gamma_i tau_i.
QVec4 clifford_trace(const CotanSpinor& tau);

// Twistor-summand projector on T* (x) S_r:
//   pi_r(alpha (x) psi) = alpha (x) psi
//     + 1/(2(r+1))   sum_i e^i (x) gamma(pbar(e_i)) gamma(p(alpha)) psi
//     + 1/(6 - 2r)   sum_i e^i (x) gamma(p(e_i)) gamma(pbar(alpha)) psi.
CotanSpinor twistor_project_rank1(int r, const QVec4& alpha, const QVec4& psi);
CotanSpinor twistor_project(int r, const CotanSpinor& tau);

}  // namespace hs
