#pragma once
// Nearest-neighbor stencil operators on spinor fields and the low-level
// apply/BLAS-1 kernels that power them.
//
// Every first-order lattice operator in this project has the same shape:
// a pointwise 4x4 block ("zeroth") plus one structured 4x4 block per
// oriented lattice link ("hop").  All hop blocks arising here lie in the
// span of the identity and the four frame Clifford matrices, so a hop is
// stored as three complex numbers (s, p, q) acting as
//
//   y0 += s*x0 -      q*x1 +      p*x2
//   y1 += conj(q)*x0 + s*x1 +           p*x3
//   y2 += -conj(p)*x0 +      s*x2 + q*x3
//   y3 +=      -conj(p)*x1 - conj(q)*x2 + s*x3
//
// i.e. s*I + M(p,q) where M(p,q) is the Clifford matrix of the covector
// with components (Re p, -Im p, Re q, -Im q) in the orthonormal coframe.
//
// Two interchangeable backends implement the kernels: a portable scalar
// reference and an AVX2+FMA version compiled in a separate translation
// unit.  The AVX2 path is chosen at runtime when the CPU supports it;
// setting the environment variable HERMSURF_FORCE_SCALAR (to any value)
// forces the scalar path.  The backends agree to rounding accuracy (FMA
// contraction reorders roundoff), and both preserve exact sign
// cancellations, so structural identities that hold by cancellation hold
// bitwise on either backend.

#include <array>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "hermsurf/grid.hpp"

namespace hs {

// One oriented-link block: s*I + M(p,q) as described above.
struct Hop {
  cdouble s{0.0, 0.0};
  cdouble p{0.0, 0.0};
  cdouble q{0.0, 0.0};
};

// Sparse operator: for each site, a dense 4x4 zeroth-order block and one
// Hop per oriented link.  Layouts:
//   hops[8*site + 2*axis + dir]   dir 0 = +axis neighbor, dir 1 = -axis
//   zeroth[16*site + 4*col + row] (column-major 4x4 per site)
struct StencilOp {
  Grid4 grid;
  std::vector<Hop> hops;
  std::vector<cdouble> zeroth;

  static StencilOp zero(const Grid4& g);
  std::size_t dim() const { return 4 * grid.volume; }
};

// y = A x.  x and y must be distinct buffers of length A.dim().
void stencil_apply(const StencilOp& a, const cdouble* x, cdouble* y);
void stencil_apply(const StencilOp& a, const SpinorField& x, SpinorField& y);

// Formal adjoint of a stencil operator in the plain lattice inner product:
// zeroth blocks are conjugate-transposed in place, and the block on the
// link (x -> y) becomes the conjugate transpose of the block on (y -> x).
StencilOp adjoint_op(const StencilOp& a);

// BLAS-1 style helpers on interleaved complex arrays (dispatched too).
void cxaxpy(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y);
cdouble cxdotc(std::size_t n, const cdouble* x, const cdouble* y);  // sum conj(x)*y
double cxnrm2sq(std::size_t n, const cdouble* x);                   // sum |x|^2

// Name of the backend the dispatcher selected ("avx2" or "scalar").
std::string active_kernel_backend();

namespace detail {
// Raw backend entry points, exposed for equivalence tests.
void stencil_apply_scalar(const StencilOp& a, const cdouble* x, cdouble* y);
void cxaxpy_scalar(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y);
cdouble cxdotc_scalar(std::size_t n, const cdouble* x, const cdouble* y);
double cxnrm2sq_scalar(std::size_t n, const cdouble* x);
#ifdef HERMSURF_HAVE_AVX2_TU
void stencil_apply_avx2(const StencilOp& a, const cdouble* x, cdouble* y);
void cxaxpy_avx2(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y);
cdouble cxdotc_avx2(std::size_t n, const cdouble* x, const cdouble* y);
double cxnrm2sq_avx2(std::size_t n, const cdouble* x);
#endif
bool avx2_compiled_in();
}  // namespace detail

}  // namespace hs
