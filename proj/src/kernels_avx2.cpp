// AVX2+FMA kernels.  This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime cpuid check (see kernels.cpp).
//
// Complex numbers are interleaved (re, im); one __m256d holds two complex
// values.  Products use the movedup/permute/fmaddsub idiom:
//   (ar + i ai)(br + i bi) = (ar*br - ai*bi) + i(ar*bi + ai*br).

#ifdef HERMSURF_HAVE_AVX2_TU

#include <immintrin.h>

#include "hermsurf/kernels.hpp"

namespace hs {
namespace detail {

namespace {

// Two independent complex products: a[k] * b[k] for k = 0, 1.
inline __m256d cmul(__m256d a, __m256d b) {
  __m256d ar = _mm256_movedup_pd(a);      // (a0.re, a0.re, a1.re, a1.re)
  __m256d ai = _mm256_permute_pd(a, 0xF); // (a0.im, a0.im, a1.im, a1.im)
  __m256d bs = _mm256_permute_pd(b, 0x5); // (b0.im, b0.re, b1.im, b1.re)
  return _mm256_fmaddsub_pd(ar, b, _mm256_mul_pd(ai, bs));
}

// Two independent conjugated products: conj(a[k]) * b[k].
inline __m256d cmulc(__m256d a, __m256d b) {
  __m256d ar = _mm256_movedup_pd(a);
  __m256d ai = _mm256_permute_pd(a, 0xF);
  __m256d bs = _mm256_permute_pd(b, 0x5);
  return _mm256_fmsubadd_pd(ar, b, _mm256_mul_pd(ai, bs));
}

// Broadcast one complex value into both lanes.
inline __m256d bcast(const cdouble& c) {
  return _mm256_broadcast_pd(reinterpret_cast<const __m128d*>(&c));
}

// Swap the two complex lanes: (c0, c1) -> (c1, c0).
inline __m256d swap_lanes(__m256d a) { return _mm256_permute2f128_pd(a, a, 0x01); }

}  // namespace

void stencil_apply_avx2(const StencilOp& a, const cdouble* x, cdouble* y) {
  const Grid4& g = a.grid;
  const std::size_t v = g.volume;
  const double* xd = reinterpret_cast<const double*>(x);
  double* yd = reinterpret_cast<double*>(y);

  // Zeroth blocks, column-major: y(0:1) and y(2:3) accumulate
  // column(c) * x_c with x_c broadcast.
  for (std::size_t site = 0; site < v; ++site) {
    const cdouble* z = &a.zeroth[16 * site];
    const double* zd = reinterpret_cast<const double*>(z);
    const double* xs = xd + 8 * site;
    __m256d y01 = _mm256_setzero_pd();
    __m256d y23 = _mm256_setzero_pd();
    for (int c = 0; c < 4; ++c) {
      __m256d xc = _mm256_broadcast_pd(reinterpret_cast<const __m128d*>(xs + 2 * c));
      __m256d col01 = _mm256_loadu_pd(zd + 8 * c);
      __m256d col23 = _mm256_loadu_pd(zd + 8 * c + 4);
      y01 = _mm256_add_pd(y01, cmul(xc, col01));
      y23 = _mm256_add_pd(y23, cmul(xc, col23));
    }
    _mm256_storeu_pd(yd + 8 * site, y01);
    _mm256_storeu_pd(yd + 8 * site + 4, y23);
  }

  // Hops.  With n01 = (x0, x1), n23 = (x2, x3) at the neighbor site:
  //   y01 += s*(x0, x1) + p*(x2, x3) + (-q*x1, conj(q)*x0)
  //   y23 += s*(x2, x3) - conj(p)*(x0, x1) + (q*x3, -conj(q)*x2)
  for (int axis = 0; axis < 4; ++axis) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::vector<std::uint32_t>& nb = g.nbr(axis, dir);
      const std::size_t slot = static_cast<std::size_t>(2 * axis + dir);
      for (std::size_t site = 0; site < v; ++site) {
        const Hop& hp = a.hops[8 * site + slot];
        const double* xn = xd + 8 * static_cast<std::size_t>(nb[site]);
        __m256d n01 = _mm256_loadu_pd(xn);
        __m256d n23 = _mm256_loadu_pd(xn + 4);
        __m256d sw01 = swap_lanes(n01);  // (x1, x0)
        __m256d sw23 = swap_lanes(n23);  // (x3, x2)

        const cdouble qc = std::conj(hp.q);
        const cdouble pc = std::conj(hp.p);
        __m256d S = bcast(hp.s);
        __m256d P = bcast(hp.p);
        __m256d Pm = bcast(cdouble{-pc.real(), -pc.imag()});
        __m256d Qm = _mm256_set_pd(qc.imag(), qc.real(), -hp.q.imag(), -hp.q.real());
        __m256d Qs = _mm256_set_pd(-qc.imag(), -qc.real(), hp.q.imag(), hp.q.real());

        __m256d y01 = _mm256_loadu_pd(yd + 8 * site);
        __m256d y23 = _mm256_loadu_pd(yd + 8 * site + 4);
        y01 = _mm256_add_pd(y01, cmul(S, n01));
        y01 = _mm256_add_pd(y01, cmul(P, n23));
        y01 = _mm256_add_pd(y01, cmul(Qm, sw01));
        y23 = _mm256_add_pd(y23, cmul(S, n23));
        y23 = _mm256_add_pd(y23, cmul(Pm, n01));
        y23 = _mm256_add_pd(y23, cmul(Qs, sw23));
        _mm256_storeu_pd(yd + 8 * site, y01);
        _mm256_storeu_pd(yd + 8 * site + 4, y23);
      }
    }
  }
}

void cxaxpy_avx2(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y) {
  const double* xd = reinterpret_cast<const double*>(x);
  double* yd = reinterpret_cast<double*>(y);
  __m256d A = bcast(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    __m256d yv = _mm256_loadu_pd(yd + 2 * i);
    _mm256_storeu_pd(yd + 2 * i, _mm256_add_pd(yv, cmul(A, xv)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

cdouble cxdotc_avx2(std::size_t n, const cdouble* x, const cdouble* y) {
  const double* xd = reinterpret_cast<const double*>(x);
  const double* yd = reinterpret_cast<const double*>(y);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    __m256d yv = _mm256_loadu_pd(yd + 2 * i);
    acc = _mm256_add_pd(acc, cmulc(xv, yv));
  }
  alignas(32) double buf[4];
  _mm256_store_pd(buf, acc);
  cdouble out{buf[0] + buf[2], buf[1] + buf[3]};
  for (; i < n; ++i) out += std::conj(x[i]) * y[i];
  return out;
}

double cxnrm2sq_avx2(std::size_t n, const cdouble* x) {
  const double* xd = reinterpret_cast<const double*>(x);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    acc = _mm256_fmadd_pd(xv, xv, acc);
  }
  alignas(32) double buf[4];
  _mm256_store_pd(buf, acc);
  double out = buf[0] + buf[1] + buf[2] + buf[3];
  for (; i < n; ++i) out += std::norm(x[i]);
  return out;
}

}  // namespace detail
}  // namespace hs

#endif  // HERMSURF_HAVE_AVX2_TU
