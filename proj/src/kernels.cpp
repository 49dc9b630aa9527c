// Scalar reference kernels and runtime backend dispatch.

#include "hermsurf/kernels.hpp"

#include <cstdlib>

#include "hermsurf/errors.hpp"

namespace hs {

StencilOp StencilOp::zero(const Grid4& g) {
  StencilOp op;
  op.grid = g;
  op.hops.assign(8 * g.volume, Hop{});
  op.zeroth.assign(16 * g.volume, cdouble{0.0, 0.0});
  return op;
}

namespace detail {

namespace {

// y(site) += (s*I + M(p,q)) * x4, where x4 points at the neighbor's 4 comps.
inline void hop_accum(const Hop& hp, const cdouble* x4, cdouble* y4) {
  const cdouble s = hp.s, p = hp.p, q = hp.q;
  const cdouble pc = std::conj(p), qc = std::conj(q);
  y4[0] += s * x4[0] - q * x4[1] + p * x4[2];
  y4[1] += qc * x4[0] + s * x4[1] + p * x4[3];
  y4[2] += -pc * x4[0] + s * x4[2] + q * x4[3];
  y4[3] += -pc * x4[1] - qc * x4[2] + s * x4[3];
}

}  // namespace

void stencil_apply_scalar(const StencilOp& a, const cdouble* x, cdouble* y) {
  const Grid4& g = a.grid;
  const std::size_t v = g.volume;
  for (std::size_t site = 0; site < v; ++site) {
    const cdouble* z = &a.zeroth[16 * site];
    const cdouble* xs = &x[4 * site];
    cdouble* ys = &y[4 * site];
    for (int r = 0; r < 4; ++r) {
      ys[r] = z[static_cast<std::size_t>(4 * 0 + r)] * xs[0] +
              z[static_cast<std::size_t>(4 * 1 + r)] * xs[1] +
              z[static_cast<std::size_t>(4 * 2 + r)] * xs[2] +
              z[static_cast<std::size_t>(4 * 3 + r)] * xs[3];
    }
  }
  for (int axis = 0; axis < 4; ++axis) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::vector<std::uint32_t>& nb = g.nbr(axis, dir);
      const std::size_t slot = static_cast<std::size_t>(2 * axis + dir);
      for (std::size_t site = 0; site < v; ++site) {
        hop_accum(a.hops[8 * site + slot], &x[4 * static_cast<std::size_t>(nb[site])],
                  &y[4 * site]);
      }
    }
  }
}

void cxaxpy_scalar(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

cdouble cxdotc_scalar(std::size_t n, const cdouble* x, const cdouble* y) {
  cdouble acc{0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) acc += std::conj(x[i]) * y[i];
  return acc;
}

double cxnrm2sq_scalar(std::size_t n, const cdouble* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::norm(x[i]);
  return acc;
}

bool avx2_compiled_in() {
#ifdef HERMSURF_HAVE_AVX2_TU
  return true;
#else
  return false;
#endif
}

}  // namespace detail

namespace {

struct Backend {
  void (*apply)(const StencilOp&, const cdouble*, cdouble*);
  void (*axpy)(std::size_t, cdouble, const cdouble*, cdouble*);
  cdouble (*dotc)(std::size_t, const cdouble*, const cdouble*);
  double (*nrm2sq)(std::size_t, const cdouble*);
  const char* name;
};

Backend pick_backend() {
#ifdef HERMSURF_HAVE_AVX2_TU
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") &&
      std::getenv("HERMSURF_FORCE_SCALAR") == nullptr) {
    return Backend{detail::stencil_apply_avx2, detail::cxaxpy_avx2, detail::cxdotc_avx2,
                   detail::cxnrm2sq_avx2, "avx2"};
  }
#endif
  return Backend{detail::stencil_apply_scalar, detail::cxaxpy_scalar, detail::cxdotc_scalar,
                 detail::cxnrm2sq_scalar, "scalar"};
}

const Backend& backend() {
  static const Backend b = pick_backend();
  return b;
}

}  // namespace

void stencil_apply(const StencilOp& a, const cdouble* x, cdouble* y) {
  if (x == y) throw InputError("stencil_apply requires distinct input and output buffers");
  backend().apply(a, x, y);
}

void stencil_apply(const StencilOp& a, const SpinorField& x, SpinorField& y) {
  if (x.a.size() != a.dim()) throw InputError("stencil_apply: input field size mismatch");
  if (y.a.size() != a.dim()) y.a.assign(a.dim(), cdouble{0.0, 0.0});
  stencil_apply(a, x.a.data(), y.a.data());
}

StencilOp adjoint_op(const StencilOp& a) {
  const Grid4& g = a.grid;
  StencilOp b = StencilOp::zero(g);
  for (std::size_t site = 0; site < g.volume; ++site) {
    const cdouble* z = &a.zeroth[16 * site];
    cdouble* w = &b.zeroth[16 * site];
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        w[static_cast<std::size_t>(4 * c + r)] =
            std::conj(z[static_cast<std::size_t>(4 * r + c)]);
  }
  // Block of the adjoint on the oriented link (x -> n) is the conjugate
  // transpose of a's block on (n -> x).  In (s, p, q) form the conjugate
  // transpose of s*I + M(p,q) is conj(s)*I + M(-p, -q) because M(p,q) is
  // anti-Hermitian.
  for (int axis = 0; axis < 4; ++axis) {
    for (int dir = 0; dir < 2; ++dir) {
      const std::vector<std::uint32_t>& nb = g.nbr(axis, dir);
      const std::size_t slot = static_cast<std::size_t>(2 * axis + dir);
      const std::size_t rslot = static_cast<std::size_t>(2 * axis + (1 - dir));
      for (std::size_t site = 0; site < g.volume; ++site) {
        const Hop& h = a.hops[8 * static_cast<std::size_t>(nb[site]) + rslot];
        b.hops[8 * site + slot] = Hop{std::conj(h.s), -h.p, -h.q};
      }
    }
  }
  return b;
}

void cxaxpy(std::size_t n, cdouble alpha, const cdouble* x, cdouble* y) {
  backend().axpy(n, alpha, x, y);
}

cdouble cxdotc(std::size_t n, const cdouble* x, const cdouble* y) {
  return backend().dotc(n, x, y);
}

double cxnrm2sq(std::size_t n, const cdouble* x) { return backend().nrm2sq(n, x); }

std::string active_kernel_backend() { return backend().name; }

}  // namespace hs
