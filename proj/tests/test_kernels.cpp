// Stencil-operator kernels: dense cross-validation of the storage layout,
// adjoint correctness, backend (scalar vs AVX2) equivalence, and the
// structured-hop convention against the frozen Clifford representation.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <complex>
#include <random>
#include <vector>

#include "hermsurf/clifford.hpp"
#include "hermsurf/errors.hpp"
#include "hermsurf/grid.hpp"
#include "hermsurf/kernels.hpp"

using hs::cdouble;
using hs::Grid4;
using hs::Hop;
using hs::SpinorField;
using hs::StencilOp;

namespace {

const double kTwoPi = 6.283185307179586476925286766559;

cdouble rnd_c(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double re = n(rng), im = n(rng);
  return cdouble{re, im};
}

StencilOp random_op(const Grid4& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StencilOp op = StencilOp::zero(g);
  for (auto& h : op.hops) h = Hop{rnd_c(rng), rnd_c(rng), rnd_c(rng)};
  for (auto& z : op.zeroth) z = rnd_c(rng);
  return op;
}

// The 4x4 matrix of one hop, built from the frozen Clifford representation:
// s*I + gamma(a) with a = (Re p, -Im p, Re q, -Im q).
Eigen::Matrix4cd hop_matrix(const Hop& h) {
  hs::QVec4 a;
  a[0] = hs::QC::of_double(h.p.real());
  a[1] = hs::QC::of_double(-h.p.imag());
  a[2] = hs::QC::of_double(h.q.real());
  a[3] = hs::QC::of_double(-h.q.imag());
  auto g = hs::gamma_of(a).to_complex();  // row-major
  Eigen::Matrix4cd m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = g[static_cast<std::size_t>(4 * r + c)];
  for (int d = 0; d < 4; ++d) m(d, d) += h.s;
  return m;
}

Eigen::MatrixXcd dense_of(const StencilOp& op) {
  const Grid4& g = op.grid;
  const auto n = static_cast<Eigen::Index>(op.dim());
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t s = 0; s < g.volume; ++s) {
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        d(static_cast<Eigen::Index>(4 * s + static_cast<std::size_t>(r)),
          static_cast<Eigen::Index>(4 * s + static_cast<std::size_t>(c))) +=
            op.zeroth[16 * s + static_cast<std::size_t>(4 * c + r)];
    for (int axis = 0; axis < 4; ++axis)
      for (int dir = 0; dir < 2; ++dir) {
        std::size_t nb = g.nbr(axis, dir)[s];
        Eigen::Matrix4cd m =
            hop_matrix(op.hops[8 * s + static_cast<std::size_t>(2 * axis + dir)]);
        d.block<4, 4>(static_cast<Eigen::Index>(4 * s), static_cast<Eigen::Index>(4 * nb)) += m;
      }
  }
  return d;
}

Eigen::VectorXcd to_eigen(const SpinorField& f) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(f.a.size()));
  for (std::size_t i = 0; i < f.a.size(); ++i) v(static_cast<Eigen::Index>(i)) = f.a[i];
  return v;
}

}  // namespace

TEST_CASE("stencil apply matches an independently assembled dense matrix") {
  // Mixed extents (including an extent-2 axis, where both oriented links of
  // an axis reach the same neighbor) stress the index bookkeeping.
  Grid4 g = Grid4::make({4, 3, 2, 5}, {kTwoPi, kTwoPi, kTwoPi, kTwoPi});
  StencilOp op = random_op(g, 7u);
  SpinorField x = hs::random_bandlimited_spinor(g, 11u, 1);
  SpinorField y(g);
  hs::stencil_apply(op, x, y);

  Eigen::MatrixXcd d = dense_of(op);
  Eigen::VectorXcd yref = d * to_eigen(x);
  double err = (to_eigen(y) - yref).norm() / yref.norm();
  CHECK(err < 1e-13);

  SUBCASE("output buffer must be distinct from input") {
    CHECK_THROWS_AS(hs::stencil_apply(op, x.a.data(), x.a.data()), hs::InputError);
  }
}

TEST_CASE("adjoint operator implements the plain-measure adjoint") {
  Grid4 g = Grid4::make({3, 4, 2, 3}, {kTwoPi, kTwoPi, kTwoPi, kTwoPi});
  StencilOp op = random_op(g, 21u);
  StencilOp adj = hs::adjoint_op(op);

  SpinorField x = hs::random_bandlimited_spinor(g, 5u, 1);
  SpinorField y = hs::random_bandlimited_spinor(g, 6u, 1);
  SpinorField ax(g), ay(g);
  hs::stencil_apply(op, x, ax);
  hs::stencil_apply(adj, y, ay);

  cdouble lhs = hs::field_dot(g, ax, y);  // <A x, y>
  cdouble rhs = hs::field_dot(g, x, ay);  // <x, A^H y>
  CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-13);

  SUBCASE("double adjoint is a bitwise round trip") {
    StencilOp back = hs::adjoint_op(adj);
    bool same = true;
    for (std::size_t i = 0; i < op.hops.size(); ++i) {
      same = same && back.hops[i].s == op.hops[i].s && back.hops[i].p == op.hops[i].p &&
             back.hops[i].q == op.hops[i].q;
    }
    for (std::size_t i = 0; i < op.zeroth.size(); ++i)
      same = same && back.zeroth[i] == op.zeroth[i];
    CHECK(same);
  }

  SUBCASE("dense matrix of the adjoint is the conjugate transpose") {
    Eigen::MatrixXcd d = dense_of(op);
    Eigen::MatrixXcd da = dense_of(adj);
    CHECK((da - d.adjoint()).norm() < 1e-12 * d.norm());
  }
}

TEST_CASE("BLAS-1 helpers agree with direct summation") {
  Grid4 g = Grid4::make({4, 4, 4, 4}, {kTwoPi, kTwoPi, kTwoPi, kTwoPi});
  SpinorField x = hs::random_bandlimited_spinor(g, 31u, 2);
  SpinorField y = hs::random_bandlimited_spinor(g, 32u, 2);
  const std::size_t n = x.a.size();

  cdouble dref{0.0, 0.0};
  double nref = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dref += std::conj(x.a[i]) * y.a[i];
    nref += std::norm(x.a[i]);
  }
  CHECK(std::abs(hs::cxdotc(n, x.a.data(), y.a.data()) - dref) < 1e-11 * std::abs(dref));
  CHECK(hs::cxnrm2sq(n, x.a.data()) == doctest::Approx(nref).epsilon(1e-12));

  cdouble alpha{0.3, -1.7};
  std::vector<cdouble> z = y.a;
  hs::cxaxpy(n, alpha, x.a.data(), z.data());
  double maxerr = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    maxerr = std::max(maxerr, std::abs(z[i] - (y.a[i] + alpha * x.a[i])));
  CHECK(maxerr < 1e-14);
}

TEST_CASE("scalar and AVX2 backends agree to rounding accuracy") {
  INFO("active backend: ", hs::active_kernel_backend());
  if (!hs::detail::avx2_compiled_in() || !__builtin_cpu_supports("avx2")) {
    MESSAGE("AVX2 backend unavailable; nothing to compare");
    return;
  }
  Grid4 g = Grid4::make({4, 3, 2, 5}, {kTwoPi, kTwoPi, kTwoPi, kTwoPi});
  StencilOp op = random_op(g, 99u);
  SpinorField x = hs::random_bandlimited_spinor(g, 41u, 1);
  const std::size_t n = x.a.size();

#ifdef HERMSURF_HAVE_AVX2_TU
  SpinorField ys(g), yv(g);
  hs::detail::stencil_apply_scalar(op, x.a.data(), ys.a.data());
  hs::detail::stencil_apply_avx2(op, x.a.data(), yv.a.data());
  double scale = std::sqrt(hs::cxnrm2sq(n, ys.a.data()));
  double diff = 0.0;
  for (std::size_t i = 0; i < n; ++i) diff += std::norm(ys.a[i] - yv.a[i]);
  CHECK(std::sqrt(diff) < 1e-13 * scale);

  SpinorField y = hs::random_bandlimited_spinor(g, 42u, 1);
  cdouble ds = hs::detail::cxdotc_scalar(n, x.a.data(), y.a.data());
  cdouble dv = hs::detail::cxdotc_avx2(n, x.a.data(), y.a.data());
  CHECK(std::abs(ds - dv) < 1e-12 * (1.0 + std::abs(ds)));

  double ns = hs::detail::cxnrm2sq_scalar(n, x.a.data());
  double nv = hs::detail::cxnrm2sq_avx2(n, x.a.data());
  CHECK(std::abs(ns - nv) < 1e-12 * ns);

  std::vector<cdouble> zs = y.a, zv = y.a;
  cdouble alpha{-0.8, 0.6};
  hs::detail::cxaxpy_scalar(n, alpha, x.a.data(), zs.data());
  hs::detail::cxaxpy_avx2(n, alpha, x.a.data(), zv.data());
  double amax = 0.0;
  for (std::size_t i = 0; i < n; ++i) amax = std::max(amax, std::abs(zs[i] - zv[i]));
  CHECK(amax < 1e-14);

  // Odd tail: exercise the non-vector remainder path.
  std::size_t m = n - 1;
  cdouble ds2 = hs::detail::cxdotc_scalar(m, x.a.data(), y.a.data());
  cdouble dv2 = hs::detail::cxdotc_avx2(m, x.a.data(), y.a.data());
  CHECK(std::abs(ds2 - dv2) < 1e-12 * (1.0 + std::abs(ds2)));
#endif
}

TEST_CASE("dispatcher reports a known backend") {
  std::string b = hs::active_kernel_backend();
  CHECK((b == "scalar" || b == "avx2"));
}
