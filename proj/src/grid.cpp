#include "hermsurf/grid.hpp"

#include <cmath>
#include <random>

#include "hermsurf/errors.hpp"

namespace hs {

Grid4 Grid4::make(const std::array<int, 4>& dims, const std::array<double, 4>& periods) {
  Grid4 g;
  g.dims = dims;
  g.periods = periods;
  std::size_t V = 1;
  for (int mu = 0; mu < 4; ++mu) {
    if (dims[mu] < 2) throw InputError("grid dims must be >= 2 in every direction");
    if (!(periods[mu] > 0.0)) throw InputError("grid periods must be positive");
    g.h[mu] = periods[mu] / dims[mu];
    V *= static_cast<std::size_t>(dims[mu]);
  }
  g.volume = V;
  for (int axis = 0; axis < 4; ++axis) {
    for (int dir = 0; dir < 2; ++dir) {
      g.nbr_[static_cast<std::size_t>(2 * axis + dir)].resize(V);
    }
  }
  for (std::size_t s = 0; s < V; ++s) {
    auto c = g.coords_of(s);
    for (int axis = 0; axis < 4; ++axis) {
      auto cp = c;
      cp[axis] = (c[axis] + 1) % dims[axis];
      g.nbr_[static_cast<std::size_t>(2 * axis)][s] =
          static_cast<std::uint32_t>(g.index(cp[0], cp[1], cp[2], cp[3]));
      cp[axis] = (c[axis] - 1 + dims[axis]) % dims[axis];
      g.nbr_[static_cast<std::size_t>(2 * axis + 1)][s] =
          static_cast<std::uint32_t>(g.index(cp[0], cp[1], cp[2], cp[3]));
    }
  }
  return g;
}

SpinorField random_bandlimited_spinor(const Grid4& g, std::uint64_t seed, int nmax) {
  if (nmax < 0) throw InputError("random spinor band limit must be >= 0");
  // Enumerate the mode set once, in a fixed order, so the field is a function
  // of (seed, nmax, periods) only, independent of grid resolution.
  struct Mode {
    int n[4];
  };
  std::vector<Mode> modes;
  for (int n0 = -nmax; n0 <= nmax; ++n0)
    for (int n1 = -nmax; n1 <= nmax; ++n1)
      for (int n2 = -nmax; n2 <= nmax; ++n2)
        for (int n3 = -nmax; n3 <= nmax; ++n3) modes.push_back(Mode{{n0, n1, n2, n3}});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t M = modes.size();
  // Complex coefficient per (component, mode); drawn in a fixed order.
  std::vector<cdouble> coef(4 * M);
  double sum2 = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t m = 0; m < M; ++m) {
      double re = gauss(rng), im = gauss(rng);
      coef[c * M + m] = cdouble{re, im};
      sum2 += re * re + im * im;
    }
  }
  // Distinct complex exponentials are orthonormal, so the mean over the torus
  // of |psi(x)|^2 (all four components) equals sum2 * scale^2; normalize that
  // mean to 1.
  const double scale = (sum2 > 0.0) ? 1.0 / std::sqrt(sum2) : 1.0;

  // Per-axis phase tables e^{i 2 pi n x_mu / L_mu} for each n in [-nmax,nmax].
  const int nn = 2 * nmax + 1;
  std::array<std::vector<cdouble>, 4> phase;
  for (int mu = 0; mu < 4; ++mu) {
    phase[mu].resize(static_cast<std::size_t>(nn) * g.dims[mu]);
    for (int n = -nmax; n <= nmax; ++n) {
      for (int i = 0; i < g.dims[mu]; ++i) {
        double arg = 2.0 * M_PI * n * (g.h[mu] * i) / g.periods[mu];
        phase[mu][static_cast<std::size_t>(n + nmax) * g.dims[mu] + i] =
            cdouble{std::cos(arg), std::sin(arg)};
      }
    }
  }

  SpinorField f(g);
  for (std::size_t s = 0; s < g.volume; ++s) {
    auto ci = g.coords_of(s);
    for (std::size_t m = 0; m < M; ++m) {
      cdouble ph{1.0, 0.0};
      for (int mu = 0; mu < 4; ++mu) {
        ph *= phase[mu][static_cast<std::size_t>(modes[m].n[mu] + nmax) * g.dims[mu] + ci[mu]];
      }
      for (std::size_t c = 0; c < 4; ++c) f.a[4 * s + c] += coef[c * M + m] * ph;
    }
  }
  for (auto& z : f.a) z *= scale;
  return f;
}

ScalarField evaluate_on_grid(const Grid4& g, const Expr& e) {
  ScalarField out(g.volume);
  for (std::size_t s = 0; s < g.volume; ++s) out[s] = e.eval(g.point_of(s), g.periods);
  return out;
}

double field_norm(const Grid4& g, const SpinorField& f) {
  double acc = 0.0;
  for (const auto& z : f.a) acc += std::norm(z);
  return std::sqrt(acc * g.cell_volume());
}

cdouble field_dot(const Grid4& g, const SpinorField& x, const SpinorField& y) {
  cdouble acc{0.0, 0.0};
  for (std::size_t i = 0; i < x.a.size(); ++i) acc += std::conj(x.a[i]) * y.a[i];
  return acc * g.cell_volume();
}

}  // namespace hs
