#pragma once
// Periodic 4-torus lattice bookkeeping and field containers.

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include "hermsurf/expr.hpp"

namespace hs {

using cdouble = std::complex<double>;

struct Grid4 {
  std::array<int, 4> dims{};
  std::array<double, 4> periods{};
  std::array<double, 4> h{};
  std::size_t volume = 0;

  static Grid4 make(const std::array<int, 4>& dims, const std::array<double, 4>& periods);

  std::size_t index(int i0, int i1, int i2, int i3) const {
    return ((static_cast<std::size_t>(i0) * static_cast<std::size_t>(dims[1]) +
             static_cast<std::size_t>(i1)) *
                static_cast<std::size_t>(dims[2]) +
            static_cast<std::size_t>(i2)) *
               static_cast<std::size_t>(dims[3]) +
           static_cast<std::size_t>(i3);
  }
  std::array<int, 4> coords_of(std::size_t site) const {
    std::array<int, 4> c;
    c[3] = static_cast<int>(site % static_cast<std::size_t>(dims[3]));
    site /= static_cast<std::size_t>(dims[3]);
    c[2] = static_cast<int>(site % static_cast<std::size_t>(dims[2]));
    site /= static_cast<std::size_t>(dims[2]);
    c[1] = static_cast<int>(site % static_cast<std::size_t>(dims[1]));
    site /= static_cast<std::size_t>(dims[1]);
    c[0] = static_cast<int>(site);
    return c;
  }
  std::array<double, 4> point_of(std::size_t site) const {
    auto c = coords_of(site);
    return {h[0] * c[0], h[1] * c[1], h[2] * c[2], h[3] * c[3]};
  }

  // Neighbor tables: nbr(axis, dir)[site], dir 0 = +1, dir 1 = -1.
  const std::vector<std::uint32_t>& nbr(int axis, int dir) const {
    return nbr_[static_cast<std::size_t>(2 * axis + dir)];
  }

  // Measure weight of one site in the flat coordinate measure.
  double cell_volume() const { return h[0] * h[1] * h[2] * h[3]; }

 private:
  std::array<std::vector<std::uint32_t>, 8> nbr_;
};

// Spinor field: site-major, 4 components per site (index 4*site + c).
struct SpinorField {
  std::vector<cdouble> a;
  explicit SpinorField(const Grid4& g) : a(4 * g.volume, cdouble{0.0, 0.0}) {}
  SpinorField() = default;
  std::size_t size() const { return a.size(); }
};

using ScalarField = std::vector<double>;
using CScalarField = std::vector<cdouble>;

// Band-limited random spinor field with per-component complex Gaussian mode
// coefficients, |n_mu| <= nmax, normalized to unit rms.  The same seed gives
// the same continuum field on every grid (mode set independent of dims).
SpinorField random_bandlimited_spinor(const Grid4& g, std::uint64_t seed, int nmax);

// Evaluate an expression on all grid sites (values only).
ScalarField evaluate_on_grid(const Grid4& g, const Expr& e);

// Pointwise norms and inner products in the plain lattice measure
// (sum over sites times cell volume).
double field_norm(const Grid4& g, const SpinorField& f);
cdouble field_dot(const Grid4& g, const SpinorField& x, const SpinorField& y);

}  // namespace hs
