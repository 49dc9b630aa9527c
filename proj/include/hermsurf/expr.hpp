#pragma once
// Closed-form scalar fields on the 4-torus as expression trees, with exact
// forward-mode first and second derivatives (2-jets).  Metric coefficients,
// conformal factors, and seeded band-limited random fields are all built
// from these nodes so that scenarios stay self-contained and reproducible.

#include <array>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace hs {

// Value, gradient, Hessian of a scalar function at a point.
struct Jet2 {
  double v = 0.0;
  std::array<double, 4> d{};
  std::array<double, 16> h{};  // row-major 4x4, symmetric

  static Jet2 constant(double c) {
    Jet2 j;
    j.v = c;
    return j;
  }
};

Jet2 operator+(const Jet2& a, const Jet2& b);
Jet2 operator*(const Jet2& a, const Jet2& b);
Jet2 jet_scale(double s, const Jet2& a);
Jet2 jet_sin(const Jet2& a);
Jet2 jet_cos(const Jet2& a);
Jet2 jet_exp(const Jet2& a);
Jet2 jet_inv(const Jet2& a);  // 1/a, a.v != 0

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

// Expression tree over x in R^4 with periods L (angles enter only through
// integer-frequency phases, so every node is exactly periodic).
class Expr {
 public:
  virtual ~Expr() = default;
  virtual double eval(const std::array<double, 4>& x,
                      const std::array<double, 4>& periods) const = 0;
  virtual Jet2 jet(const std::array<double, 4>& x,
                   const std::array<double, 4>& periods) const = 0;
};

// Parse from JSON; `where` names the enclosing key for error messages.
// Grammar (op field selects the node):
//   {"op":"const","value":c}
//   {"op":"lin","coeffs":[n0,n1,n2,n3]}        -> sum_mu 2 pi n_mu x_mu / L_mu
//   {"op":"+","args":[...]} , {"op":"*","args":[...]}
//   {"op":"scale","factor":c,"arg":e}
//   {"op":"sin","arg":e} , {"op":"cos","arg":e} , {"op":"exp","arg":e}
//   {"op":"randband","seed":s,"nmax":n,"amp":a[,"shape":"box"|"cross"]}
//       -> seeded band-limited field
// A bare number parses as a constant.
ExprPtr parse_expr(const nlohmann::json& j, const std::string& where);

ExprPtr make_const(double c);

// a + b as a new tree (used to compose conformal exponents).
ExprPtr expr_sum(ExprPtr a, ExprPtr b);

// Seeded real band-limited field: amp * Re sum_n c_n e^{i k.x} with c_n iid
// standard complex Gaussians from the seed and k_mu = 2 pi n_mu / L_mu.  The
// retained frequencies satisfy |n_mu| <= nmax per axis ("box", default) or
// sum_mu |n_mu| <= nmax ("cross"); the zero mode is dropped and coefficients
// are normalized so the field has unit rms amplitude before scaling.  Same
// continuum field on every grid.
ExprPtr make_random_band(std::uint64_t seed, int nmax, double amp, bool cross = false);

}  // namespace hs
