#pragma once
// J-compatible metrics on the periodic chart.
//
// Every supported metric is encoded by a 2x2 Hermitian positive matrix field
//   H(x) = [[a, c], [conj(c), b]],  c = cre + i*cim,
// acting on the complex coordinates (z1, z2) = (x1 + i x2, x3 + i x4).  The
// real 4x4 metric it induces is
//   g = [[ a, 0, cre, -cim],
//        [ 0, a, cim,  cre],
//        [ cre, cim, b, 0 ],
//        [-cim, cre, 0, b ]],
// which is symmetric and exactly J-compatible for the standard constant J
// (J e1 = e2, J e3 = e4).  Flat is H = I; a conformal factor e^f multiplies H.

#include <array>
#include <cstddef>

#include <json.hpp>

#include "hermsurf/expr.hpp"
#include "hermsurf/grid.hpp"

namespace hs {

struct MetricSpec {
  enum class Kind { Flat, Conformal, Hermitian };
  Kind kind = Kind::Flat;
  ExprPtr f;                   // conformal exponent (Kind::Conformal)
  ExprPtr a, b, cre, cim;      // Hermitian entries (Kind::Hermitian)
  ExprPtr extra;               // optional extra conformal exponent (rescale)
  bool analytic = false;       // use analytic derivatives in geometry
};

// Accepts "flat", {"conformal_factor": expr}, {"hermitian": {a,b,c_re,c_im}},
// or a bare expression (treated as a conformal factor).  The sibling scenario
// key "analytic_derivatives" is handled by the caller.
MetricSpec parse_metric(const nlohmann::json& j, const std::string& where);

// g_tilde = e^f g: composes an extra conformal exponent onto the spec.
MetricSpec conformal_rescale(const MetricSpec& m, ExprPtr f);

// 2-jets of the four real entry functions of H at a point.
struct HJet {
  Jet2 a, b, cre, cim;
};
HJet h_jet(const MetricSpec& m, const std::array<double, 4>& x,
           const std::array<double, 4>& periods);

// Values only: out = {a, b, cre, cim}.
std::array<double, 4> h_values(const MetricSpec& m, const std::array<double, 4>& x,
                               const std::array<double, 4>& periods);

// Real 4x4 metric (row-major, 16 entries) from H entry values.
std::array<double, 16> g_from_h(const std::array<double, 4>& hv);

// SPD test for H (equivalently for g): a > 0 and a*b - |c|^2 > 0.
bool h_spd(const std::array<double, 4>& hv);

// det g = (a*b - |c|^2)^2; the half-density weight is rho = sqrt(det g).
double det_g_from_h(const std::array<double, 4>& hv);

// Validates SPD at every grid site; throws InputError naming the first bad
// site (indices, coordinates, and the offending values).
void validate_spd(const MetricSpec& m, const Grid4& grid);

// True when the spec is exactly the flat metric (no conformal pieces).
bool is_flat(const MetricSpec& m);

}  // namespace hs
