#include "hermsurf/metric.hpp"

#include <cmath>
#include <sstream>

#include "hermsurf/errors.hpp"

namespace hs {

MetricSpec parse_metric(const nlohmann::json& j, const std::string& where) {
  MetricSpec m;
  if (j.is_string()) {
    if (j.get<std::string>() == "flat") {
      m.kind = MetricSpec::Kind::Flat;
      return m;
    }
    throw InputError("unknown metric keyword '" + j.get<std::string>() + "' at " + where +
                     " (expected \"flat\" or an object)");
  }
  if (j.is_object()) {
    if (j.contains("conformal_factor")) {
      m.kind = MetricSpec::Kind::Conformal;
      m.f = parse_expr(j.at("conformal_factor"), where + ".conformal_factor");
      return m;
    }
    if (j.contains("hermitian")) {
      const auto& hj = j.at("hermitian");
      if (!hj.is_object()) throw InputError("metric.hermitian must be an object at " + where);
      for (const char* key : {"a", "b", "c_re", "c_im"}) {
        if (!hj.contains(key)) {
          throw InputError(std::string("metric.hermitian missing entry '") + key + "' at " +
                           where);
        }
      }
      m.kind = MetricSpec::Kind::Hermitian;
      m.a = parse_expr(hj.at("a"), where + ".hermitian.a");
      m.b = parse_expr(hj.at("b"), where + ".hermitian.b");
      m.cre = parse_expr(hj.at("c_re"), where + ".hermitian.c_re");
      m.cim = parse_expr(hj.at("c_im"), where + ".hermitian.c_im");
      return m;
    }
  }
  // Bare expression: conformal factor over flat.
  m.kind = MetricSpec::Kind::Conformal;
  m.f = parse_expr(j, where);
  return m;
}

MetricSpec conformal_rescale(const MetricSpec& m, ExprPtr f) {
  MetricSpec out = m;
  out.extra = m.extra ? expr_sum(m.extra, std::move(f)) : std::move(f);
  return out;
}

HJet h_jet(const MetricSpec& m, const std::array<double, 4>& x,
           const std::array<double, 4>& periods) {
  HJet h;
  switch (m.kind) {
    case MetricSpec::Kind::Flat:
      h.a = Jet2::constant(1.0);
      h.b = Jet2::constant(1.0);
      h.cre = Jet2::constant(0.0);
      h.cim = Jet2::constant(0.0);
      break;
    case MetricSpec::Kind::Conformal: {
      Jet2 ef = jet_exp(m.f->jet(x, periods));
      h.a = ef;
      h.b = ef;
      h.cre = Jet2::constant(0.0);
      h.cim = Jet2::constant(0.0);
      break;
    }
    case MetricSpec::Kind::Hermitian:
      h.a = m.a->jet(x, periods);
      h.b = m.b->jet(x, periods);
      h.cre = m.cre->jet(x, periods);
      h.cim = m.cim->jet(x, periods);
      break;
  }
  if (m.extra) {
    Jet2 ee = jet_exp(m.extra->jet(x, periods));
    h.a = h.a * ee;
    h.b = h.b * ee;
    h.cre = h.cre * ee;
    h.cim = h.cim * ee;
  }
  return h;
}

std::array<double, 4> h_values(const MetricSpec& m, const std::array<double, 4>& x,
                               const std::array<double, 4>& periods) {
  std::array<double, 4> hv{1.0, 1.0, 0.0, 0.0};
  switch (m.kind) {
    case MetricSpec::Kind::Flat:
      break;
    case MetricSpec::Kind::Conformal: {
      double ef = std::exp(m.f->eval(x, periods));
      hv[0] = ef;
      hv[1] = ef;
      break;
    }
    case MetricSpec::Kind::Hermitian:
      hv[0] = m.a->eval(x, periods);
      hv[1] = m.b->eval(x, periods);
      hv[2] = m.cre->eval(x, periods);
      hv[3] = m.cim->eval(x, periods);
      break;
  }
  if (m.extra) {
    double ee = std::exp(m.extra->eval(x, periods));
    for (double& v : hv) v *= ee;
  }
  return hv;
}

std::array<double, 16> g_from_h(const std::array<double, 4>& hv) {
  const double a = hv[0], b = hv[1], cr = hv[2], ci = hv[3];
  return {a,   0.0, cr,  -ci,   //
          0.0, a,   ci,  cr,    //
          cr,  ci,  b,   0.0,   //
          -ci, cr,  0.0, b};
}

bool h_spd(const std::array<double, 4>& hv) {
  return hv[0] > 0.0 && hv[0] * hv[1] - (hv[2] * hv[2] + hv[3] * hv[3]) > 0.0;
}

double det_g_from_h(const std::array<double, 4>& hv) {
  const double d2 = hv[0] * hv[1] - (hv[2] * hv[2] + hv[3] * hv[3]);
  return d2 * d2;
}

void validate_spd(const MetricSpec& m, const Grid4& grid) {
  for (std::size_t s = 0; s < grid.volume; ++s) {
    auto x = grid.point_of(s);
    auto hv = h_values(m, x, grid.periods);
    if (!h_spd(hv)) {
      auto c = grid.coords_of(s);
      std::ostringstream os;
      os << "metric is not positive definite at site (" << c[0] << "," << c[1] << "," << c[2]
         << "," << c[3] << "), x = (" << x[0] << "," << x[1] << "," << x[2] << "," << x[3]
         << "): leading entry a = " << hv[0]
         << ", determinant minor a*b - |c|^2 = " << hv[0] * hv[1] - (hv[2] * hv[2] + hv[3] * hv[3]);
      throw InputError(os.str());
    }
  }
}

bool is_flat(const MetricSpec& m) {
  return m.kind == MetricSpec::Kind::Flat && !m.extra;
}

}  // namespace hs
