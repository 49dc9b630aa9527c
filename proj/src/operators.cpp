// Assembly of the lattice Dirac family, covariant derivatives, twistor
// operator, and identity checkers.  See operators.hpp for the shared-stencil
// and half-density conventions.

#include "hermsurf/operators.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "hermsurf/clifford.hpp"
#include "hermsurf/errors.hpp"

namespace hs {

namespace {

using CMat = std::array<cdouble, 16>;  // row-major 4x4 complex

// Complexified copies of the frozen exact Clifford tables, built once.
struct CliffordC {
  std::array<CMat, 4> gamma;                 // generators
  CMat jmat;                                 // real-structure matrix C
  std::array<CMat, 6> pairprod;              // gamma_j gamma_k, j<k, pair6 slots
  std::array<std::array<CMat, 6>, 4> trip;   // gamma_i * pairprod[p]
};

const CliffordC& cliffc() {
  static const CliffordC cc = [] {
    CliffordC c;
    const CliffordRep& rep = clifford();
    for (int i = 0; i < 4; ++i) c.gamma[static_cast<std::size_t>(i)] = rep.gamma[static_cast<std::size_t>(i)].to_complex();
    c.jmat = rep.jmat.to_complex();
    for (int j = 0; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k) {
        QMat4 pp = rep.gamma[static_cast<std::size_t>(j)] * rep.gamma[static_cast<std::size_t>(k)];
        int p = pair6(j, k);
        c.pairprod[static_cast<std::size_t>(p)] = pp.to_complex();
        for (int i = 0; i < 4; ++i)
          c.trip[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)] =
              (rep.gamma[static_cast<std::size_t>(i)] * pp).to_complex();
      }
    return c;
  }();
  return cc;
}

// Divergence compensation coefficient c_i = sum_j omega_{j j i} (equals
// -div e_i); read from the antisymmetrized frame-connection table.
inline double div_comp(const GeometryTables& tab, std::size_t s, int i) {
  double c = 0.0;
  for (int j = 0; j < 4; ++j) {
    if (j == i) continue;
    if (j < i)
      c += tab.omega_conn[24 * s + static_cast<std::size_t>(6 * j + pair6(j, i))];
    else
      c -= tab.omega_conn[24 * s + static_cast<std::size_t>(6 * j + pair6(i, j))];
  }
  return c;
}

// Accumulate coeff * (row-major 4x4) into a column-major per-site block.
inline void accum_block(cdouble* z, double coeff, const CMat& m) {
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      z[4 * c + r] += coeff * m[static_cast<std::size_t>(4 * r + c)];
}

// Covariant midpoint hops of the Dirac family: for each oriented link the
// Clifford matrix of the link-averaged frame components over 2h, written
// antisymmetrically to both link ends (exact negation, so the stored hop
// tables are Hermitian as a matrix, bitwise).
void fill_dirac_hops(const GeometryTables& tab, StencilOp& op) {
  const Grid4& g = tab.grid;
  for (int mu = 0; mu < 4; ++mu) {
    const auto& nb = g.nbr(mu, 0);
    const double inv2h = 0.5 / g.h[static_cast<std::size_t>(mu)];
    for (std::size_t x = 0; x < g.volume; ++x) {
      const std::size_t y = nb[x];
      double a[4];
      for (int i = 0; i < 4; ++i)
        a[i] = 0.5 *
               (tab.frame[16 * x + static_cast<std::size_t>(4 * i + mu)] +
                tab.frame[16 * y + static_cast<std::size_t>(4 * i + mu)]) *
               inv2h;
      const cdouble p{a[0], -a[1]};
      const cdouble q{a[2], -a[3]};
      op.hops[8 * x + static_cast<std::size_t>(2 * mu + 0)] = Hop{cdouble{0.0, 0.0}, p, q};
      op.hops[8 * y + static_cast<std::size_t>(2 * mu + 1)] = Hop{cdouble{0.0, 0.0}, -p, -q};
    }
  }
}

// Scalar link-averaged hops of the per-direction covariant derivative
// nabla_{e_i}: the same midpoint coefficients as the Dirac hops, entering
// through the identity instead of the Clifford matrix.
void fill_nabla_hops(const GeometryTables& tab, StencilOp& op, int i) {
  const Grid4& g = tab.grid;
  for (int mu = 0; mu < 4; ++mu) {
    const auto& nb = g.nbr(mu, 0);
    const double inv2h = 0.5 / g.h[static_cast<std::size_t>(mu)];
    for (std::size_t x = 0; x < g.volume; ++x) {
      const std::size_t y = nb[x];
      const double s = 0.5 *
                       (tab.frame[16 * x + static_cast<std::size_t>(4 * i + mu)] +
                        tab.frame[16 * y + static_cast<std::size_t>(4 * i + mu)]) *
                       inv2h;
      op.hops[8 * x + static_cast<std::size_t>(2 * mu + 0)] = Hop{cdouble{s, 0.0}, {}, {}};
      op.hops[8 * y + static_cast<std::size_t>(2 * mu + 1)] = Hop{cdouble{-s, 0.0}, {}, {}};
    }
  }
}

// Geometric zeroth-order block of the Dirac family:
//   sum_i gamma_i ( W_i + (1/2) c_i ),
// with W_i the spin-connection endomorphism (1/2) sum_{j<k} omega_{ijk}
// gamma_j gamma_k and c_i the half-density divergence compensation.
void fill_base_zeroth(const GeometryTables& tab, std::vector<cdouble>& z) {
  const CliffordC& cc = cliffc();
  const std::size_t v = tab.grid.volume;
  z.assign(16 * v, cdouble{0.0, 0.0});
  for (std::size_t s = 0; s < v; ++s) {
    cdouble* zs = &z[16 * s];
    for (int i = 0; i < 4; ++i) {
      for (int p = 0; p < 6; ++p) {
        const double w = 0.5 * tab.omega_conn[24 * s + static_cast<std::size_t>(6 * i + p)];
        accum_block(zs, w, cc.trip[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)]);
      }
      accum_block(zs, 0.5 * div_comp(tab, s, i), cc.gamma[static_cast<std::size_t>(i)]);
    }
  }
}

// Lee-form zeroth table sum_j theta_j(x) K_j from rounded coefficient
// matrices (row-major).
void fill_lee_zeroth(const GeometryTables& tab, const std::array<CMat, 4>& kmat,
                     std::vector<cdouble>& z) {
  const std::size_t v = tab.grid.volume;
  z.assign(16 * v, cdouble{0.0, 0.0});
  for (std::size_t s = 0; s < v; ++s) {
    cdouble* zs = &z[16 * s];
    for (int j = 0; j < 4; ++j)
      accum_block(zs, tab.theta_frame[4 * s + static_cast<std::size_t>(j)],
                  kmat[static_cast<std::size_t>(j)]);
  }
}

// Exact Hermitian storage: entry (r,c) and (c,r) are written as w and
// conj(w); diagonals become exactly real.
void hermitian_symmetrize(std::vector<cdouble>& z, std::size_t volume) {
  for (std::size_t s = 0; s < volume; ++s) {
    cdouble* zs = &z[16 * s];
    for (int r = 0; r < 4; ++r) {
      zs[4 * r + r] = cdouble{zs[4 * r + r].real(), 0.0};
      for (int c = r + 1; c < 4; ++c) {
        const cdouble w = 0.5 * (zs[4 * c + r] + std::conj(zs[4 * r + c]));
        zs[4 * c + r] = w;
        zs[4 * r + c] = std::conj(w);
      }
    }
  }
}

DiracOp build_family(const GeometryTables& tab, const std::array<QMat4, 4>& kexact,
                     bool hermitian, std::string label) {
  DiracOp d;
  d.op = StencilOp::zero(tab.grid);
  fill_dirac_hops(tab, d.op);
  fill_base_zeroth(tab, d.zeroth_base);
  std::array<CMat, 4> km;
  for (int j = 0; j < 4; ++j) km[static_cast<std::size_t>(j)] = kexact[static_cast<std::size_t>(j)].to_complex();
  d.kmat = km;
  fill_lee_zeroth(tab, km, d.zeroth_lee);
  const std::size_t n = d.zeroth_base.size();
  d.op.zeroth.resize(n);
  for (std::size_t e = 0; e < n; ++e) d.op.zeroth[e] = d.zeroth_base[e] + d.zeroth_lee[e];
  if (hermitian) hermitian_symmetrize(d.op.zeroth, tab.grid.volume);
  d.hermitian_storage = hermitian;
  d.label = std::move(label);
  return d;
}

QVec4 unit_covector(int j) {
  QVec4 e{};
  e[static_cast<std::size_t>(j)] = QC::of_int(1);
  return e;
}

// Full per-direction zeroth block W_i + T^t_i + (1/2) c_i of the covariant
// derivative, written column-major into z (16 entries).
void nabla_zeroth_at(const GeometryTables& tab, std::size_t s, int i,
                     const std::array<CMat, 4>& torsion_i, cdouble* zs) {
  const CliffordC& cc = cliffc();
  for (int p = 0; p < 6; ++p) {
    const double w = 0.5 * tab.omega_conn[24 * s + static_cast<std::size_t>(6 * i + p)];
    accum_block(zs, w, cc.pairprod[static_cast<std::size_t>(p)]);
  }
  for (int j = 0; j < 4; ++j)
    accum_block(zs, tab.theta_frame[4 * s + static_cast<std::size_t>(j)],
                torsion_i[static_cast<std::size_t>(j)]);
  const double half_c = 0.5 * div_comp(tab, s, i);
  for (int r = 0; r < 4; ++r) zs[4 * r + r] += half_c;
}

std::array<CMat, 4> torsion_coeff_complex(const BigQ& t, int i) {
  std::array<CMat, 4> out;
  for (int j = 0; j < 4; ++j)
    out[static_cast<std::size_t>(j)] = torsion_endo(t, unit_covector(j), i).to_complex();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Lee-form coefficient matrices
// ---------------------------------------------------------------------------

std::array<QMat4, 4> lee_coeff_dolbeault() {
  std::array<QMat4, 4> k;
  for (int j = 0; j < 4; ++j) k[static_cast<std::size_t>(j)] = dolbeault_correction(unit_covector(j));
  return k;
}

std::array<QMat4, 4> lee_coeff_dirac_t(const BigQ& t, TorsionRoute route) {
  std::array<QMat4, 4> k;
  for (int j = 0; j < 4; ++j) {
    if (route == TorsionRoute::GlobalCorrection) {
      k[static_cast<std::size_t>(j)] = dirac_t_correction(t, unit_covector(j));
    } else {
      // Clifford contraction of the per-direction torsion endomorphisms.
      QMat4 acc = QMat4::zero();
      for (int i = 0; i < 4; ++i)
        acc += clifford().gamma[static_cast<std::size_t>(i)] *
               torsion_endo(t, unit_covector(j), i);
      k[static_cast<std::size_t>(j)] = acc;
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

DiracOp build_dirac(const GeometryTables& tab) {
  std::array<QMat4, 4> zero{};  // no Lee-form correction
  return build_family(tab, zero, true, "dirac");
}

DiracOp build_dolbeault(const GeometryTables& tab) {
  return build_family(tab, lee_coeff_dolbeault(), true, "dolbeault");
}

DiracOp build_dirac_t(const GeometryTables& tab, double t, TorsionRoute route) {
  return build_family(tab, lee_coeff_dirac_t(rat_from_double(t), route), false,
                      "dirac_t");
}

StencilOp build_covariant_derivative(const GeometryTables& tab, double t, int i) {
  if (i < 0 || i > 3) throw InputError("covariant derivative: direction index must be 0..3");
  StencilOp op = StencilOp::zero(tab.grid);
  fill_nabla_hops(tab, op, i);
  const std::array<CMat, 4> torsion_i = torsion_coeff_complex(rat_from_double(t), i);
  for (std::size_t s = 0; s < tab.grid.volume; ++s)
    nabla_zeroth_at(tab, s, i, torsion_i, &op.zeroth[16 * s]);
  return op;
}

ConnectionLaplacian build_connection_laplacian(const GeometryTables& tab, double t) {
  ConnectionLaplacian lap;
  for (int i = 0; i < 4; ++i) {
    lap.grad[static_cast<std::size_t>(i)] = build_covariant_derivative(tab, t, i);
    lap.grad_adj[static_cast<std::size_t>(i)] = adjoint_op(lap.grad[static_cast<std::size_t>(i)]);
  }
  return lap;
}

void ConnectionLaplacian::apply(const cdouble* x, cdouble* y, cdouble* s1, cdouble* s2) const {
  const std::size_t n = dim();
  for (int i = 0; i < 4; ++i) {
    stencil_apply(grad[static_cast<std::size_t>(i)], x, s1);
    if (i == 0) {
      stencil_apply(grad_adj[0], s1, y);
    } else {
      stencil_apply(grad_adj[static_cast<std::size_t>(i)], s1, s2);
      cxaxpy(n, cdouble{1.0, 0.0}, s2, y);
    }
  }
}

void ConnectionLaplacian::apply(const SpinorField& x, SpinorField& y) const {
  const std::size_t n = dim();
  if (y.a.size() != n) y.a.assign(n, cdouble{0.0, 0.0});
  std::vector<cdouble> s1(n), s2(n);
  apply(x.a.data(), y.a.data(), s1.data(), s2.data());
}

// ---------------------------------------------------------------------------
// Pointwise spinor algebra
// ---------------------------------------------------------------------------

SpinorField volume_graded(const SpinorField& f) {
  SpinorField out = f;
  const std::size_t sites = f.a.size() / 4;
  for (std::size_t s = 0; s < sites; ++s) {
    out.a[4 * s + 0] = -out.a[4 * s + 0];
    out.a[4 * s + 3] = -out.a[4 * s + 3];
  }
  return out;
}

SpinorField j_conjugate(const SpinorField& f) {
  const CMat& c = cliffc().jmat;
  SpinorField out;
  out.a.assign(f.a.size(), cdouble{0.0, 0.0});
  const std::size_t sites = f.a.size() / 4;
  for (std::size_t s = 0; s < sites; ++s) {
    for (int r = 0; r < 4; ++r) {
      cdouble acc{0.0, 0.0};
      for (int k = 0; k < 4; ++k) {
        const cdouble& m = c[static_cast<std::size_t>(4 * r + k)];
        if (m != cdouble{0.0, 0.0}) acc += m * std::conj(f.a[4 * s + static_cast<std::size_t>(k)]);
      }
      out.a[4 * s + static_cast<std::size_t>(r)] = acc;
    }
  }
  return out;
}

SpinorField degree_project(const SpinorField& f, int r) {
  if (r < 0 || r > 2) throw InputError("degree_project: degree must be 0, 1 or 2");
  SpinorField out;
  out.a.assign(f.a.size(), cdouble{0.0, 0.0});
  const std::size_t sites = f.a.size() / 4;
  for (std::size_t s = 0; s < sites; ++s) {
    if (r == 0) out.a[4 * s + 0] = f.a[4 * s + 0];
    if (r == 1) {
      out.a[4 * s + 1] = f.a[4 * s + 1];
      out.a[4 * s + 2] = f.a[4 * s + 2];
    }
    if (r == 2) out.a[4 * s + 3] = f.a[4 * s + 3];
  }
  return out;
}

double degree_leak(const SpinorField& f, int r) {
  if (r < 0 || r > 2) throw InputError("degree_leak: degree must be 0, 1 or 2");
  double m = 0.0;
  const std::size_t sites = f.a.size() / 4;
  for (std::size_t s = 0; s < sites; ++s)
    for (int c = 0; c < 4; ++c) {
      const bool inside = (r == 0 && c == 0) || (r == 1 && (c == 1 || c == 2)) || (r == 2 && c == 3);
      if (!inside) m = std::max(m, std::abs(f.a[4 * s + static_cast<std::size_t>(c)]));
    }
  return m;
}

namespace {
// y4 += (s Id + gamma(a)) x4 with a given via p = a0 - i a1, q = a2 - i a3.
inline void structured_accum(cdouble s, cdouble p, cdouble q, const cdouble* x4, cdouble* y4) {
  const cdouble pc = std::conj(p), qc = std::conj(q);
  y4[0] += s * x4[0] - q * x4[1] + p * x4[2];
  y4[1] += qc * x4[0] + s * x4[1] + p * x4[3];
  y4[2] += -pc * x4[0] + s * x4[2] + q * x4[3];
  y4[3] += -pc * x4[1] - qc * x4[2] + s * x4[3];
}
}  // namespace

SpinorField lee_clifford_mult(const GeometryTables& tab, const SpinorField& f, double scale) {
  SpinorField out;
  out.a.assign(f.a.size(), cdouble{0.0, 0.0});
  for (std::size_t s = 0; s < tab.grid.volume; ++s) {
    const double* th = &tab.theta_frame[4 * s];
    const cdouble p{scale * th[0], -scale * th[1]};
    const cdouble q{scale * th[2], -scale * th[3]};
    structured_accum(cdouble{0.0, 0.0}, p, q, &f.a[4 * s], &out.a[4 * s]);
  }
  return out;
}

SpinorField random_degree0_field(const Grid4& g, std::uint64_t seed, int nmax) {
  SpinorField f = random_bandlimited_spinor(g, seed, nmax);
  for (std::size_t s = 0; s < g.volume; ++s) {
    f.a[4 * s + 1] = cdouble{0.0, 0.0};
    f.a[4 * s + 2] = cdouble{0.0, 0.0};
    f.a[4 * s + 3] = cdouble{0.0, 0.0};
  }
  const double n = field_norm(g, f);
  for (auto& v : f.a) v /= n;
  return f;
}

// ---------------------------------------------------------------------------
// Structural certification
// ---------------------------------------------------------------------------

StencilCertificate certify_dirac_family(const DiracOp& d) {
  StencilCertificate cert;
  const Grid4& g = d.op.grid;
  // Component parity of the volume grading diag(-1,1,1,-1).
  const int eps[4] = {-1, 1, 1, -1};
  // Sign pattern of the real-structure sandwich:
  // (C conj(Z) C^-1)(r,c) = sgn_r sgn_c conj(Z(3-r, 3-c)).
  const double sgn[4] = {-1.0, -1.0, 1.0, 1.0};

  for (std::size_t s = 0; s < g.volume; ++s) {
    const cdouble* z = &d.op.zeroth[16 * s];
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const cdouble v = z[4 * c + r];
        if (d.hermitian_storage)
          cert.hermiticity = std::max(cert.hermiticity, std::abs(v - std::conj(z[4 * r + c])));
        if (eps[r] == eps[c])
          cert.grading_structural = std::max(cert.grading_structural, std::abs(v));
        const cdouble mirror = sgn[r] * sgn[c] * std::conj(z[4 * (3 - c) + (3 - r)]);
        cert.j_commutation = std::max(cert.j_commutation, std::abs(v - mirror));
      }
  }
  for (int axis = 0; axis < 4; ++axis) {
    const auto& nb = g.nbr(axis, 0);
    for (std::size_t x = 0; x < g.volume; ++x) {
      const Hop& fwd = d.op.hops[8 * x + static_cast<std::size_t>(2 * axis + 0)];
      const Hop& bwd = d.op.hops[8 * nb[x] + static_cast<std::size_t>(2 * axis + 1)];
      // Hermiticity across the link: backward hop must be the conjugate
      // transpose of the forward hop, i.e. (conj s, -p, -q).
      if (d.hermitian_storage) {
        double defect = std::abs(bwd.s - std::conj(fwd.s)) + std::abs(bwd.p + fwd.p) +
                        std::abs(bwd.q + fwd.q);
        cert.hermiticity = std::max(cert.hermiticity, defect);
      }
      // The structured (s,p,q) form commutes with the real structure and
      // anticommutes with the grading iff the identity part vanishes and,
      // for the real structure, s is real.
      for (const Hop* hp : {&fwd, &bwd}) {
        cert.grading_structural = std::max(cert.grading_structural, std::abs(hp->s));
        cert.j_commutation = std::max(cert.j_commutation, std::abs(hp->s.imag()));
      }
    }
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Twistor operator
// ---------------------------------------------------------------------------

std::array<std::array<QC, 4>, 4> twistor_reduction_coeff(TwistorRoute route) {
  std::array<std::array<QC, 4>, 4> a{};
  const BigQ half = BigQ(1) / BigQ(2);
  if (route == TwistorRoute::HolomorphicSplit) {
    // slot_i = nabla_{p(e_i)} with p(e_i) = (e_i - i J e_i)/2 and
    // J e_i = j_sign[i] e_{j_index[i]}.
    for (int i = 0; i < 4; ++i) {
      a[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] += QC(half, BigQ(0));
      a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j_index[i])] +=
          QC(BigQ(0), -BigQ(j_sign[i]) / BigQ(2));
    }
  } else {
    // slot_i = v_i + (1/2) p_0 gamma_i sum_j gamma_j v_j restricted to the
    // degree-0 line bundle: coefficient delta_ij + (1/2)(gamma_i gamma_j)(0,0).
    const CliffordRep& rep = clifford();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        QC coeff = (i == j) ? QC::of_int(1) : QC::of_int(0);
        coeff += half * (rep.gamma[static_cast<std::size_t>(i)] *
                         rep.gamma[static_cast<std::size_t>(j)])(0, 0);
        a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = coeff;
      }
  }
  return a;
}

namespace {

// Covariant derivative restricted to the degree-0 line bundle: scalar hops
// plus the (0,0) entry of the full zeroth block.  Outputs on a degree-0
// field stay exactly in degree 0.
StencilOp build_restricted_cov(const GeometryTables& tab, double t, int i,
                               const std::array<CMat, 4>& torsion_i) {
  StencilOp op = StencilOp::zero(tab.grid);
  fill_nabla_hops(tab, op, i);
  std::array<cdouble, 16> zfull;
  for (std::size_t s = 0; s < tab.grid.volume; ++s) {
    zfull.fill(cdouble{0.0, 0.0});
    nabla_zeroth_at(tab, s, i, torsion_i, zfull.data());
    op.zeroth[16 * s] = zfull[0];  // entry (0,0), column-major slot 0
  }
  (void)t;
  return op;
}

void require_degree0(const SpinorField& psi0, const char* who) {
  if (degree_leak(psi0, 0) != 0.0)
    throw InputError(std::string(who) +
                     ": input must be a degree-0 field (components outside Sigma_0 must vanish)");
}

// The four restricted covariant-derivative fields v_i of a degree-0 input.
std::array<SpinorField, 4> restricted_derivatives(const GeometryTables& tab, double t,
                                                  const SpinorField& psi0) {
  std::array<SpinorField, 4> v;
  const BigQ tq = rat_from_double(t);
  for (int i = 0; i < 4; ++i) {
    StencilOp r = build_restricted_cov(tab, t, i, torsion_coeff_complex(tq, i));
    v[static_cast<std::size_t>(i)] = SpinorField(tab.grid);
    stencil_apply(r, psi0, v[static_cast<std::size_t>(i)]);
  }
  return v;
}

}  // namespace

CoSpinorField twistor_p0(const GeometryTables& tab, double t, const SpinorField& psi0,
                         TwistorRoute route) {
  require_degree0(psi0, "twistor_p0");
  const auto v = restricted_derivatives(tab, t, psi0);
  const auto aq = twistor_reduction_coeff(route);
  cdouble a[4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      a[i][j] = aq[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].to_complex();

  CoSpinorField out(tab.grid);
  for (std::size_t s = 0; s < tab.grid.volume; ++s)
    for (int i = 0; i < 4; ++i) {
      cdouble acc{0.0, 0.0};
      for (int j = 0; j < 4; ++j) acc += a[i][j] * v[static_cast<std::size_t>(j)].a[4 * s];
      out.a[16 * s + static_cast<std::size_t>(4 * i)] = acc;
    }
  return out;
}

double cofield_norm(const Grid4& g, const CoSpinorField& f) {
  const double w = g.cell_volume();
  double acc = 0.0;
  for (const cdouble& v : f.a) acc += std::norm(v);
  return std::sqrt(w * acc);
}

// ---------------------------------------------------------------------------
// Identity checkers
// ---------------------------------------------------------------------------

double weitzenboeck_residual(const GeometryTables& tab, const SpinorField& psi,
                             double laplacian_t) {
  const Grid4& g = tab.grid;
  const double nrm = field_norm(g, psi);
  if (nrm == 0.0) throw InputError("weitzenboeck_residual: psi must be nonzero");

  DiracOp box = build_dolbeault(tab);
  ConnectionLaplacian lap = build_connection_laplacian(tab, laplacian_t);

  SpinorField b1(g), b2(g), lp(g);
  stencil_apply(box.op, psi, b1);
  stencil_apply(box.op, b1, b2);
  lap.apply(psi, lp);

  const int eps[4] = {-1, 1, 1, -1};
  SpinorField defect(g);
  for (std::size_t s = 0; s < g.volume; ++s) {
    const double sc = 0.25 * tab.s[s];
    const double dt = 0.25 * tab.delta_theta[s];
    const double th = 0.125 * tab.theta_norm2[s];
    for (int c = 0; c < 4; ++c) {
      const cdouble x = psi.a[4 * s + static_cast<std::size_t>(c)];
      defect.a[4 * s + static_cast<std::size_t>(c)] =
          b2.a[4 * s + static_cast<std::size_t>(c)] - lp.a[4 * s + static_cast<std::size_t>(c)] -
          sc * x - dt * static_cast<double>(eps[c]) * x + th * x;
    }
  }
  return field_norm(g, defect) / nrm;
}

double TwistorNormIdentity::residual() const {
  return std::abs(lhs - rhs) / std::max(std::abs(lhs), h2);
}

TwistorNormIdentity twistor_norm_identity(const GeometryTables& tab, double t,
                                          const SpinorField& psi0) {
  require_degree0(psi0, "twistor_norm_identity");
  const Grid4& g = tab.grid;

  CoSpinorField p = twistor_p0(tab, t, psi0, TwistorRoute::HolomorphicSplit);

  DiracOp box = build_dolbeault(tab);
  SpinorField b1(g), b2(g);
  stencil_apply(box.op, psi0, b1);
  stencil_apply(box.op, b1, b2);

  const double w = g.cell_volume();
  double t_box2 = 0.0, t_s = 0.0, t_dth = 0.0, t_th2 = 0.0;
  for (std::size_t s = 0; s < g.volume; ++s) {
    double p2 = 0.0;
    for (int c = 0; c < 4; ++c) {
      const cdouble x = psi0.a[4 * s + static_cast<std::size_t>(c)];
      p2 += std::norm(x);
      t_box2 += (std::conj(b2.a[4 * s + static_cast<std::size_t>(c)]) * x).real();
    }
    t_s += tab.s[s] * p2;
    t_dth += tab.delta_theta[s] * p2;
    t_th2 += tab.theta_norm2[s] * p2;
  }
  const SpinorField thb = lee_clifford_mult(tab, b1, 1.0);
  const double t_thbox = field_dot(g, thb, psi0).real();

  TwistorNormIdentity out;
  const double lhsn = cofield_norm(g, p);
  out.lhs = lhsn * lhsn;
  out.rhs = 0.5 * w * t_box2 - 0.25 * w * t_s - (t / 4.0) * w * t_dth +
            ((t * t - 2.0 * t - 3.0) / 32.0) * w * t_th2 - ((t + 3.0) / 4.0) * t_thbox;
  double h2 = 0.0;
  for (double h : g.h) h2 = std::max(h2, h * h);
  out.h2 = h2;
  return out;
}

double twistor_pointwise_identity_residual(const GeometryTables& tab, double t,
                                           const SpinorField& psi0) {
  require_degree0(psi0, "twistor_pointwise_identity_residual");
  const Grid4& g = tab.grid;

  // Independent code paths: the full t-family Dirac operator, the full
  // per-direction covariant derivatives, and the reduced twistor slots.
  DiracOp dt = build_dirac_t(tab, t, TorsionRoute::GlobalCorrection);
  SpinorField dpsi(g);
  stencil_apply(dt.op, psi0, dpsi);

  std::array<SpinorField, 4> v;
  for (int i = 0; i < 4; ++i) {
    StencilOp nab = build_covariant_derivative(tab, t, i);
    v[static_cast<std::size_t>(i)] = SpinorField(g);
    stencil_apply(nab, psi0, v[static_cast<std::size_t>(i)]);
  }
  CoSpinorField p = twistor_p0(tab, t, psi0, TwistorRoute::HolomorphicSplit);

  double scale = 0.0, defect = 0.0;
  for (std::size_t s = 0; s < g.volume; ++s) {
    double nab2 = 0.0, d2 = 0.0, p2 = 0.0;
    for (int c = 0; c < 4; ++c) {
      for (int i = 0; i < 4; ++i)
        nab2 += std::norm(v[static_cast<std::size_t>(i)].a[4 * s + static_cast<std::size_t>(c)]);
      d2 += std::norm(dpsi.a[4 * s + static_cast<std::size_t>(c)]);
      p2 += std::norm(p.a[16 * s + static_cast<std::size_t>(4 * c)]);
    }
    scale = std::max(scale, nab2);
    defect = std::max(defect, std::abs(p2 - (nab2 - 0.5 * d2)));
  }
  return defect / std::max(scale, 1e-300);
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace {
inline cdouble hop_entry(const Hop& h, int r, int c) {
  // s Id + M(p,q) laid out as in kernels.hpp.
  const cdouble z{0.0, 0.0};
  const cdouble m[4][4] = {{h.s, -h.q, h.p, z},
                           {std::conj(h.q), h.s, z, h.p},
                           {-std::conj(h.p), z, h.s, h.q},
                           {z, -std::conj(h.p), -std::conj(h.q), h.s}};
  return m[r][c];
}

void emit_entry(std::ostream& os, std::size_t row, std::size_t col, cdouble v) {
  if (v.real() == 0.0 && v.imag() == 0.0) return;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu %zu %.17g %.17g\n", row, col, v.real(), v.imag());
  os << buf;
}
}  // namespace

void export_coo(const StencilOp& op, std::ostream& os) {
  const Grid4& g = op.grid;
  for (std::size_t s = 0; s < g.volume; ++s) {
    for (int r = 0; r < 4; ++r) {
      const std::size_t row = 4 * s + static_cast<std::size_t>(r);
      for (int c = 0; c < 4; ++c)
        emit_entry(os, row, 4 * s + static_cast<std::size_t>(c),
                   op.zeroth[16 * s + static_cast<std::size_t>(4 * c + r)]);
      for (int axis = 0; axis < 4; ++axis)
        for (int dir = 0; dir < 2; ++dir) {
          const std::size_t nb = g.nbr(axis, dir)[s];
          const Hop& h = op.hops[8 * s + static_cast<std::size_t>(2 * axis + dir)];
          for (int c = 0; c < 4; ++c)
            emit_entry(os, row, 4 * nb + static_cast<std::size_t>(c), hop_entry(h, r, c));
        }
    }
  }
}

}  // namespace hs
