#include "hermsurf/geometry.hpp"

#include <cmath>
#include <complex>
#include <cstring>

#include "hermsurf/errors.hpp"

namespace hs {

const int kJmat[4][4] = {
    {0, -1, 0, 0},
    {1, 0, 0, 0},
    {0, 0, 0, -1},
    {0, 0, 1, 0},
};

int pair6(int j, int k) {
  static const int tab[4][4] = {{-1, 0, 1, 2}, {0, -1, 3, 4}, {1, 3, -1, 5}, {2, 4, 5, -1}};
  return tab[j][k];
}

namespace {

using cd = std::complex<double>;

// ---------------------------------------------------------------------------
// Frame from the complex 2x2 Cholesky factor of H = [[a, c], [conj(c), b]]:
// H = L L^H, columns of (L^H)^{-1} are h-orthonormal, and the real frame is
// (e1, e2=J e1, e3, e4=J e3) obtained by unpacking (u1, u2) -> (Re u1, Im u1,
// Re u2, Im u2) and multiplying by i for the J-partners.

void unpack_frame(const cd& f11, const cd& f21, const cd& f12, const cd& f22, double* fr) {
  // column 1 = (f11, f21), column 2 = (f12, f22); rows are e_i, cols are mu.
  const cd i1 = cd(0, 1) * f11, i2 = cd(0, 1) * f21;
  const cd i3 = cd(0, 1) * f12, i4 = cd(0, 1) * f22;
  fr[0 * 4 + 0] = f11.real();
  fr[0 * 4 + 1] = f11.imag();
  fr[0 * 4 + 2] = f21.real();
  fr[0 * 4 + 3] = f21.imag();
  fr[1 * 4 + 0] = i1.real();
  fr[1 * 4 + 1] = i1.imag();
  fr[1 * 4 + 2] = i2.real();
  fr[1 * 4 + 3] = i2.imag();
  fr[2 * 4 + 0] = f12.real();
  fr[2 * 4 + 1] = f12.imag();
  fr[2 * 4 + 2] = f22.real();
  fr[2 * 4 + 3] = f22.imag();
  fr[3 * 4 + 0] = i3.real();
  fr[3 * 4 + 1] = i3.imag();
  fr[3 * 4 + 2] = i4.real();
  fr[3 * 4 + 3] = i4.imag();
}

void cholesky_frame(const std::array<double, 4>& hv, double* fr) {
  const double a = hv[0], b = hv[1];
  const cd c(hv[2], hv[3]);
  const double l11 = std::sqrt(a);
  const cd l21 = std::conj(c) / l11;
  const double l22 = std::sqrt(b - std::norm(l21));
  const cd f11 = cd(1.0 / l11, 0.0);
  const cd f12 = -std::conj(l21) / (l11 * l22);
  const cd f22 = cd(1.0 / l22, 0.0);
  unpack_frame(f11, cd(0, 0), f12, f22, fr);
}

// Frame plus its coordinate derivatives from the 1-jet of H.
// dfr[16*rho + 4*i + mu] = d_rho e_i^mu.
void cholesky_frame_jet(const HJet& hj, double* fr, double* dfr) {
  const double a = hj.a.v, b = hj.b.v;
  const cd c(hj.cre.v, hj.cim.v);
  const double l11 = std::sqrt(a);
  const cd l21 = std::conj(c) / l11;
  const double l22 = std::sqrt(b - std::norm(l21));
  const cd f11 = cd(1.0 / l11, 0.0);
  const cd f12 = -std::conj(l21) / (l11 * l22);
  const cd f22 = cd(1.0 / l22, 0.0);
  unpack_frame(f11, cd(0, 0), f12, f22, fr);
  for (int r = 0; r < 4; ++r) {
    const double da = hj.a.d[r], db = hj.b.d[r];
    const cd dc(hj.cre.d[r], hj.cim.d[r]);
    const double dl11 = da / (2.0 * l11);
    const cd dl21 = (std::conj(dc) * l11 - std::conj(c) * dl11) / (l11 * l11);
    const double dl22 = (db - 2.0 * (std::conj(l21) * dl21).real()) / (2.0 * l22);
    const cd df11 = cd(-dl11 / (l11 * l11), 0.0);
    const cd df12 = (-std::conj(dl21) * (l11 * l22) +
                     std::conj(l21) * (dl11 * l22 + l11 * dl22)) /
                    ((l11 * l22) * (l11 * l22));
    const cd df22 = cd(-dl22 / (l22 * l22), 0.0);
    unpack_frame(df11, cd(0, 0), df12, df22, dfr + 16 * r);
  }
}

// Gamma^l_{mu nu} = (1/2) ginv^{l r} (dg_{r nu, mu} + dg_{r mu, nu} - dg_{mu nu, r}).
void christoffel(const double* gi, const double* dg, double* gam) {
  for (int l = 0; l < 4; ++l)
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = 0; nu < 4; ++nu) {
        double s = 0;
        for (int r = 0; r < 4; ++r)
          s += gi[4 * l + r] * (dg[16 * mu + 4 * r + nu] + dg[16 * nu + 4 * r + mu] -
                                dg[16 * r + 4 * mu + nu]);
        gam[16 * l + 4 * mu + nu] = 0.5 * s;
      }
}

struct SiteIn {
  const double* g;       // 16
  const double* gi;      // 16
  const double* dg;      // 64  [16 rho + 4 mu + nu]
  const double* gam;     // 64  [16 l + 4 mu + nu]
  const double* dgam;    // 256 [64 sig + 16 l + 4 mu + nu]
  const double* fr;      // 16  [4 i + mu]
  const double* dfr;     // 64  [16 rho + 4 i + mu]
};

struct SiteOut {
  double coframe[16];
  double omega_form[16];
  double omega_conn[24];
  double omega_sym_defect;
  double frame_orthonormality;
  double theta_coord[4];
  double theta_frame[4];
  double theta_norm2;
  double s, s_star, k;
  double ricci_star[16];
  double domega_residual;
  double rfull[256];  // frame curvature, filled when requested
};

void assemble_site(const SiteIn& in, SiteOut& out, bool want_full) {
  const double* g = in.g;
  const double* gi = in.gi;

  // Coframe and Kaehler form.
  for (int i = 0; i < 4; ++i)
    for (int mu = 0; mu < 4; ++mu) {
      double s = 0;
      for (int nu = 0; nu < 4; ++nu) s += g[4 * mu + nu] * in.fr[4 * i + nu];
      out.coframe[4 * i + mu] = s;
    }
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu) {
      double s = 0;
      for (int r = 0; r < 4; ++r) s += g[4 * mu + r] * kJmat[r][nu];
      out.omega_form[4 * mu + nu] = s;
    }

  // Frame orthonormality diagnostic.
  double ortho = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int mu = 0; mu < 4; ++mu) s += in.fr[4 * i + mu] * out.coframe[4 * j + mu];
      ortho = std::max(ortho, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  out.frame_orthonormality = ortho;

  // Frame connection coefficients omega_{ijk} = g(nabla_{e_i} e_j, e_k),
  // antisymmetrized in (j,k).
  double om_raw[4][4][4];
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double v[4];
      for (int nu = 0; nu < 4; ++nu) {
        double s = 0;
        for (int mu = 0; mu < 4; ++mu) {
          double cov = in.dfr[16 * mu + 4 * j + nu];
          for (int l = 0; l < 4; ++l) cov += in.gam[16 * nu + 4 * mu + l] * in.fr[4 * j + l];
          s += in.fr[4 * i + mu] * cov;
        }
        v[nu] = s;
      }
      for (int kk = 0; kk < 4; ++kk) {
        double s = 0;
        for (int nu = 0; nu < 4; ++nu) s += v[nu] * out.coframe[4 * kk + nu];
        om_raw[i][j][kk] = s;
      }
    }
  double defect = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int kk = j + 1; kk < 4; ++kk) {
        defect = std::max(defect, std::abs(om_raw[i][j][kk] + om_raw[i][kk][j]));
        out.omega_conn[6 * i + pair6(j, kk)] = 0.5 * (om_raw[i][j][kk] - om_raw[i][kk][j]);
      }
  out.omega_sym_defect = defect;

  // Lee form: theta = delta(Omega) o J.
  double dOm[4][4][4];  // d_rho Omega_{mu nu}
  for (int r = 0; r < 4; ++r)
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = 0; nu < 4; ++nu) {
        double s = 0;
        for (int l = 0; l < 4; ++l) s += in.dg[16 * r + 4 * mu + l] * kJmat[l][nu];
        dOm[r][mu][nu] = s;
      }
  double deltaOm[4];
  for (int nu = 0; nu < 4; ++nu) {
    double s = 0;
    for (int r = 0; r < 4; ++r)
      for (int mu = 0; mu < 4; ++mu) {
        double cov = dOm[r][mu][nu];
        for (int l = 0; l < 4; ++l)
          cov -= in.gam[16 * l + 4 * r + mu] * out.omega_form[4 * l + nu] +
                 in.gam[16 * l + 4 * r + nu] * out.omega_form[4 * mu + l];
        s += gi[4 * r + mu] * cov;
      }
    deltaOm[nu] = -s;
  }
  for (int nu = 0; nu < 4; ++nu) {
    double s = 0;
    for (int mu = 0; mu < 4; ++mu) s += deltaOm[mu] * kJmat[mu][nu];
    out.theta_coord[nu] = s;
  }
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int mu = 0; mu < 4; ++mu) s += out.theta_coord[mu] * in.fr[4 * i + mu];
    out.theta_frame[i] = s;
  }
  {
    double s = 0;
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = 0; nu < 4; ++nu) s += gi[4 * mu + nu] * out.theta_coord[mu] * out.theta_coord[nu];
    out.theta_norm2 = s;
  }

  // dOmega = theta ^ Omega residual (3-form components, mu<nu<rho).
  double dres = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      for (int c = b + 1; c < 4; ++c) {
        double lhs = dOm[a][b][c] - dOm[b][a][c] + dOm[c][a][b];
        double rhs = out.theta_coord[a] * out.omega_form[4 * b + c] -
                     out.theta_coord[b] * out.omega_form[4 * a + c] +
                     out.theta_coord[c] * out.omega_form[4 * a + b];
        dres = std::max(dres, std::abs(lhs - rhs));
      }
  out.domega_residual = dres;

  // Curvature R_{mu nu lam sig} = g_{sig kap} (dGamma + Gamma Gamma terms).
  double R[4][4][4][4];
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu) {
      if (nu < mu) {
        for (int l = 0; l < 4; ++l)
          for (int w = 0; w < 4; ++w) R[mu][nu][l][w] = -R[nu][mu][l][w];
        continue;
      }
      if (nu == mu) {
        for (int l = 0; l < 4; ++l)
          for (int w = 0; w < 4; ++w) R[mu][nu][l][w] = 0.0;
        continue;
      }
      for (int lam = 0; lam < 4; ++lam) {
        double up[4];
        for (int kap = 0; kap < 4; ++kap) {
          double s = in.dgam[64 * mu + 16 * kap + 4 * nu + lam] -
                     in.dgam[64 * nu + 16 * kap + 4 * mu + lam];
          for (int r = 0; r < 4; ++r)
            s += in.gam[16 * kap + 4 * mu + r] * in.gam[16 * r + 4 * nu + lam] -
                 in.gam[16 * kap + 4 * nu + r] * in.gam[16 * r + 4 * mu + lam];
          up[kap] = s;
        }
        for (int w = 0; w < 4; ++w) {
          double s = 0;
          for (int kap = 0; kap < 4; ++kap) s += g[4 * w + kap] * up[kap];
          R[mu][nu][lam][w] = s;
        }
      }
    }

  // K^{mu sig} = sum_i e_i^mu (J e_i)^sig = ginv^{mu r} J^sig_r.
  double K[4][4];
  for (int mu = 0; mu < 4; ++mu)
    for (int sg = 0; sg < 4; ++sg) {
      double s = 0;
      for (int r = 0; r < 4; ++r) s += gi[4 * mu + r] * kJmat[sg][r];
      K[mu][sg] = s;
    }

  double svals = 0, sstar = 0;
  double T[4][4];  // T_{nu lam} = R_{mu nu lam sig} K^{mu sig}
  for (int nu = 0; nu < 4; ++nu)
    for (int lam = 0; lam < 4; ++lam) {
      double s = 0;
      for (int mu = 0; mu < 4; ++mu)
        for (int sg = 0; sg < 4; ++sg) s += R[mu][nu][lam][sg] * K[mu][sg];
      T[nu][lam] = s;
    }
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu)
      for (int lam = 0; lam < 4; ++lam)
        for (int sg = 0; sg < 4; ++sg)
          svals += gi[4 * mu + sg] * gi[4 * nu + lam] * R[mu][nu][lam][sg];
  for (int nu = 0; nu < 4; ++nu)
    for (int lam = 0; lam < 4; ++lam) sstar += T[nu][lam] * K[nu][lam];
  out.s = svals;
  out.s_star = sstar;
  out.k = 0.5 * (3.0 * sstar - svals);

  // rho*(X, Y) = R_{mu nu lam sig} K^{mu sig} J^lam_kap X^nu Y^kap, in frame
  // components.
  double rs_coord[4][4];
  for (int nu = 0; nu < 4; ++nu)
    for (int kap = 0; kap < 4; ++kap) {
      double s = 0;
      for (int lam = 0; lam < 4; ++lam) s += T[nu][lam] * kJmat[lam][kap];
      rs_coord[nu][kap] = s;
    }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int nu = 0; nu < 4; ++nu)
        for (int kap = 0; kap < 4; ++kap)
          s += in.fr[4 * i + nu] * in.fr[4 * j + kap] * rs_coord[nu][kap];
      out.ricci_star[4 * i + j] = s;
    }

  if (want_full) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int kk = 0; kk < 4; ++kk)
          for (int l = 0; l < 4; ++l) {
            double s = 0;
            for (int mu = 0; mu < 4; ++mu)
              for (int nu = 0; nu < 4; ++nu)
                for (int lam = 0; lam < 4; ++lam)
                  for (int sg = 0; sg < 4; ++sg)
                    s += in.fr[4 * i + mu] * in.fr[4 * j + nu] * in.fr[4 * kk + lam] *
                         in.fr[4 * l + sg] * R[mu][nu][lam][sg];
            out.rfull[64 * i + 16 * j + 4 * kk + l] = s;
          }
  }
}

// Analytic per-point inputs from the metric jets.  Fills g, ginv, dg, gamma,
// dgamma, frame, dframe (caller-provided storage).
void analytic_site_inputs(const MetricSpec& spec, const std::array<double, 4>& x,
                          const std::array<double, 4>& L, double* g, double* gi, double* dg,
                          double* gam, double* dgam, double* fr, double* dfr, double* rho) {
  HJet hj = h_jet(spec, x, L);
  // Jets of the 16 metric entries and of the inverse entries.
  Jet2 Z = Jet2::constant(0.0);
  Jet2 G[4][4];
  auto fill_pattern = [](const Jet2& A, const Jet2& B, const Jet2& CR, const Jet2& CI,
                         const Jet2& zero, Jet2 out[4][4]) {
    out[0][0] = A;    out[0][1] = zero;                 out[0][2] = CR;   out[0][3] = jet_scale(-1.0, CI);
    out[1][0] = zero; out[1][1] = A;                    out[1][2] = CI;   out[1][3] = CR;
    out[2][0] = CR;   out[2][1] = CI;                   out[2][2] = B;    out[2][3] = zero;
    out[3][0] = jet_scale(-1.0, CI); out[3][1] = CR;    out[3][2] = zero; out[3][3] = B;
  };
  fill_pattern(hj.a, hj.b, hj.cre, hj.cim, Z, G);
  Jet2 det2 = hj.a * hj.b + jet_scale(-1.0, hj.cre * hj.cre + hj.cim * hj.cim);
  Jet2 idet = jet_inv(det2);
  Jet2 Gi[4][4];
  fill_pattern(hj.b * idet, hj.a * idet, jet_scale(-1.0, hj.cre * idet),
               jet_scale(-1.0, hj.cim * idet), Z, Gi);
  *rho = det2.v;

  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu) {
      g[4 * mu + nu] = G[mu][nu].v;
      gi[4 * mu + nu] = Gi[mu][nu].v;
      for (int r = 0; r < 4; ++r) dg[16 * r + 4 * mu + nu] = G[mu][nu].d[r];
    }
  christoffel(gi, dg, gam);
  // dGamma^l_{mu nu}/d sig from dginv and the metric Hessian.
  for (int sg = 0; sg < 4; ++sg)
    for (int l = 0; l < 4; ++l)
      for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
          double s = 0;
          for (int r = 0; r < 4; ++r) {
            s += Gi[l][r].d[sg] * (G[r][nu].d[mu] + G[r][mu].d[nu] - G[mu][nu].d[r]);
            s += Gi[l][r].v * (G[r][nu].h[4 * sg + mu] + G[r][mu].h[4 * sg + nu] -
                               G[mu][nu].h[4 * sg + r]);
          }
          dgam[64 * sg + 16 * l + 4 * mu + nu] = 0.5 * s;
        }
  cholesky_frame_jet(hj, fr, dfr);
}

}  // namespace

GeometryTables compute_tables(const Grid4& grid, const MetricSpec& spec, bool keep_curvature) {
  validate_spd(spec, grid);
  const std::size_t V = grid.volume;
  GeometryTables t;
  t.grid = grid;
  t.analytic = spec.analytic;
  t.g.resize(16 * V);
  t.ginv.resize(16 * V);
  t.dg.resize(64 * V);
  t.gamma.resize(64 * V);
  t.frame.resize(16 * V);
  t.coframe.resize(16 * V);
  t.omega_form.resize(16 * V);
  t.rho.resize(V);
  t.omega_conn.resize(24 * V);
  t.theta_coord.resize(4 * V);
  t.theta_frame.resize(4 * V);
  t.theta_norm2.resize(V);
  t.s.resize(V);
  t.s_star.resize(V);
  t.k.resize(V);
  t.ricci_star.resize(16 * V);
  t.delta_theta.resize(V);
  t.dtheta.resize(6 * V);
  t.eq3_residual.resize(V);
  t.domega_residual.resize(V);
  if (keep_curvature) t.full_curv.resize(256 * V);

  std::vector<double> dframe(64 * V);

  if (spec.analytic) {
    std::vector<double> dgam(256);
    for (std::size_t sidx = 0; sidx < V; ++sidx) {
      analytic_site_inputs(spec, grid.point_of(sidx), grid.periods, &t.g[16 * sidx],
                           &t.ginv[16 * sidx], &t.dg[64 * sidx], &t.gamma[64 * sidx],
                           dgam.data(), &t.frame[16 * sidx], &dframe[64 * sidx],
                           &t.rho[sidx]);
      SiteIn in{&t.g[16 * sidx],    &t.ginv[16 * sidx], &t.dg[64 * sidx], &t.gamma[64 * sidx],
                dgam.data(),        &t.frame[16 * sidx], &dframe[64 * sidx]};
      SiteOut out;
      assemble_site(in, out, keep_curvature);
      std::memcpy(&t.coframe[16 * sidx], out.coframe, sizeof(out.coframe));
      std::memcpy(&t.omega_form[16 * sidx], out.omega_form, sizeof(out.omega_form));
      std::memcpy(&t.omega_conn[24 * sidx], out.omega_conn, sizeof(out.omega_conn));
      std::memcpy(&t.theta_coord[4 * sidx], out.theta_coord, sizeof(out.theta_coord));
      std::memcpy(&t.theta_frame[4 * sidx], out.theta_frame, sizeof(out.theta_frame));
      std::memcpy(&t.ricci_star[16 * sidx], out.ricci_star, sizeof(out.ricci_star));
      t.theta_norm2[sidx] = out.theta_norm2;
      t.s[sidx] = out.s;
      t.s_star[sidx] = out.s_star;
      t.k[sidx] = out.k;
      t.domega_residual[sidx] = out.domega_residual;
      t.max_omega_sym_defect = std::max(t.max_omega_sym_defect, out.omega_sym_defect);
      t.max_frame_orthonormality =
          std::max(t.max_frame_orthonormality, out.frame_orthonormality);
      if (keep_curvature)
        std::memcpy(&t.full_curv[256 * sidx], out.rfull, sizeof(out.rfull));
    }
  } else {
    // Pass 1: pointwise values.
    for (std::size_t sidx = 0; sidx < V; ++sidx) {
      auto hv = h_values(spec, grid.point_of(sidx), grid.periods);
      auto gm = g_from_h(hv);
      const double d2 = hv[0] * hv[1] - (hv[2] * hv[2] + hv[3] * hv[3]);
      auto gmi = g_from_h({hv[1] / d2, hv[0] / d2, -hv[2] / d2, -hv[3] / d2});
      std::memcpy(&t.g[16 * sidx], gm.data(), 16 * sizeof(double));
      std::memcpy(&t.ginv[16 * sidx], gmi.data(), 16 * sizeof(double));
      t.rho[sidx] = d2;
      cholesky_frame(hv, &t.frame[16 * sidx]);
    }
    // Pass 2: central differences of g and frame; Christoffels.
    for (std::size_t sidx = 0; sidx < V; ++sidx) {
      for (int r = 0; r < 4; ++r) {
        const std::size_t sp = grid.nbr(r, 0)[sidx], sm = grid.nbr(r, 1)[sidx];
        const double w = 1.0 / (2.0 * grid.h[r]);
        for (int e = 0; e < 16; ++e) {
          t.dg[64 * sidx + 16 * r + e] = (t.g[16 * sp + e] - t.g[16 * sm + e]) * w;
          dframe[64 * sidx + 16 * r + e] = (t.frame[16 * sp + e] - t.frame[16 * sm + e]) * w;
        }
      }
      christoffel(&t.ginv[16 * sidx], &t.dg[64 * sidx], &t.gamma[64 * sidx]);
    }
    // Pass 3: central differences of Gamma; per-site assembly.
    std::vector<double> dgam(256);
    for (std::size_t sidx = 0; sidx < V; ++sidx) {
      for (int r = 0; r < 4; ++r) {
        const std::size_t sp = grid.nbr(r, 0)[sidx], sm = grid.nbr(r, 1)[sidx];
        const double w = 1.0 / (2.0 * grid.h[r]);
        for (int e = 0; e < 64; ++e)
          dgam[static_cast<std::size_t>(64 * r + e)] =
              (t.gamma[64 * sp + e] - t.gamma[64 * sm + e]) * w;
      }
      SiteIn in{&t.g[16 * sidx],    &t.ginv[16 * sidx], &t.dg[64 * sidx], &t.gamma[64 * sidx],
                dgam.data(),        &t.frame[16 * sidx], &dframe[64 * sidx]};
      SiteOut out;
      assemble_site(in, out, keep_curvature);
      std::memcpy(&t.coframe[16 * sidx], out.coframe, sizeof(out.coframe));
      std::memcpy(&t.omega_form[16 * sidx], out.omega_form, sizeof(out.omega_form));
      std::memcpy(&t.omega_conn[24 * sidx], out.omega_conn, sizeof(out.omega_conn));
      std::memcpy(&t.theta_coord[4 * sidx], out.theta_coord, sizeof(out.theta_coord));
      std::memcpy(&t.theta_frame[4 * sidx], out.theta_frame, sizeof(out.theta_frame));
      std::memcpy(&t.ricci_star[16 * sidx], out.ricci_star, sizeof(out.ricci_star));
      t.theta_norm2[sidx] = out.theta_norm2;
      t.s[sidx] = out.s;
      t.s_star[sidx] = out.s_star;
      t.k[sidx] = out.k;
      t.domega_residual[sidx] = out.domega_residual;
      t.max_omega_sym_defect = std::max(t.max_omega_sym_defect, out.omega_sym_defect);
      t.max_frame_orthonormality =
          std::max(t.max_frame_orthonormality, out.frame_orthonormality);
      if (keep_curvature)
        std::memcpy(&t.full_curv[256 * sidx], out.rfull, sizeof(out.rfull));
    }
  }

  // Shared pass: delta(theta), d(theta), and the curvature-relation residual,
  // from central differences of the theta table.
  for (std::size_t sidx = 0; sidx < V; ++sidx) {
    double dth[4][4];
    for (int r = 0; r < 4; ++r) {
      const std::size_t sp = grid.nbr(r, 0)[sidx], sm = grid.nbr(r, 1)[sidx];
      const double w = 1.0 / (2.0 * grid.h[r]);
      for (int nu = 0; nu < 4; ++nu)
        dth[r][nu] = (t.theta_coord[4 * sp + nu] - t.theta_coord[4 * sm + nu]) * w;
    }
    double dt = 0;
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = 0; nu < 4; ++nu) {
        double cov = dth[mu][nu];
        for (int l = 0; l < 4; ++l)
          cov -= t.gamma[64 * sidx + 16 * l + 4 * mu + nu] * t.theta_coord[4 * sidx + l];
        dt += t.ginv[16 * sidx + 4 * mu + nu] * cov;
      }
    t.delta_theta[sidx] = -dt;
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = mu + 1; nu < 4; ++nu)
        t.dtheta[6 * sidx + pair6(mu, nu)] = dth[mu][nu] - dth[nu][mu];
    t.eq3_residual[sidx] =
        t.s[sidx] - t.s_star[sidx] - 2.0 * t.delta_theta[sidx] - t.theta_norm2[sidx];
  }
  return t;
}

PointGeometry geometry_at_point(const MetricSpec& spec, const std::array<double, 4>& x,
                                const std::array<double, 4>& periods) {
  PointGeometry p{};
  std::array<double, 64> dg{}, dfr{};
  std::array<double, 256> dgam{};
  analytic_site_inputs(spec, x, periods, p.g.data(), p.ginv.data(), dg.data(), p.gamma.data(),
                       dgam.data(), p.frame.data(), dfr.data(), &p.rho);
  SiteIn in{p.g.data(), p.ginv.data(), dg.data(), p.gamma.data(), dgam.data(), p.frame.data(),
            dfr.data()};
  SiteOut out;
  assemble_site(in, out, false);
  std::memcpy(p.coframe.data(), out.coframe, sizeof(out.coframe));
  std::memcpy(p.omega_form.data(), out.omega_form, sizeof(out.omega_form));
  std::memcpy(p.ricci_star.data(), out.ricci_star, sizeof(out.ricci_star));
  std::memcpy(p.theta_coord.data(), out.theta_coord, sizeof(out.theta_coord));
  std::memcpy(p.theta_frame.data(), out.theta_frame, sizeof(out.theta_frame));
  p.s = out.s;
  p.s_star = out.s_star;
  p.k = out.k;
  p.theta_norm2 = out.theta_norm2;
  p.domega_residual = out.domega_residual;
  return p;
}

double delta_theta_at_point(const MetricSpec& spec, const std::array<double, 4>& x,
                            const std::array<double, 4>& periods, double fd_step) {
  PointGeometry c = geometry_at_point(spec, x, periods);
  double dth[4][4];
  for (int r = 0; r < 4; ++r) {
    auto xp = x, xm = x;
    xp[r] += fd_step;
    xm[r] -= fd_step;
    PointGeometry pp = geometry_at_point(spec, xp, periods);
    PointGeometry pm = geometry_at_point(spec, xm, periods);
    for (int nu = 0; nu < 4; ++nu)
      dth[r][nu] = (pp.theta_coord[nu] - pm.theta_coord[nu]) / (2.0 * fd_step);
  }
  double dt = 0;
  for (int mu = 0; mu < 4; ++mu)
    for (int nu = 0; nu < 4; ++nu) {
      double cov = dth[mu][nu];
      for (int l = 0; l < 4; ++l) cov -= c.gamma[16 * l + 4 * mu + nu] * c.theta_coord[l];
      dt += c.ginv[4 * mu + nu] * cov;
    }
  return -dt;
}

std::array<double, 64> hermitian_torsion_site(const GeometryTables& t, std::size_t site,
                                              double tpar) {
  const double q1 = (tpar + 1.0) / 4.0, q2 = (tpar - 1.0) / 4.0;
  const double* g = &t.g[16 * site];
  const double* gi = &t.ginv[16 * site];
  const double* th = &t.theta_coord[4 * site];
  const double* Om = &t.omega_form[16 * site];
  double thJ[4], thup[4], Jthup[4];
  for (int nu = 0; nu < 4; ++nu) {
    double s = 0;
    for (int r = 0; r < 4; ++r) s += th[r] * kJmat[r][nu];
    thJ[nu] = s;
  }
  for (int l = 0; l < 4; ++l) {
    double s = 0;
    for (int r = 0; r < 4; ++r) s += gi[4 * l + r] * th[r];
    thup[l] = s;
  }
  for (int l = 0; l < 4; ++l) {
    double s = 0;
    for (int r = 0; r < 4; ++r) s += kJmat[l][r] * thup[r];
    Jthup[l] = s;
  }
  std::array<double, 64> A{};
  for (int l = 0; l < 4; ++l)
    for (int mu = 0; mu < 4; ++mu)
      for (int nu = 0; nu < 4; ++nu) {
        double v = 0;
        if (l == mu) v -= q1 * th[nu];
        v += q2 * thJ[nu] * kJmat[l][mu];
        v -= (tpar / 2.0) * thJ[mu] * kJmat[l][nu];
        v += q1 * g[4 * mu + nu] * thup[l];
        v -= q2 * Om[4 * mu + nu] * Jthup[l];
        A[static_cast<std::size_t>(16 * l + 4 * mu + nu)] = v;
      }
  return A;
}

ConnectionResiduals hermitian_connection_residuals(const GeometryTables& t, double tpar) {
  ConnectionResiduals res;
  const std::size_t V = t.grid.volume;
  for (std::size_t sidx = 0; sidx < V; ++sidx) {
    auto A = hermitian_torsion_site(t, sidx, tpar);
    double Gt[64];
    for (int e = 0; e < 64; ++e) Gt[e] = t.gamma[64 * sidx + e] + A[static_cast<std::size_t>(e)];
    const double* g = &t.g[16 * sidx];
    const double* dg = &t.dg[64 * sidx];
    const double* Om = &t.omega_form[16 * sidx];
    for (int r = 0; r < 4; ++r)
      for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
          double vg = dg[16 * r + 4 * mu + nu];
          double vO = 0;
          for (int l = 0; l < 4; ++l) vO += dg[16 * r + 4 * mu + l] * kJmat[l][nu];
          double vJ = 0;
          for (int l = 0; l < 4; ++l) {
            vg -= Gt[16 * l + 4 * r + mu] * g[4 * l + nu] + Gt[16 * l + 4 * r + nu] * g[4 * mu + l];
            vO -= Gt[16 * l + 4 * r + mu] * Om[4 * l + nu] + Gt[16 * l + 4 * r + nu] * Om[4 * mu + l];
            vJ += Gt[16 * mu + 4 * r + l] * kJmat[l][nu] - kJmat[mu][l] * Gt[16 * l + 4 * r + nu];
          }
          res.grad_g = std::max(res.grad_g, std::abs(vg));
          res.grad_Omega = std::max(res.grad_Omega, std::abs(vO));
          res.grad_J = std::max(res.grad_J, std::abs(vJ));
        }
  }
  return res;
}

double curvature_pair_symmetry_defect(const GeometryTables& t) {
  if (t.full_curv.empty()) throw InputError("curvature tables were not retained");
  double m = 0;
  const std::size_t V = t.grid.volume;
  for (std::size_t sidx = 0; sidx < V; ++sidx) {
    const double* R = &t.full_curv[256 * sidx];
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int kk = 0; kk < 4; ++kk)
          for (int l = 0; l < 4; ++l)
            m = std::max(m, std::abs(R[64 * i + 16 * j + 4 * kk + l] -
                                     R[64 * kk + 16 * l + 4 * i + j]));
  }
  return m;
}

double domega_residual_vs_exact(const GeometryTables& t, const MetricSpec& spec) {
  const Grid4& grid = t.grid;
  double worst = 0.0;
  for (std::size_t sidx = 0; sidx < grid.volume; ++sidx) {
    const PointGeometry p = geometry_at_point(spec, grid.point_of(sidx), grid.periods);
    // dOmega_{rho mu nu} components from the tables' dg (Omega = g J).
    double dOm[4][4][4];
    for (int r = 0; r < 4; ++r)
      for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) {
          double x = 0;
          for (int l = 0; l < 4; ++l) x += t.dg[64 * sidx + 16 * r + 4 * mu + l] * kJmat[l][nu];
          dOm[r][mu][nu] = x;
        }
    const double* Om = &t.omega_form[16 * sidx];
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        for (int c = b + 1; c < 4; ++c) {
          const double lhs = dOm[a][b][c] - dOm[b][a][c] + dOm[c][a][b];
          const double rhs = p.theta_coord[a] * Om[4 * b + c] -
                             p.theta_coord[b] * Om[4 * a + c] +
                             p.theta_coord[c] * Om[4 * a + b];
          worst = std::max(worst, std::abs(lhs - rhs));
        }
  }
  return worst;
}

}  // namespace hs
