#include "hermsurf/clifford.hpp"

namespace hs {

namespace {

QMat4 from_int_table(const int re[4][4], const int im[4][4]) {
  QMat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = QC::of_int(re[r][c], im[r][c]);
  return m;
}

CliffordRep build_rep() {
  CliffordRep rep;
  {
    const int re[4][4] = {{0, 0, 1, 0}, {0, 0, 0, 1}, {-1, 0, 0, 0}, {0, -1, 0, 0}};
    const int im[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
    rep.gamma[0] = from_int_table(re, im);
  }
  {
    const int re[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
    const int im[4][4] = {{0, 0, -1, 0}, {0, 0, 0, -1}, {-1, 0, 0, 0}, {0, -1, 0, 0}};
    rep.gamma[1] = from_int_table(re, im);
  }
  {
    const int re[4][4] = {{0, -1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, -1, 0}};
    const int im[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
    rep.gamma[2] = from_int_table(re, im);
  }
  {
    const int re[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
    const int im[4][4] = {{0, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, -1}, {0, 0, -1, 0}};
    rep.gamma[3] = from_int_table(re, im);
  }
  rep.omega_k = -(rep.gamma[0] * rep.gamma[1] + rep.gamma[2] * rep.gamma[3]);
  rep.volume = rep.gamma[0] * rep.gamma[1] * rep.gamma[2] * rep.gamma[3];
  {
    const int re[4][4] = {{0, 0, 0, -1}, {0, 0, -1, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}};
    const int im[4][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
    rep.jmat = from_int_table(re, im);
  }
  return rep;
}

}  // namespace

const CliffordRep& clifford() {
  static const CliffordRep rep = build_rep();
  return rep;
}

QMat4 sigma_projector(int r) {
  QMat4 m;
  if (r == 0) {
    m(0, 0) = QC::of_int(1);
  } else if (r == 1) {
    m(1, 1) = QC::of_int(1);
    m(2, 2) = QC::of_int(1);
  } else {
    m(3, 3) = QC::of_int(1);
  }
  return m;
}

QVec4 j_apply(const QVec4& v) { return {-v[1], v[0], -v[3], v[2]}; }

QMat4 gamma_of(const QVec4& v) {
  const auto& rep = clifford();
  QMat4 m;
  for (int i = 0; i < 4; ++i) {
    if (v[static_cast<size_t>(i)].is_zero()) continue;
    m += v[static_cast<size_t>(i)] * rep.gamma[static_cast<size_t>(i)];
  }
  return m;
}

QMat4 p_gamma(const QVec4& x) {
  const BigQ half(1, 2);
  QMat4 gx = gamma_of(x);
  QMat4 gjx = gamma_of(j_apply(x));
  return half * (gx - qc_i() * gjx);
}

QMat4 pbar_gamma(const QVec4& x) {
  const BigQ half(1, 2);
  QMat4 gx = gamma_of(x);
  QMat4 gjx = gamma_of(j_apply(x));
  return half * (gx + qc_i() * gjx);
}

QMat4 torsion_endo(const BigQ& t, const QVec4& theta, int i) {
  const auto& rep = clifford();
  QVec4 ei{};
  ei[static_cast<size_t>(i)] = QC::of_int(1);
  QVec4 jei = {QC{}, QC{}, QC{}, QC{}};
  jei[static_cast<size_t>(j_index[i])] = QC::of_int(j_sign[i]);
  // theta(J e_i) = j_sign[i] * theta_{j_index[i]}
  QC theta_jei = BigQ(j_sign[i]) * theta[static_cast<size_t>(j_index[i])];

  QMat4 out = (t + 1) * (gamma_of(ei) * gamma_of(theta));
  out += (t - 1) * (gamma_of(jei) * gamma_of(j_apply(theta)));
  out += (BigQ(2) * t * theta[static_cast<size_t>(i)]) * QMat4::identity();
  out += (BigQ(2) * t) * (theta_jei * rep.omega_k);
  return BigQ(1, 8) * out;
}

QMat4 dirac_t_correction(const BigQ& t, const QVec4& theta) {
  const auto& rep = clifford();
  QMat4 out = (BigQ(-3) * t / 4) * gamma_of(theta);
  out += (-(BigQ(2) * t - 1) / 4) * (gamma_of(j_apply(theta)) * rep.omega_k);
  return out;
}

QMat4 dolbeault_correction(const QVec4& theta) {
  const auto& rep = clifford();
  QMat4 out = BigQ(1, 4) * gamma_of(theta);
  out += BigQ(1, 4) * (gamma_of(j_apply(theta)) * rep.omega_k);
  return out;
}

QMat4 spin_zeroth(const FrameConn& om, int i) {
  const auto& rep = clifford();
  QMat4 acc;
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k) {
      const BigQ& w = om[static_cast<size_t>(i)][static_cast<size_t>(j)][static_cast<size_t>(k)];
      if (w == 0) continue;
      acc += w * (rep.gamma[static_cast<size_t>(j)] * rep.gamma[static_cast<size_t>(k)]);
    }
  return BigQ(1, 4) * acc;
}

QVec4 clifford_trace(const CotanSpinor& tau) {
  const auto& rep = clifford();
  QVec4 out{};
  for (int i = 0; i < 4; ++i) {
    QVec4 gi = qmat_apply(rep.gamma[static_cast<size_t>(i)], tau[static_cast<size_t>(i)]);
    for (int c = 0; c < 4; ++c) out[static_cast<size_t>(c)] += gi[static_cast<size_t>(c)];
  }
  return out;
}

CotanSpinor twistor_project_rank1(int r, const QVec4& alpha, const QVec4& psi) {
  const BigQ c1 = BigQ(1) / (2 * (r + 1));
  const BigQ c2 = BigQ(1) / (6 - 2 * r);
  QMat4 p_alpha = p_gamma(alpha);
  QMat4 pbar_alpha = pbar_gamma(alpha);
  QVec4 pa_psi = qmat_apply(p_alpha, psi);
  QVec4 pba_psi = qmat_apply(pbar_alpha, psi);

  CotanSpinor out;
  for (int i = 0; i < 4; ++i) {
    QVec4 ei{};
    ei[static_cast<size_t>(i)] = QC::of_int(1);
    QVec4 term1 = qmat_apply(pbar_gamma(ei), pa_psi);
    QVec4 term2 = qmat_apply(p_gamma(ei), pba_psi);
    for (int c = 0; c < 4; ++c) {
      QC v = alpha[static_cast<size_t>(i)] * psi[static_cast<size_t>(c)];
      v += c1 * term1[static_cast<size_t>(c)];
      v += c2 * term2[static_cast<size_t>(c)];
      out[static_cast<size_t>(i)][static_cast<size_t>(c)] = v;
    }
  }
  return out;
}

CotanSpinor twistor_project(int r, const CotanSpinor& tau) {
  CotanSpinor out{};
  for (int i = 0; i < 4; ++i) {
    QVec4 ei{};
    ei[static_cast<size_t>(i)] = QC::of_int(1);
    CotanSpinor piece = twistor_project_rank1(r, ei, tau[static_cast<size_t>(i)]);
    for (int k = 0; k < 4; ++k)
      for (int c = 0; c < 4; ++c)
        out[static_cast<size_t>(k)][static_cast<size_t>(c)] +=
            piece[static_cast<size_t>(k)][static_cast<size_t>(c)];
  }
  return out;
}

}  // namespace hs
