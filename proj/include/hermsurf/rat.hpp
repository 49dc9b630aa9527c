#pragma once
// Exact rational and Gaussian-rational arithmetic used wherever algebraic
// identities must hold with zero residual.  Doubles are dyadic rationals, so
// lifting float inputs here and rounding once at the end lets two
// algebraically equal assembly paths produce bitwise-identical tables.

#include <array>
#include <complex>
#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace hs {

using BigQ = boost::multiprecision::cpp_rational;

// Exact lift of a double (doubles are dyadic rationals; construction from
// double in boost::multiprecision is exact).
inline BigQ rat_from_double(double x) { return BigQ(x); }

inline double rat_to_double(const BigQ& q) { return q.template convert_to<double>(); }

// Gaussian rational a + b i.
struct QC {
  BigQ re{0};
  BigQ im{0};

  QC() = default;
  QC(BigQ r) : re(std::move(r)) {}
  QC(BigQ r, BigQ i) : re(std::move(r)), im(std::move(i)) {}
  static QC of_int(long r, long i = 0) { return QC(BigQ(r), BigQ(i)); }
  static QC of_double(double r, double i = 0.0) {
    return QC(rat_from_double(r), rat_from_double(i));
  }

  bool is_zero() const { return re == 0 && im == 0; }
  QC conj() const { return QC(re, -im); }
  std::complex<double> to_complex() const {
    return {rat_to_double(re), rat_to_double(im)};
  }

  friend QC operator+(const QC& a, const QC& b) { return QC(a.re + b.re, a.im + b.im); }
  friend QC operator-(const QC& a, const QC& b) { return QC(a.re - b.re, a.im - b.im); }
  friend QC operator-(const QC& a) { return QC(-a.re, -a.im); }
  friend QC operator*(const QC& a, const QC& b) {
    return QC(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re);
  }
  friend QC operator*(const BigQ& s, const QC& a) { return QC(s * a.re, s * a.im); }
  friend bool operator==(const QC& a, const QC& b) { return a.re == b.re && a.im == b.im; }
  friend bool operator!=(const QC& a, const QC& b) { return !(a == b); }
  QC& operator+=(const QC& o) {
    re += o.re;
    im += o.im;
    return *this;
  }
  QC& operator-=(const QC& o) {
    re -= o.re;
    im -= o.im;
    return *this;
  }
};

inline QC qc_i() { return QC(BigQ(0), BigQ(1)); }

// Dense 4x4 Gaussian-rational matrix (spinor-space endomorphisms).
struct QMat4 {
  std::array<QC, 16> a{};

  QC& operator()(int r, int c) { return a[static_cast<size_t>(4 * r + c)]; }
  const QC& operator()(int r, int c) const { return a[static_cast<size_t>(4 * r + c)]; }

  static QMat4 zero() { return QMat4{}; }
  static QMat4 identity() {
    QMat4 m;
    for (int i = 0; i < 4; ++i) m(i, i) = QC::of_int(1);
    return m;
  }

  bool is_zero() const {
    for (const auto& v : a)
      if (!v.is_zero()) return false;
    return true;
  }

  QMat4 conj_transpose() const {
    QMat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = (*this)(c, r).conj();
    return m;
  }

  std::array<std::complex<double>, 16> to_complex() const {
    std::array<std::complex<double>, 16> m;
    for (size_t k = 0; k < 16; ++k) m[k] = a[k].to_complex();
    return m;
  }

  friend QMat4 operator+(const QMat4& x, const QMat4& y) {
    QMat4 m;
    for (size_t k = 0; k < 16; ++k) m.a[k] = x.a[k] + y.a[k];
    return m;
  }
  friend QMat4 operator-(const QMat4& x, const QMat4& y) {
    QMat4 m;
    for (size_t k = 0; k < 16; ++k) m.a[k] = x.a[k] - y.a[k];
    return m;
  }
  friend QMat4 operator-(const QMat4& x) {
    QMat4 m;
    for (size_t k = 0; k < 16; ++k) m.a[k] = -x.a[k];
    return m;
  }
  friend QMat4 operator*(const QC& s, const QMat4& x) {
    QMat4 m;
    for (size_t k = 0; k < 16; ++k) m.a[k] = s * x.a[k];
    return m;
  }
  friend QMat4 operator*(const BigQ& s, const QMat4& x) {
    QMat4 m;
    for (size_t k = 0; k < 16; ++k) m.a[k] = s * x.a[k];
    return m;
  }
  friend QMat4 operator*(const QMat4& x, const QMat4& y) {
    QMat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        QC s;
        for (int k = 0; k < 4; ++k) s += x(r, k) * y(k, c);
        m(r, c) = s;
      }
    return m;
  }
  friend bool operator==(const QMat4& x, const QMat4& y) { return x.a == y.a; }
  friend bool operator!=(const QMat4& x, const QMat4& y) { return !(x == y); }
  QMat4& operator+=(const QMat4& o) {
    for (size_t k = 0; k < 16; ++k) a[k] += o.a[k];
    return *this;
  }
};

// Exact 4-vector of Gaussian rationals (spinors, frame coefficients).
using QVec4 = std::array<QC, 4>;

inline QVec4 qmat_apply(const QMat4& m, const QVec4& v) {
  QVec4 out;
  for (int r = 0; r < 4; ++r) {
    QC s;
    for (int c = 0; c < 4; ++c) s += m(r, c) * v[static_cast<size_t>(c)];
    out[static_cast<size_t>(r)] = s;
  }
  return out;
}

}  // namespace hs
