#include "hermsurf/expr.hpp"

#include <cmath>
#include <random>

#include "hermsurf/errors.hpp"

namespace hs {

Jet2 operator+(const Jet2& a, const Jet2& b) {
  Jet2 j;
  j.v = a.v + b.v;
  for (int i = 0; i < 4; ++i) j.d[i] = a.d[i] + b.d[i];
  for (int i = 0; i < 16; ++i) j.h[i] = a.h[i] + b.h[i];
  return j;
}

Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 j;
  j.v = a.v * b.v;
  for (int i = 0; i < 4; ++i) j.d[i] = a.d[i] * b.v + a.v * b.d[i];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      j.h[4 * r + c] = a.h[4 * r + c] * b.v + a.d[r] * b.d[c] + a.d[c] * b.d[r] +
                       a.v * b.h[4 * r + c];
  return j;
}

Jet2 jet_scale(double s, const Jet2& a) {
  Jet2 j;
  j.v = s * a.v;
  for (int i = 0; i < 4; ++i) j.d[i] = s * a.d[i];
  for (int i = 0; i < 16; ++i) j.h[i] = s * a.h[i];
  return j;
}

namespace {

Jet2 jet_chain(const Jet2& a, double f, double fp, double fpp) {
  Jet2 j;
  j.v = f;
  for (int i = 0; i < 4; ++i) j.d[i] = fp * a.d[i];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      j.h[4 * r + c] = fpp * a.d[r] * a.d[c] + fp * a.h[4 * r + c];
  return j;
}

}  // namespace

Jet2 jet_sin(const Jet2& a) { return jet_chain(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
Jet2 jet_cos(const Jet2& a) { return jet_chain(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }
Jet2 jet_exp(const Jet2& a) {
  double e = std::exp(a.v);
  return jet_chain(a, e, e, e);
}

Jet2 jet_inv(const Jet2& a) {
  double u = 1.0 / a.v;
  return jet_chain(a, u, -u * u, 2.0 * u * u * u);
}

namespace {

class ConstExpr final : public Expr {
 public:
  explicit ConstExpr(double c) : c_(c) {}
  double eval(const std::array<double, 4>&, const std::array<double, 4>&) const override {
    return c_;
  }
  Jet2 jet(const std::array<double, 4>&, const std::array<double, 4>&) const override {
    return Jet2::constant(c_);
  }

 private:
  double c_;
};

class LinExpr final : public Expr {
 public:
  explicit LinExpr(std::array<long, 4> n) : n_(n) {}
  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    double s = 0;
    for (int i = 0; i < 4; ++i) s += 2.0 * M_PI * static_cast<double>(n_[i]) * x[i] / L[i];
    return s;
  }
  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    Jet2 j;
    j.v = eval(x, L);
    for (int i = 0; i < 4; ++i) j.d[i] = 2.0 * M_PI * static_cast<double>(n_[i]) / L[i];
    return j;
  }

 private:
  std::array<long, 4> n_;
};

class SumExpr final : public Expr {
 public:
  explicit SumExpr(std::vector<ExprPtr> args) : args_(std::move(args)) {}
  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    double s = 0;
    for (const auto& a : args_) s += a->eval(x, L);
    return s;
  }
  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    Jet2 j;
    for (const auto& a : args_) j = j + a->jet(x, L);
    return j;
  }

 private:
  std::vector<ExprPtr> args_;
};

class MulExpr final : public Expr {
 public:
  explicit MulExpr(std::vector<ExprPtr> args) : args_(std::move(args)) {}
  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    double s = 1;
    for (const auto& a : args_) s *= a->eval(x, L);
    return s;
  }
  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    Jet2 j = Jet2::constant(1.0);
    for (const auto& a : args_) j = j * a->jet(x, L);
    return j;
  }

 private:
  std::vector<ExprPtr> args_;
};

class ScaleExpr final : public Expr {
 public:
  ScaleExpr(double s, ExprPtr a) : s_(s), a_(std::move(a)) {}
  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    return s_ * a_->eval(x, L);
  }
  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    return jet_scale(s_, a_->jet(x, L));
  }

 private:
  double s_;
  ExprPtr a_;
};

enum class Fun { Sin, Cos, Exp };

class FunExpr final : public Expr {
 public:
  FunExpr(Fun f, ExprPtr a) : f_(f), a_(std::move(a)) {}
  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    double u = a_->eval(x, L);
    switch (f_) {
      case Fun::Sin: return std::sin(u);
      case Fun::Cos: return std::cos(u);
      default: return std::exp(u);
    }
  }
  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    Jet2 u = a_->jet(x, L);
    switch (f_) {
      case Fun::Sin: return jet_sin(u);
      case Fun::Cos: return jet_cos(u);
      default: return jet_exp(u);
    }
  }

 private:
  Fun f_;
  ExprPtr a_;
};

// Band-limited random field, zero mode dropped, normalized to unit rms and
// scaled by amp.  Stored as cos/sin coefficient pairs per retained lattice
// frequency.  Shape "box" keeps |n_mu| <= nmax per axis; shape "cross" keeps
// sum_mu |n_mu| <= nmax, i.e. only frequencies that a coarse lattice still
// resolves well (useful when measuring discretization convergence rates).
class RandBandExpr final : public Expr {
 public:
  RandBandExpr(std::uint64_t seed, int nmax, double amp, bool cross) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double sumsq = 0.0;
    // Keep one representative per +-n pair (first nonzero component positive)
    // so the retained cos/sin functions are mutually orthogonal and the rms
    // normalization below is exact.
    auto canonical = [](long a0, long a1, long a2, long a3) {
      for (long v : {a0, a1, a2, a3}) {
        if (v > 0) return true;
        if (v < 0) return false;
      }
      return false;  // zero mode dropped
    };
    for (long n0 = -nmax; n0 <= nmax; ++n0)
      for (long n1 = -nmax; n1 <= nmax; ++n1)
        for (long n2 = -nmax; n2 <= nmax; ++n2)
          for (long n3 = -nmax; n3 <= nmax; ++n3) {
            if (!canonical(n0, n1, n2, n3)) continue;
            if (cross && std::labs(n0) + std::labs(n1) + std::labs(n2) + std::labs(n3) > nmax)
              continue;
            Mode m;
            m.n = {n0, n1, n2, n3};
            m.ca = gauss(rng);
            m.cb = gauss(rng);
            sumsq += 0.5 * (m.ca * m.ca + m.cb * m.cb);
            modes_.push_back(m);
          }
    double norm = amp / std::sqrt(sumsq);
    for (auto& m : modes_) {
      m.ca *= norm;
      m.cb *= norm;
    }
  }

  double eval(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    double s = 0;
    for (const auto& m : modes_) {
      double ph = phase(m, x, L);
      s += m.ca * std::cos(ph) + m.cb * std::sin(ph);
    }
    return s;
  }

  Jet2 jet(const std::array<double, 4>& x, const std::array<double, 4>& L) const override {
    Jet2 j;
    for (const auto& m : modes_) {
      double ph = phase(m, x, L);
      double c = std::cos(ph), s = std::sin(ph);
      double val = m.ca * c + m.cb * s;
      double dval = -m.ca * s + m.cb * c;  // derivative w.r.t. phase
      std::array<double, 4> k;
      for (int i = 0; i < 4; ++i) k[i] = 2.0 * M_PI * static_cast<double>(m.n[i]) / L[i];
      j.v += val;
      for (int i = 0; i < 4; ++i) j.d[i] += dval * k[i];
      for (int r = 0; r < 4; ++r)
        for (int c2 = 0; c2 < 4; ++c2) j.h[4 * r + c2] += -val * k[r] * k[c2];
    }
    return j;
  }

 private:
  struct Mode {
    std::array<long, 4> n;
    double ca, cb;
  };
  static double phase(const Mode& m, const std::array<double, 4>& x,
                      const std::array<double, 4>& L) {
    double ph = 0;
    for (int i = 0; i < 4; ++i) ph += 2.0 * M_PI * static_cast<double>(m.n[i]) * x[i] / L[i];
    return ph;
  }
  std::vector<Mode> modes_;
};

}  // namespace

ExprPtr make_const(double c) { return std::make_shared<ConstExpr>(c); }

ExprPtr expr_sum(ExprPtr a, ExprPtr b) {
  std::vector<ExprPtr> args{std::move(a), std::move(b)};
  return std::make_shared<SumExpr>(std::move(args));
}

ExprPtr make_random_band(std::uint64_t seed, int nmax, double amp, bool cross) {
  return std::make_shared<RandBandExpr>(seed, nmax, amp, cross);
}

ExprPtr parse_expr(const nlohmann::json& j, const std::string& where) {
  if (j.is_number()) return make_const(j.get<double>());
  if (!j.is_object() || !j.contains("op"))
    throw InputError("expression at '" + where + "' must be a number or an object with 'op'");
  const std::string op = j.at("op").get<std::string>();
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key))
      throw InputError("expression '" + op + "' at '" + where + "' missing key '" + key + "'");
    return j.at(key);
  };
  if (op == "const") return make_const(need("value").get<double>());
  if (op == "lin") {
    const auto& arr = need("coeffs");
    if (!arr.is_array() || arr.size() != 4)
      throw InputError("'lin' at '" + where + "' needs 4 integer coeffs");
    std::array<long, 4> n{};
    for (int i = 0; i < 4; ++i) {
      if (!arr[static_cast<size_t>(i)].is_number_integer())
        throw InputError("'lin' at '" + where + "' coeffs must be integers (periodicity)");
      n[static_cast<size_t>(i)] = arr[static_cast<size_t>(i)].get<long>();
    }
    return std::make_shared<LinExpr>(n);
  }
  if (op == "+" || op == "*") {
    const auto& arr = need("args");
    if (!arr.is_array() || arr.empty())
      throw InputError("'" + op + "' at '" + where + "' needs a nonempty args array");
    std::vector<ExprPtr> args;
    for (size_t i = 0; i < arr.size(); ++i)
      args.push_back(parse_expr(arr[i], where + "/" + op + "[" + std::to_string(i) + "]"));
    if (op == "+") return std::make_shared<SumExpr>(std::move(args));
    return std::make_shared<MulExpr>(std::move(args));
  }
  if (op == "scale")
    return std::make_shared<ScaleExpr>(need("factor").get<double>(),
                                       parse_expr(need("arg"), where + "/scale"));
  if (op == "sin") return std::make_shared<FunExpr>(Fun::Sin, parse_expr(need("arg"), where + "/sin"));
  if (op == "cos") return std::make_shared<FunExpr>(Fun::Cos, parse_expr(need("arg"), where + "/cos"));
  if (op == "exp") return std::make_shared<FunExpr>(Fun::Exp, parse_expr(need("arg"), where + "/exp"));
  if (op == "randband") {
    int nmax = need("nmax").get<int>();
    if (nmax < 1 || nmax > 4)
      throw InputError("'randband' at '" + where + "' nmax must be in [1,4]");
    bool cross = false;
    if (j.contains("shape")) {
      const std::string shape = j.at("shape").get<std::string>();
      if (shape == "cross")
        cross = true;
      else if (shape != "box")
        throw InputError("'randband' at '" + where + "' shape must be 'box' or 'cross'");
    }
    return make_random_band(need("seed").get<std::uint64_t>(), nmax, need("amp").get<double>(),
                            cross);
  }
  throw InputError("unknown expression op '" + op + "' at '" + where + "'");
}

}  // namespace hs
