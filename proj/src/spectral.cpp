// Low-spectrum extraction and spectral verdicts.  See spectral.hpp for the
// contracts; the eigensolver here is a thick-restarted block Lanczos with
// full reorthogonalization, specialized to Hermitian PSD operators:
//
//  * The projected matrix T = V^H A V is maintained densely and kept exactly
//    Hermitian, so restarts (basis <- Ritz vectors, T <- diag) stay
//    consistent without tracking residual couplings.
//  * Every restart cycle injects a fresh random block.  A Krylov space from
//    one start block can contain at most `block` independent directions of
//    any single eigenvalue's eigenspace, so high-multiplicity clusters
//    (e.g. the 64-fold flat-torus doubler kernel) are exhausted across
//    cycles, each contributing up to `block` new directions.
//  * A Ritz pair is locked only after its residual is re-verified through a
//    raw operator application; the cheap in-basis estimate is only a filter.
//  * The solve stops once `count` pairs are locked AND the smallest
//    unconverged Ritz value does not undercut the count-th locked value, so
//    the returned values are the smallest ones up to the random-restart
//    exploration guarantee.

#include "hermsurf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>
#include <utility>

#include "hermsurf/errors.hpp"

namespace hs {

namespace {

using MatX = Eigen::MatrixXcd;
using VecX = Eigen::VectorXcd;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Solver engine
// ---------------------------------------------------------------------------

class BlockLanczos {
 public:
  BlockLanczos(const OperatorHandle& h, const EigOptions& opt)
      : h_(h), opt_(opt), n_(h.dim), b_(opt.block), rng_(opt.seed) {
    cap_ = std::min<std::size_t>(static_cast<std::size_t>(opt.max_basis), n_);
    cap_ -= cap_ % static_cast<std::size_t>(b_);
    if (cap_ < 3 * static_cast<std::size_t>(b_))
      throw InputError("low_spectrum: max_basis must allow at least three blocks (got " +
                       std::to_string(opt.max_basis) + " for block " + std::to_string(b_) + ")");
    band_ = std::isfinite(opt.below);
    if (band_) bmargin_ = 1e-7 * std::max(1.0, std::abs(opt.below));
    V_ = MatX::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(cap_));
    T_ = MatX::Zero(static_cast<Eigen::Index>(cap_), static_cast<Eigen::Index>(cap_));
    locked_ = MatX::Zero(static_cast<Eigen::Index>(n_),
                         static_cast<Eigen::Index>(opt.count + 3 * b_));
  }

  EigResult run() {
    for (int cyc = 1; cyc <= opt_.max_cycles; ++cyc) {
      ++cycles_;
      one_cycle();
      if (done_) return finish();
    }
    const std::string goal =
        band_ ? " in-band pairs locked (band <= " + fmt_double(opt_.below) + ")"
              : "/" + std::to_string(opt_.count) + " pairs locked";
    throw SolverError("low_spectrum(" + h_.label + "): restart cap " +
                      std::to_string(opt_.max_cycles) + " reached with " +
                      std::to_string(locked_vals_.size()) + goal + " after " +
                      std::to_string(matvecs_) + " operator applications (tol " +
                      fmt_double(opt_.tol) + ")");
  }

 private:
  double kth_locked_value() const {
    if (static_cast<int>(locked_vals_.size()) < opt_.count)
      return std::numeric_limits<double>::infinity();
    std::vector<double> v = locked_vals_;
    std::nth_element(v.begin(), v.begin() + (opt_.count - 1), v.end());
    return v[static_cast<std::size_t>(opt_.count - 1)];
  }

  void apply(const cdouble* x, cdouble* y) {
    h_.apply(x, y);
    ++matvecs_;
  }

  void random_fill(Eigen::Ref<MatX> w) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        const double re = u(rng_);
        const double im = u(rng_);
        w(r, c) = cdouble{re, im};
      }
  }

  // Two-pass Gram-Schmidt of a single vector against locked and the basis.
  void project_out_vec(VecX& v) {
    for (int pass = 0; pass < 2; ++pass) {
      if (nlocked_ > 0) {
        const auto l = locked_.leftCols(nlocked_);
        v.noalias() -= l * (l.adjoint() * v).eval();
      }
      if (k_ > 0) {
        const auto vb = V_.leftCols(k_);
        v.noalias() -= vb * (vb.adjoint() * v).eval();
      }
    }
  }

  // Two-pass block Gram-Schmidt of w against locked and the active basis.
  // When tcol != nullptr the accumulated coefficients against the active
  // basis are added into it (they equal V^H w_original for w = A V_last).
  void project_out(MatX& w, MatX* tcol) {
    for (int pass = 0; pass < 2; ++pass) {
      if (nlocked_ > 0) {
        const auto l = locked_.leftCols(nlocked_);
        MatX c = l.adjoint() * w;
        w.noalias() -= l * c;
      }
      if (k_ > 0) {
        const auto v = V_.leftCols(k_);
        MatX c = v.adjoint() * w;
        w.noalias() -= v * c;
        if (tcol) *tcol += c;
      }
    }
  }

  // In-place column orthonormalization of w (already projected against
  // locked+V).  Rank-deficient columns are replaced by fresh random
  // directions (projected against everything); their coupling rows in the
  // returned R are zero, which is exact: the original block has no component
  // along a direction that was injected at random.
  MatX orthonormalize_block(MatX& w, const std::vector<double>& scale) {
    const Eigen::Index m = w.cols();
    MatX r = MatX::Zero(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index i = 0; i < j; ++i) {
          const cdouble c = w.col(i).dot(w.col(j));
          w.col(j) -= c * w.col(i);
          r(i, j) += c;
        }
      double nrm = w.col(j).norm();
      const double floor = 1e-12 * std::max(scale[static_cast<std::size_t>(j)], 1e-300);
      if (nrm <= floor) {
        // Direction exhausted (invariant subspace hit): inject exploration.
        r.row(j).setZero();
        r.col(j).setZero();
        bool replaced = false;
        for (int attempt = 0; attempt < 4 && !replaced; ++attempt) {
          random_fill(w.col(j));
          VecX wj = w.col(j);
          project_out_vec(wj);
          for (Eigen::Index i = 0; i < j; ++i) wj -= w.col(i).dot(wj) * w.col(i);
          nrm = wj.norm();
          if (nrm > 1e-8 * std::sqrt(static_cast<double>(n_))) {
            w.col(j) = wj / nrm;
            replaced = true;
          }
        }
        if (!replaced)
          throw SolverError("low_spectrum(" + h_.label +
                            "): could not extend the Krylov basis (space exhausted)");
        continue;
      }
      w.col(j) /= nrm;
      r(j, j) = nrm;
    }
    return r;
  }

  // Appends the next start block as the pending last block.  Continuing
  // from the previous cycle's residual block makes the restarted iteration
  // a genuine Krylov-Schur continuation (convergence compounds across
  // restarts); a fresh random block is used on the first cycle and right
  // after pairs were locked, to explore eigenspace multiplicity beyond the
  // block size (one Krylov chain carries at most `block` independent
  // directions of any single eigenspace).
  void seed_start_block() {
    MatX x;
    random_start_ = continuation_.cols() != b_;
    if (!random_start_) {
      x = std::move(continuation_);
    } else {
      x.resize(static_cast<Eigen::Index>(n_), b_);
      random_fill(x);
    }
    continuation_.resize(0, 0);
    std::vector<double> scale(static_cast<std::size_t>(b_));
    for (int j = 0; j < b_; ++j) scale[static_cast<std::size_t>(j)] = x.col(j).norm();
    project_out(x, nullptr);
    orthonormalize_block(x, scale);
    V_.middleCols(k_, b_) = x;
    k_ += b_;
  }

  // Multiplies the pending last block, fills its T column block, and (if
  // room remains) appends the orthonormalized image as the next pending
  // block.  Returns false when the basis cap is reached; `west` then holds
  // the projected residual block for Ritz residual estimates.
  bool expand_step(MatX& west) {
    MatX w(static_cast<Eigen::Index>(n_), b_);
    for (int c = 0; c < b_; ++c)
      apply(V_.col(k_ - b_ + c).data(), w.col(c).data());
    std::vector<double> scale(static_cast<std::size_t>(b_));
    for (int j = 0; j < b_; ++j) scale[static_cast<std::size_t>(j)] = w.col(j).norm();
    MatX tcol = MatX::Zero(k_, b_);
    project_out(w, &tcol);
    // Column block of T belonging to the just-multiplied block, kept exactly
    // Hermitian (off-diagonal mirrored, diagonal block symmetrized).
    const Eigen::Index j0 = k_ - b_;
    if (j0 > 0) {
      T_.block(0, j0, j0, b_) = tcol.topRows(j0);
      T_.block(j0, 0, b_, j0) = tcol.topRows(j0).adjoint();
    }
    T_.block(j0, j0, b_, b_) =
        0.5 * (tcol.bottomRows(b_) + tcol.bottomRows(b_).adjoint());
    if (static_cast<std::size_t>(k_ + b_) > cap_) {
      west = std::move(w);
      return false;
    }
    MatX r = orthonormalize_block(w, scale);
    V_.middleCols(k_, b_) = w;
    T_.block(k_, j0, b_, b_) = r;
    T_.block(j0, k_, b_, b_) = r.adjoint();
    k_ += b_;
    return true;
  }

  void lock_pair(const VecX& z, double theta, double resid) {
    if (nlocked_ == locked_.cols())
      locked_.conservativeResize(Eigen::NoChange, locked_.cols() + 2 * b_);
    locked_.col(nlocked_) = z;
    ++nlocked_;
    locked_vals_.push_back(theta);
    locked_resid_.push_back(resid);
  }

  // One restart cycle.  Expands the basis to the cap, Rayleigh-Ritz, locks
  // raw-verified pairs, then restarts and updates the completion flag.
  void one_cycle() {
    done_ = false;
    seed_start_block();
    MatX west;
    while (expand_step(west)) {
    }
    Eigen::SelfAdjointEigenSolver<MatX> es(T_.topLeftCorner(k_, k_));
    if (es.info() != Eigen::Success)
      throw SolverError("low_spectrum(" + h_.label + "): dense Rayleigh-Ritz factorization failed");
    const Eigen::VectorXd theta = es.eigenvalues();
    const MatX& s = es.eigenvectors();

    // Lock candidates from the low end (raw-verified).  In band mode every
    // Ritz value inside the band is a candidate; otherwise a margin of two
    // blocks beyond the remaining demand.
    const int want = opt_.count - static_cast<int>(locked_vals_.size());
    const int candidates = band_ ? k_ : std::min<int>(k_, std::max(want, 0) + 2 * b_);
    std::vector<char> locked_here(static_cast<std::size_t>(k_), 0);
    bool any_locked = false;
    double min_new_lock = std::numeric_limits<double>::infinity();
    VecX z(static_cast<Eigen::Index>(n_)), az(static_cast<Eigen::Index>(n_));
    for (int i = 0; i < candidates; ++i) {
      if (band_ && theta(i) > opt_.below + bmargin_) break;
      const double est = (west * s.col(i).tail(b_)).norm();
      if (est > 50.0 * opt_.tol) continue;
      z.noalias() = V_.leftCols(k_) * s.col(i);
      apply(z.data(), az.data());
      const double resid = (az - theta(i) * z).norm();
      if (resid <= opt_.tol) {
        if (band_ && static_cast<int>(locked_vals_.size()) >= opt_.count)
          throw SolverError("low_spectrum(" + h_.label + "): more than " +
                            std::to_string(opt_.count) + " eigenvalues below " +
                            fmt_double(opt_.below) + "; band capacity exhausted");
        lock_pair(z, theta(i), resid);
        locked_here[static_cast<std::size_t>(i)] = 1;
        any_locked = true;
        min_new_lock = std::min(min_new_lock, theta(i));
      }
    }

    std::vector<int> unconv;
    unconv.reserve(static_cast<std::size_t>(k_));
    for (int i = 0; i < k_; ++i)
      if (!locked_here[static_cast<std::size_t>(i)]) unconv.push_back(i);
    const double min_unconv =
        unconv.empty() ? std::numeric_limits<double>::infinity() : theta(unconv.front());

    // Plateau: the current chain has no unconverged content below the goal
    // (band edge, or the count-th locked value).  Completion additionally
    // requires the plateau to hold on a cycle that STARTED from a fresh
    // random block and locked nothing new below the goal: a continued chain
    // carries at most `block` directions of any one eigenspace, so only a
    // fresh probe can certify that no eigenvalue was left behind.
    bool plateau = false;
    double goal = std::numeric_limits<double>::infinity();
    if (band_) {
      goal = opt_.below + bmargin_;
      plateau = min_unconv > goal;
      done_ = plateau && random_start_ && !any_locked;
    } else if (static_cast<int>(locked_vals_.size()) >= opt_.count) {
      const double kth = kth_locked_value();
      goal = kth - 1e-9 * std::max(1.0, std::abs(kth));
      plateau = min_unconv >= goal;
      done_ = plateau && random_start_ && min_new_lock >= goal;
    }

    // Restart: on a plateau, cold (fresh random probe next cycle, locked
    // vectors deflated); otherwise thick Krylov-Schur restart, continuing
    // from the orthonormalized residual block `west`.  With that block in
    // the basis every later expansion block is exactly orthogonal to the
    // kept vectors' residuals, so the dense T remains the exact Galerkin
    // projection and convergence compounds across cycles.
    int keep = 0;
    if (!plateau) {
      int remaining;
      if (band_) {
        remaining = 0;
        for (int i : unconv)
          if (theta(i) <= goal) ++remaining;
      } else {
        remaining = std::max(opt_.count - static_cast<int>(locked_vals_.size()), 0);
      }
      keep = std::min<int>({remaining + b_, static_cast<int>(unconv.size()),
                            static_cast<int>(cap_) / 2, static_cast<int>(cap_) - 2 * b_});
    }
    if (keep > 0) {
      MatX sk(k_, keep);
      for (int j = 0; j < keep; ++j) sk.col(j) = s.col(unconv[static_cast<std::size_t>(j)]);
      MatX vk = V_.leftCols(k_) * sk;
      V_.leftCols(keep) = vk;
      T_.setZero();
      for (int j = 0; j < keep; ++j)
        T_(j, j) = theta(unconv[static_cast<std::size_t>(j)]);
      k_ = keep;
      continuation_ = std::move(west);
    } else {
      T_.setZero();
      k_ = 0;
      continuation_.resize(0, 0);
    }
  }

  EigResult finish() {
    std::vector<int> order(locked_vals_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return locked_vals_[static_cast<std::size_t>(a)] < locked_vals_[static_cast<std::size_t>(b)];
    });
    EigResult res;
    int m = std::min<int>(opt_.count, static_cast<int>(order.size()));
    if (band_) {
      m = 0;
      while (m < static_cast<int>(order.size()) &&
             locked_vals_[static_cast<std::size_t>(order[static_cast<std::size_t>(m)])] <=
                 opt_.below + bmargin_)
        ++m;
    }
    res.values.resize(static_cast<std::size_t>(m));
    res.residuals.resize(static_cast<std::size_t>(m));
    res.vectors.resize(static_cast<Eigen::Index>(n_), m);
    for (int i = 0; i < m; ++i) {
      const int src = order[static_cast<std::size_t>(i)];
      res.values[static_cast<std::size_t>(i)] = locked_vals_[static_cast<std::size_t>(src)];
      res.residuals[static_cast<std::size_t>(i)] = locked_resid_[static_cast<std::size_t>(src)];
      res.vectors.col(i) = locked_.col(src);
    }
    res.meta.tol = opt_.tol;
    res.meta.seed = opt_.seed;
    res.meta.block = b_;
    res.meta.max_basis = static_cast<int>(cap_);
    res.meta.cycles = cycles_;
    res.meta.matvecs = matvecs_;
    res.meta.dims = h_.grid.dims;
    res.meta.backend = active_kernel_backend();
    res.meta.label = h_.label;
    return res;
  }

  const OperatorHandle& h_;
  const EigOptions& opt_;
  std::size_t n_;
  int b_;
  std::size_t cap_;
  MatX V_, T_, locked_, continuation_;
  Eigen::Index nlocked_ = 0;
  bool band_ = false;
  double bmargin_ = 0.0;
  bool random_start_ = true;
  bool done_ = false;
  int k_ = 0;
  std::vector<double> locked_vals_, locked_resid_;
  std::mt19937_64 rng_;
  long matvecs_ = 0;
  int cycles_ = 0;
};

void check_self_adjoint(const OperatorHandle& h, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t n = h.dim;
  std::vector<cdouble> x(n), y(n), ax(n), ay(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = cdouble{u(rng), u(rng)};
    y[i] = cdouble{u(rng), u(rng)};
  }
  h.apply(x.data(), ax.data());
  h.apply(y.data(), ay.data());
  const cdouble lhs = cxdotc(n, x.data(), ay.data());
  const cdouble rhs = cxdotc(n, ax.data(), y.data());
  const double scale = std::sqrt(cxnrm2sq(n, ax.data()) * cxnrm2sq(n, y.data())) +
                       std::sqrt(cxnrm2sq(n, x.data()) * cxnrm2sq(n, ay.data()));
  if (std::abs(lhs - rhs) > 1e-10 * std::max(scale, 1e-300))
    throw InputError("low_spectrum(" + h.label +
                     "): operator failed the self-adjointness probe (defect " +
                     fmt_double(std::abs(lhs - rhs)) + " at scale " + fmt_double(scale) + ")");
}

}  // namespace

// ---------------------------------------------------------------------------
// Handles
// ---------------------------------------------------------------------------

OperatorHandle stencil_handle(StencilOp op, std::string label) {
  auto sp = std::make_shared<const StencilOp>(std::move(op));
  OperatorHandle h;
  h.grid = sp->grid;
  h.dim = sp->dim();
  h.label = std::move(label);
  h.apply = [sp](const cdouble* x, cdouble* y) { stencil_apply(*sp, x, y); };
  return h;
}

OperatorHandle squared_handle(StencilOp op, std::string label) {
  auto sp = std::make_shared<const StencilOp>(std::move(op));
  auto scratch = std::make_shared<std::vector<cdouble>>(sp->dim());
  OperatorHandle h;
  h.grid = sp->grid;
  h.dim = sp->dim();
  h.label = std::move(label);
  h.apply = [sp, scratch](const cdouble* x, cdouble* y) {
    stencil_apply(*sp, x, scratch->data());
    stencil_apply(*sp, scratch->data(), y);
  };
  return h;
}

// ---------------------------------------------------------------------------
// low_spectrum
// ---------------------------------------------------------------------------

EigResult low_spectrum(const OperatorHandle& h, const EigOptions& opt) {
  if (!h.apply || h.dim == 0) throw InputError("low_spectrum: empty operator handle");
  if (opt.count < 1) throw InputError("low_spectrum: count must be >= 1");
  if (static_cast<std::size_t>(opt.count) > h.dim / 4)
    throw InputError("low_spectrum: count " + std::to_string(opt.count) +
                     " too large for operator dimension " + std::to_string(h.dim));
  if (!(opt.tol > 0.0)) throw InputError("low_spectrum: tol must be positive");
  if (opt.block < 1) throw InputError("low_spectrum: block must be >= 1");
  check_self_adjoint(h, opt.seed);
  BlockLanczos solver(h, opt);
  return solver.run();
}

// ---------------------------------------------------------------------------
// Nyquist classification filter
// ---------------------------------------------------------------------------

void nyquist_filter_apply(const Grid4& g, const cdouble* x, cdouble* y) {
  const std::size_t n = 4 * g.volume;
  std::vector<cdouble> a(x, x + n), bbuf(n);
  cdouble* src = a.data();
  cdouble* dst = bbuf.data();
  for (int axis = 0; axis < 4; ++axis) {
    const auto& np = g.nbr(axis, 0);
    const auto& nm = g.nbr(axis, 1);
    for (std::size_t s = 0; s < g.volume; ++s) {
      const std::size_t sp = 4 * static_cast<std::size_t>(np[s]);
      const std::size_t sm = 4 * static_cast<std::size_t>(nm[s]);
      for (std::size_t c = 0; c < 4; ++c)
        dst[4 * s + c] = 0.5 * src[4 * s + c] + 0.25 * (src[sp + c] + src[sm + c]);
    }
    std::swap(src, dst);
  }
  std::copy(src, src + n, y);
}

SpinorField nyquist_filter_apply(const Grid4& g, const SpinorField& f) {
  SpinorField out(g);
  nyquist_filter_apply(g, f.a.data(), out.a.data());
  return out;
}

// ---------------------------------------------------------------------------
// kernel_and_index
// ---------------------------------------------------------------------------

KernelReport kernel_and_index(const GeometryTables& tab, const KernelOptions& opt) {
  if (!(opt.c > 0.0)) throw InputError("kernel_and_index: threshold constant c must be positive");
  if (!(opt.sigma_min > 0.0 && opt.sigma_min < 1.0))
    throw InputError("kernel_and_index: sigma_min must lie in (0,1)");
  if (opt.max_count < 1) throw InputError("kernel_and_index: max_count must be positive");

  DiracOp box = build_dolbeault(tab);
  OperatorHandle h = squared_handle(std::move(box.op), box.label + "_squared");
  const double hmax = *std::max_element(tab.grid.h.begin(), tab.grid.h.end());
  const double tau = opt.c * hmax * hmax;

  // Band solve: every eigenvalue up to 10*tau (kernel, doublers and the
  // whole indeterminate zone), certified complete by the solver's fresh-probe
  // stop rule.  Values above the band are irrelevant to classification.
  EigOptions e = opt.eig;
  e.count = opt.max_count;
  e.below = 10.0 * tau;
  const EigResult res = low_spectrum(h, e);

  KernelReport rep;
  rep.tau = tau;
  rep.c = opt.c;
  rep.low_values = res.values;
  rep.meta = res.meta;
  int below = 0;
  for (double v : res.values) {
    if (v <= tau) ++below;
    if (v >= tau / 10.0 && v <= 10.0 * tau) rep.indeterminate.push_back(v);
  }
  rep.raw_below_tau = below;
  rep.determinate = rep.indeterminate.empty();
  if (below == 0) return rep;

  // Filter the sub-threshold subspace and count the surviving rank.
  const auto y = res.vectors.leftCols(below);
  MatX z(y.rows(), below);
  for (int j = 0; j < below; ++j)
    nyquist_filter_apply(tab.grid, y.col(j).data(), z.col(j).data());
  Eigen::SelfAdjointEigenSolver<MatX> es(z.adjoint() * z);
  if (es.info() != Eigen::Success)
    throw SolverError("kernel_and_index: filter Gram factorization failed");
  std::vector<double> sig(static_cast<std::size_t>(below));
  for (int i = 0; i < below; ++i)
    sig[static_cast<std::size_t>(i)] =
        std::sqrt(std::max(es.eigenvalues()(below - 1 - i), 0.0));  // descending
  rep.filter_singulars = sig;
  int phys = 0;
  for (double s : sig) {
    if (s >= opt.sigma_min) ++phys;
    if (s > 0.3 && s < 0.7) rep.determinate = false;
  }
  rep.kernel_dim = phys;
  rep.doublers_excluded = below - phys;
  if (phys == 0) return rep;

  // Physical kernel basis: preimages of the large singular directions
  // (eigenvalues ascend, so the top phys columns are the last ones).
  rep.kernel_basis = y * es.eigenvectors().rightCols(phys);

  // Chirality split: trace of the negative-sector projector (components
  // {1,2}) over the physical kernel subspace; integer up to numerics
  // because the squared operator and the filter both commute with the
  // grading.
  double tminus = 0.0;
  for (int j = 0; j < phys; ++j)
    for (std::size_t s = 0; s < tab.grid.volume; ++s) {
      const Eigen::Index r = static_cast<Eigen::Index>(4 * s);
      tminus += std::norm(rep.kernel_basis(r + 1, j)) + std::norm(rep.kernel_basis(r + 2, j));
    }
  const double tplus = static_cast<double>(phys) - tminus;
  rep.kernel_plus = static_cast<int>(std::llround(tplus));
  rep.kernel_minus = phys - rep.kernel_plus;
  if (std::abs(tplus - static_cast<double>(rep.kernel_plus)) > 0.05) rep.determinate = false;
  rep.index = rep.kernel_plus - rep.kernel_minus;
  return rep;
}

// ---------------------------------------------------------------------------
// bound_verdicts
// ---------------------------------------------------------------------------

BoundReport bound_verdicts(const GeometryTables& tab, double lambda_sq_min,
                           bool require_holsec, double grid_tol, double gap_tol) {
  if (lambda_sq_min < -gap_tol)
    throw InputError("bound_verdicts: lambda_sq_min must be nonnegative (got " +
                     fmt_double(lambda_sq_min) + ")");
  BoundReport rep;
  rep.lambda_sq_min = lambda_sq_min;
  rep.inf_s = *std::min_element(tab.s.begin(), tab.s.end());
  rep.inf_k = *std::min_element(tab.k.begin(), tab.k.end());

  if (rep.inf_k >= -grid_tol) {
    rep.scalar_bound.applicable = true;
    rep.scalar_bound.reason = "ok";
    rep.scalar_bound.bound = rep.inf_s / 6.0;
    rep.scalar_bound.lambda_sq = lambda_sq_min;
    rep.scalar_bound.gap = lambda_sq_min - rep.scalar_bound.bound;
    rep.scalar_bound.satisfied = rep.scalar_bound.gap >= -gap_tol;
  } else {
    rep.scalar_bound.reason = "hypothesis violated: grid min holomorphic sectional curvature " +
                              fmt_double(rep.inf_k) + " < 0";
  }

  if (rep.inf_k > grid_tol) {
    rep.holsec_bound.applicable = true;
    rep.holsec_bound.reason = "ok";
    rep.holsec_bound.bound = rep.inf_k / 2.0;
    rep.holsec_bound.lambda_sq = lambda_sq_min;
    rep.holsec_bound.gap = lambda_sq_min - rep.holsec_bound.bound;
    rep.holsec_bound.satisfied = rep.holsec_bound.gap >= -gap_tol;
  } else {
    rep.holsec_bound.reason =
        "hypothesis violated: grid min holomorphic sectional curvature " +
        fmt_double(rep.inf_k) + " is not positive";
    if (require_holsec)
      throw InputError("bound_verdicts: holomorphic-sectional bound requested but " +
                       rep.holsec_bound.reason);
  }

  if (rep.scalar_bound.applicable && !rep.scalar_bound.satisfied)
    throw CheckError("bound_verdicts: scalar-curvature bound violated: lambda^2 = " +
                     fmt_double(lambda_sq_min) + " < inf_s/6 = " +
                     fmt_double(rep.scalar_bound.bound) +
                     " (guaranteed inequality; this flags a bug)");
  if (rep.holsec_bound.applicable && !rep.holsec_bound.satisfied)
    throw CheckError("bound_verdicts: holomorphic-sectional bound violated: lambda^2 = " +
                     fmt_double(lambda_sq_min) + " < inf_k/2 = " +
                     fmt_double(rep.holsec_bound.bound) +
                     " (guaranteed inequality; this flags a bug)");
  return rep;
}

// ---------------------------------------------------------------------------
// eigenfield_degree_split
// ---------------------------------------------------------------------------

DegreeSplit eigenfield_degree_split(const GeometryTables& tab, const SpinorField& psi,
                                    double lambda, double tol) {
  if (lambda == 0.0)
    throw InputError("eigenfield_degree_split: lambda must be nonzero");
  if (!(tol > 0.0)) throw InputError("eigenfield_degree_split: tol must be positive");
  const double npsi = field_norm(tab.grid, psi);
  if (npsi == 0.0) throw InputError("eigenfield_degree_split: zero field");

  DiracOp box = build_dolbeault(tab);
  const Grid4& g = tab.grid;
  SpinorField bpsi(g);
  stencil_apply(box.op, psi, bpsi);
  double defect = 0.0;
  {
    SpinorField d(g);
    for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] = bpsi.a[i] - lambda * psi.a[i];
    defect = field_norm(g, d);
  }
  if (defect > tol * npsi)
    throw InputError("eigenfield_degree_split: input is not a lambda-eigenfield: ||Box psi - "
                     "lambda psi|| = " +
                     fmt_double(defect) + " > tol * ||psi|| = " + fmt_double(tol * npsi));

  auto build_part = [&](int r) {
    SpinorField pr = degree_project(psi, r);
    SpinorField bpr(g);
    stencil_apply(box.op, pr, bpr);
    SpinorField part(g);
    for (std::size_t i = 0; i < part.a.size(); ++i)
      part.a[i] = pr.a[i] + bpr.a[i] / lambda;
    return part;
  };
  DegreeSplit sp;
  sp.from0 = build_part(0);
  sp.from2 = build_part(2);

  auto eig_resid = [&](const SpinorField& f) {
    SpinorField bf(g), d(g);
    stencil_apply(box.op, f, bf);
    for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] = bf.a[i] - lambda * f.a[i];
    return field_norm(g, d) / npsi;
  };
  sp.resid0 = eig_resid(sp.from0);
  sp.resid2 = eig_resid(sp.from2);

  {
    SpinorField p0 = degree_project(psi, 0);
    SpinorField b1(g), b2(g), d(g);
    stencil_apply(box.op, p0, b1);
    stencil_apply(box.op, b1, b2);
    for (std::size_t i = 0; i < d.a.size(); ++i) d.a[i] = b2.a[i] - lambda * lambda * p0.a[i];
    sp.resid0_sq = field_norm(g, d) / npsi;
  }
  {
    SpinorField d(g);
    for (std::size_t i = 0; i < d.a.size(); ++i)
      d.a[i] = sp.from0.a[i] + sp.from2.a[i] - psi.a[i];
    sp.recomposition = field_norm(g, d) / npsi;
  }

  const double n0 = field_norm(g, sp.from0);
  const double n2 = field_norm(g, sp.from2);
  if (n0 <= 1e-12 * npsi && n2 <= 1e-12 * npsi)
    throw CheckError("eigenfield_degree_split: both degree parts vanish for a nonzero "
                     "eigenfield (inconsistent with the degree decomposition)");
  const double lim = 10.0 * tol;
  if (sp.resid0 > lim || sp.resid2 > lim || sp.resid0_sq > lim || sp.recomposition > lim)
    throw CheckError("eigenfield_degree_split: decomposition verification failed: residuals "
                     "(from0 " +
                     fmt_double(sp.resid0) + ", from2 " + fmt_double(sp.resid2) +
                     ", squared " + fmt_double(sp.resid0_sq) + ", recomposition " +
                     fmt_double(sp.recomposition) + ") exceed 10*tol = " + fmt_double(lim));
  return sp;
}

// ---------------------------------------------------------------------------
// signed_box_spectrum
// ---------------------------------------------------------------------------

SignedSpectrum signed_box_spectrum(const GeometryTables& tab, int count,
                                   const EigOptions& opt) {
  if (count < 1) throw InputError("signed_box_spectrum: count must be >= 1");
  DiracOp box = build_dolbeault(tab);
  StencilOp op = box.op;  // keep a copy for the signed projection
  EigOptions e = opt;
  e.count = count + opt.block;
  EigResult res = low_spectrum(squared_handle(std::move(box.op), box.label + "_squared"), e);

  // Close the trailing near-degenerate cluster so the reported span is
  // invariant under the operator.
  int cut = count;
  while (cut > 0) {
    const double gap = res.values[static_cast<std::size_t>(cut)] -
                       res.values[static_cast<std::size_t>(cut - 1)];
    if (gap > 1e-7 * std::max(1.0, res.values[static_cast<std::size_t>(cut)])) break;
    --cut;
  }
  if (cut == 0)
    throw SolverError("signed_box_spectrum: the lowest " + std::to_string(count + opt.block) +
                      " squared eigenvalues form one unbroken cluster; raise count");

  const auto vc = res.vectors.leftCols(cut);
  MatX bv(vc.rows(), cut);
  for (int j = 0; j < cut; ++j)
    stencil_apply(op, vc.col(j).data(), bv.col(j).data());
  MatX small = vc.adjoint() * bv;
  small = 0.5 * (small + small.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<MatX> es(small);
  if (es.info() != Eigen::Success)
    throw SolverError("signed_box_spectrum: restricted factorization failed");

  SignedSpectrum out;
  out.meta = res.meta;
  out.meta.label = "dolbeault_signed";
  out.values.resize(static_cast<std::size_t>(cut));
  out.residuals.resize(static_cast<std::size_t>(cut));
  MatX w = vc * es.eigenvectors();
  MatX bw = bv * es.eigenvectors();
  for (int i = 0; i < cut; ++i) {
    const double nu = es.eigenvalues()(i);
    out.values[static_cast<std::size_t>(i)] = nu;
    out.residuals[static_cast<std::size_t>(i)] = (bw.col(i) - nu * w.col(i)).norm();
  }
  for (int i = 0; i < cut; ++i)
    out.symmetry_defect =
        std::max(out.symmetry_defect,
                 std::abs(out.values[static_cast<std::size_t>(i)] +
                          out.values[static_cast<std::size_t>(cut - 1 - i)]));
  for (int i = 0; i < cut; ++i) {
    const double sq = out.values[static_cast<std::size_t>(i)] *
                      out.values[static_cast<std::size_t>(i)];
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < cut; ++j)
      best = std::min(best, std::abs(sq - res.values[static_cast<std::size_t>(j)]));
    out.square_match = std::max(out.square_match, best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence_filter
// ---------------------------------------------------------------------------

PersistenceReport persistence_filter(std::vector<double> coarse, std::vector<double> fine,
                                     double h_coarse, double cpers) {
  if (!(h_coarse > 0.0)) throw InputError("persistence_filter: h_coarse must be positive");
  if (!(cpers > 0.0)) throw InputError("persistence_filter: cpers must be positive");
  std::sort(coarse.begin(), coarse.end());
  std::sort(fine.begin(), fine.end());
  PersistenceReport rep;
  rep.cpers = cpers;
  rep.hc2 = h_coarse * h_coarse;
  std::vector<char> used(fine.size(), 0);
  for (double v : coarse) {
    const double bound = cpers * std::max(1.0, std::abs(v)) * rep.hc2;
    int best = -1;
    double bestd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < fine.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(fine[j] - v);
      if (d < bestd) {
        bestd = d;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && bestd <= bound) {
      used[static_cast<std::size_t>(best)] = 1;
      rep.matched.push_back({v, fine[static_cast<std::size_t>(best)]});
    } else {
      rep.dropped.push_back(v);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Field diagnostics
// ---------------------------------------------------------------------------

double parallel_residual(const GeometryTables& tab, double t, const SpinorField& psi) {
  const double n = field_norm(tab.grid, psi);
  if (n == 0.0) throw InputError("parallel_residual: zero field");
  double worst = 0.0;
  SpinorField out(tab.grid);
  for (int i = 0; i < 4; ++i) {
    StencilOp grad = build_covariant_derivative(tab, t, i);
    stencil_apply(grad, psi, out);
    worst = std::max(worst, field_norm(tab.grid, out) / n);
  }
  return worst;
}

double minus_chirality_fraction(const SpinorField& psi) {
  double tot = 0.0, minus = 0.0;
  for (std::size_t s = 0; s * 4 < psi.a.size(); ++s) {
    tot += std::norm(psi.a[4 * s]) + std::norm(psi.a[4 * s + 1]) + std::norm(psi.a[4 * s + 2]) +
           std::norm(psi.a[4 * s + 3]);
    minus += std::norm(psi.a[4 * s + 1]) + std::norm(psi.a[4 * s + 2]);
  }
  if (tot == 0.0) throw InputError("minus_chirality_fraction: zero field");
  return std::sqrt(minus / tot);
}

}  // namespace hs
