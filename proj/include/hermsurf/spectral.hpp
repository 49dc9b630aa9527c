#pragma once
// Low-lying spectrum extraction and spectral verdicts for the lattice
// operators: a thick-restarted block Lanczos eigensolver with full
// reorthogonalization for Hermitian positive semi-definite stencils, kernel
// dimension / chirality index classification with a high-wavenumber filter,
// curvature eigenvalue-bound verdicts, the degree-(0,2) decomposition of
// Dirac-type eigenfields, and a dyadic-refinement persistence filter.
//
// Doubler discipline: on even periodic grids the centered first-difference
// symbol vanishes on all odd-even (Nyquist) momenta, so the squared operator
// acquires spurious near-kernel modes.  These are classified, not hidden:
// kernel_and_index reports the raw sub-threshold count, filters it through
// the Nyquist smoother to count physical modes, and reports the excluded
// remainder.  Reported low eigenvalues are expected to persist under one
// dyadic refinement; persistence_filter implements that check.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hermsurf/geometry.hpp"
#include "hermsurf/grid.hpp"
#include "hermsurf/kernels.hpp"
#include "hermsurf/operators.hpp"

namespace hs {

// ---------------------------------------------------------------------------
// Matrix-free operator handles
// ---------------------------------------------------------------------------

// A self-adjoint operator on interleaved complex data of length dim.
// low_spectrum probes self-adjointness and rejects handles that fail.
struct OperatorHandle {
  Grid4 grid;
  std::size_t dim = 0;
  std::function<void(const cdouble*, cdouble*)> apply;  // y = A x, x != y
  std::string label;
};

// Handle owning a copy of the stencil (apply = one stencil application).
OperatorHandle stencil_handle(StencilOp op, std::string label);

// Handle applying the stencil twice (A^2); PSD when the stencil is
// Hermitian-symmetrized.
OperatorHandle squared_handle(StencilOp op, std::string label);

// ---------------------------------------------------------------------------
// Block Lanczos eigensolver
// ---------------------------------------------------------------------------

struct EigOptions {
  int count = 8;            // eigenpairs wanted (smallest eigenvalues); in
                            //   band mode (see `below`) a capacity bound
  double tol = 1e-9;        // absolute residual ||A v - lambda v||, ||v|| = 1
  std::uint64_t seed = 1;   // seed of the random start blocks
  int block = 8;            // Lanczos block size
  int max_basis = 96;       // active Krylov basis cap (locked vectors extra)
  int max_cycles = 80;      // restart cap before SolverError
  // Band mode: when finite, return ALL eigenvalues <= below (at most `count`
  // of them, else SolverError) instead of a fixed number of smallest pairs.
  double below = std::numeric_limits<double>::quiet_NaN();
};

struct SolverMeta {
  double tol = 0.0;
  std::uint64_t seed = 0;
  int block = 0;
  int max_basis = 0;
  int cycles = 0;
  long matvecs = 0;
  std::array<int, 4> dims{};
  std::string backend;  // kernel backend active during the solve
  std::string label;    // operator label
};

struct EigResult {
  std::vector<double> values;    // ascending
  Eigen::MatrixXcd vectors;      // dim x count, orthonormal columns
  std::vector<double> residuals; // raw ||A v - lambda v|| per pair
  SolverMeta meta;
};

// Smallest `count` eigenvalues of a self-adjoint PSD handle (or, in band
// mode, all eigenvalues <= opt.below), each locked only after its raw
// residual ||A v - lambda v|| <= tol.  The result is accepted only once a
// fresh randomly seeded cycle finds nothing new below the answer, so
// eigenvalue multiplicities larger than the block size are exhausted rather
// than silently truncated.  Deterministic given the seed.  Throws InputError
// for invalid options or a handle failing the self-adjointness probe;
// SolverError (with diagnostics) if the restart cap is reached first.
EigResult low_spectrum(const OperatorHandle& h, const EigOptions& opt);

// ---------------------------------------------------------------------------
// Kernel dimension, chirality split, index
// ---------------------------------------------------------------------------

// High-wavenumber classification filter Prod_mu 1/2 (1 + (T_mu + T_mu^-1)/2)
// (symbol Prod_mu cos^2(kappa_mu h/2)): annihilates every odd-even doubler
// momentum exactly and acts as ~1 on well-resolved modes.  Componentwise.
void nyquist_filter_apply(const Grid4& g, const cdouble* x, cdouble* y);
SpinorField nyquist_filter_apply(const Grid4& g, const SpinorField& f);

struct KernelOptions {
  double c = 0.08;          // kernel threshold tau = c * (max_mu h_mu)^2
  double sigma_min = 0.5;   // filter singular value cutoff for physical modes
  int max_count = 96;       // capacity for the band solve (all values <= 10 tau)
  EigOptions eig;           // tol / seed / block / basis / cycle settings
};

struct KernelReport {
  double tau = 0.0, c = 0.0;
  std::vector<double> low_values;       // resolved low eigenvalues of the
                                        //   squared operator, ascending
  int raw_below_tau = 0;                // eigenvalues <= tau (incl. doublers)
  int kernel_dim = 0;                   // physical kernel (filter-certified)
  int kernel_plus = 0, kernel_minus = 0;  // chirality split of the kernel
  int index = 0;                          // kernel_plus - kernel_minus
  int doublers_excluded = 0;            // raw_below_tau - kernel_dim
  std::vector<double> filter_singulars; // filter singular values, descending
  std::vector<double> indeterminate;    // eigenvalues in [tau/10, 10*tau]
  bool determinate = true;              // no ambiguous eigenvalue / sigma
  Eigen::MatrixXcd kernel_basis;        // dim x kernel_dim, orthonormal
  SolverMeta meta;
};

// Kernel classification of the squared Dolbeault-type operator built from
// the tables.  Eigenvalues within a factor 10 of tau, and filter singular
// values within [0.3, 0.7], are flagged indeterminate rather than silently
// counted.  The chirality split uses the volume grading (components {0,3}
// positive sector, {1,2} negative sector).
KernelReport kernel_and_index(const GeometryTables& tab, const KernelOptions& opt);

// ---------------------------------------------------------------------------
// Eigenvalue bound verdicts
// ---------------------------------------------------------------------------

struct BoundVerdict {
  bool applicable = false;
  std::string reason;        // "ok" or why the verdict was not evaluated
  double bound = 0.0;        // right-hand side of the inequality
  double lambda_sq = 0.0;    // left-hand side (min lambda^2 supplied)
  double gap = 0.0;          // lambda_sq - bound (>= -gap_tol when valid)
  bool satisfied = false;
};

struct BoundReport {
  double inf_s = 0.0;          // grid minimum of the scalar curvature
  double inf_k = 0.0;          // grid minimum of the holomorphic sectional
                               //   curvature table
  double lambda_sq_min = 0.0;
  BoundVerdict scalar_bound;   // lambda^2 >= inf_s / 6
  BoundVerdict holsec_bound;   // lambda^2 >= inf_k / 2
};

// Evaluates both curvature lower bounds against the supplied minimal
// lambda^2 (0 when the operator has a kernel).  The scalar bound is only
// evaluated when inf_k >= -grid_tol, the holomorphic-sectional bound only
// when inf_k > grid_tol (its hypothesis); requesting the latter outside its
// hypothesis (require_holsec) is an InputError.  A gap below -gap_tol on an
// applicable verdict throws CheckError: the inequalities are guaranteed, so
// a violation flags a bug, not a finding.
BoundReport bound_verdicts(const GeometryTables& tab, double lambda_sq_min,
                           bool require_holsec = false, double grid_tol = 1e-9,
                           double gap_tol = 1e-7);

// ---------------------------------------------------------------------------
// Degree decomposition of eigenfields
// ---------------------------------------------------------------------------

struct DegreeSplit {
  SpinorField from0;     // psi_0 + (1/lambda) Box psi_0
  SpinorField from2;     // psi_2 + (1/lambda) Box psi_2
  double resid0 = 0.0;   // ||Box from0 - lambda from0|| / ||psi||
  double resid2 = 0.0;   // ||Box from2 - lambda from2|| / ||psi||
  double resid0_sq = 0.0;      // ||Box^2 psi_0 - lambda^2 psi_0|| / ||psi||
  double recomposition = 0.0;  // ||from0 + from2 - psi|| / ||psi||
};

// Splits a lambda-eigenfield of the Dolbeault-type operator (lambda != 0)
// into its degree-0-sourced and degree-2-sourced parts, each again a
// lambda-eigenfield.  Preconditions (InputError): lambda != 0 and
// ||Box psi - lambda psi|| <= tol * ||psi||.  Postconditions (CheckError):
// each part is an eigenfield within 10*tol, the degree-0 component is a
// lambda^2-eigenfield of the squared operator within 10*tol, the parts read
// back to psi, and not both parts vanish.
DegreeSplit eigenfield_degree_split(const GeometryTables& tab, const SpinorField& psi,
                                    double lambda, double tol);

// ---------------------------------------------------------------------------
// Signed spectrum of the Dolbeault-type operator
// ---------------------------------------------------------------------------

struct SignedSpectrum {
  std::vector<double> values;     // signed eigenvalues, ascending
  std::vector<double> residuals;  // raw ||Box w - nu w|| per pair
  double symmetry_defect = 0.0;   // max_i |values[i] + values[n-1-i]|
  double square_match = 0.0;      // max_i |values[i]^2 - matched lambda^2|
  SolverMeta meta;
};

// Signed low spectrum: solves the squared operator, closes the trailing
// eigenvalue cluster (so the returned span is invariant), and diagonalizes
// the operator restricted to it.  May return fewer than `count` values when
// the cluster boundary falls earlier.  The spectrum is symmetric about zero
// (volume grading anticommutes with the operator); symmetry_defect and
// square_match report the measured multiset defects.
SignedSpectrum signed_box_spectrum(const GeometryTables& tab, int count,
                                   const EigOptions& opt);

// ---------------------------------------------------------------------------
// Refinement persistence
// ---------------------------------------------------------------------------

struct PersistenceReport {
  std::vector<std::array<double, 2>> matched;  // (coarse value, fine value)
  std::vector<double> dropped;                 // coarse values with no match
  double cpers = 0.0;                          // drift constant used
  double hc2 = 0.0;                            // coarse h^2
};

// Greedy nearest matching of coarse-grid eigenvalues against fine-grid ones;
// a coarse value v persists when a fine value lies within
// cpers * max(1, |v|) * h_coarse^2.  Non-persistent values are reported
// separately, never silently dropped.
PersistenceReport persistence_filter(std::vector<double> coarse, std::vector<double> fine,
                                     double h_coarse, double cpers = 1.0);

// ---------------------------------------------------------------------------
// Field diagnostics
// ---------------------------------------------------------------------------

// max_i ||nabla^t_i psi|| / ||psi||: zero iff psi is parallel for the
// t-connection.  psi = 0 is rejected (InputError).
double parallel_residual(const GeometryTables& tab, double t, const SpinorField& psi);

// ||negative-chirality part of psi|| / ||psi|| (components {1,2}), 0 for a
// field entirely in the positive (even-degree) sector.  psi = 0 rejected.
double minus_chirality_fraction(const SpinorField& psi);

}  // namespace hs
