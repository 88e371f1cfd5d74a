// quantum.hpp -- dense Hermitian linear algebra for small driven systems:
// validated operator types, eigendecomposition with a deterministic
// phase/order convention, exact step exponentials, midpoint propagation.
//
// Unit convention used throughout: operator entries are frequencies in kHz,
// times are in ms, and phases are 2*pi * (kHz) * (ms), which is dimensionless
// because kHz * ms = 1.  Inverse temperatures are in 1/kHz.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwork/errors.hpp"

namespace qwork {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kUnitaryTol = 1e-9;
inline constexpr double kEigenResidualTol = 1e-10;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---- validated operator types ----

// Hermitian matrix in the fixed computational basis, entries in kHz.
class HermitianOperator {
 public:
  explicit HermitianOperator(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() < 2)
      throw std::invalid_argument("HermitianOperator: need a square matrix of dimension >= 2");
    if (!entries_.allFinite())
      throw std::invalid_argument("HermitianOperator: entries must be finite");
    const double defect = (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff();
    if (!(defect <= kHermitianTol))
      throw std::invalid_argument("HermitianOperator: symmetry defect " + format_sci(defect) +
                                  " exceeds " + format_sci(kHermitianTol));
  }

  Eigen::Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }

 private:
  Matrix entries_;
};

// Frobenius distance from U being unitary.
inline double unitarity_defect(const Matrix& u) {
  return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).norm();
}

class UnitaryOperator {
 public:
  explicit UnitaryOperator(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
      throw std::invalid_argument("UnitaryOperator: need a square matrix");
    const double defect = unitarity_defect(entries_);
    if (!(defect <= kUnitaryTol))
      throw numerics_error("UnitaryOperator: unitarity defect " + format_sci(defect) +
                           " exceeds " + format_sci(kUnitaryTol));
  }

  static UnitaryOperator identity(Eigen::Index dim) {
    return UnitaryOperator(Matrix::Identity(dim, dim));
  }

  Eigen::Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }

 private:
  Matrix entries_;
};

// ---- spin-1/2 constants (basis order |0>, |1>) ----

inline const HermitianOperator& spin_z() {
  static const HermitianOperator op{[] {
    Matrix m(2, 2);
    m << -0.5, 0.0, 0.0, 0.5;
    return m;
  }()};
  return op;
}

inline const HermitianOperator& spin_x() {
  static const HermitianOperator op{[] {
    Matrix m(2, 2);
    m << 0.0, 0.5, 0.5, 0.0;
    return m;
  }()};
  return op;
}

inline const HermitianOperator& spin_y() {
  static const HermitianOperator op{[] {
    Matrix m(2, 2);
    m << Complex(0.0, 0.0), Complex(0.0, 0.5), Complex(0.0, -0.5), Complex(0.0, 0.0);
    return m;
  }()};
  return op;
}

// ---- eigendecomposition with a deterministic convention ----

struct EigenSystem {
  RealVector values;  // ascending, kHz
  Matrix vectors;     // orthonormal columns; column k pairs with values[k]
};

namespace detail {

// Lexicographic order on (re, im) pairs of the column entries.
inline bool column_less(const Matrix& m, Eigen::Index a, Eigen::Index b) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Complex& x = m(r, a);
    const Complex& y = m(r, b);
    if (x.real() != y.real()) return x.real() < y.real();
    if (x.imag() != y.imag()) return x.imag() < y.imag();
  }
  return false;
}

}  // namespace detail

// Eigenpairs sorted by ascending eigenvalue.  Phase convention: in each
// eigenvector the entry of largest magnitude (first such, on ties) is made
// real and positive.  Exact eigenvalue ties are broken by lexicographic
// order of the phase-fixed eigenvectors, so the decomposition is a pure
// function of the input matrix.
inline EigenSystem eigendecompose(const HermitianOperator& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
  if (solver.info() != Eigen::Success)
    throw numerics_error("eigendecompose: solver did not converge");

  EigenSystem es{solver.eigenvalues(), solver.eigenvectors()};
  const Eigen::Index d = h.dim();

  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::Index imax = 0;
    es.vectors.col(k).cwiseAbs().maxCoeff(&imax);
    const Complex pivot = es.vectors(imax, k);
    const double mag = std::abs(pivot);
    if (mag > 0.0) es.vectors.col(k) *= std::conj(pivot) / mag;
  }

  for (Eigen::Index lo = 0; lo < d;) {
    Eigen::Index hi = lo + 1;
    while (hi < d && es.values[hi] == es.values[lo]) ++hi;
    if (hi - lo > 1) {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(hi - lo));
      std::iota(order.begin(), order.end(), lo);
      std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return detail::column_less(es.vectors, a, b);
      });
      Matrix block(d, hi - lo);
      for (Eigen::Index j = 0; j < hi - lo; ++j)
        block.col(j) = es.vectors.col(order[static_cast<std::size_t>(j)]);
      es.vectors.middleCols(lo, hi - lo) = block;
    }
    lo = hi;
  }

  const double scale = std::max(h.matrix().norm(), 1.0);
  const double residual = (h.matrix() * es.vectors - es.vectors * es.values.asDiagonal()).norm();
  if (!(residual <= kEigenResidualTol * scale))
    throw numerics_error("eigendecompose: residual " + format_sci(residual) +
                         " exceeds tolerance at scale " + format_sci(scale));
  const double ortho = (es.vectors.adjoint() * es.vectors - Matrix::Identity(d, d)).norm();
  if (!(ortho <= kEigenResidualTol))
    throw numerics_error("eigendecompose: basis orthonormality defect " + format_sci(ortho));

  return es;
}

// ---- time evolution ----

// Exact propagator exp(-i 2*pi H dt) for a constant Hamiltonian (entries in
// kHz, dt in ms); the 2*pi converts frequency to angular phase.
inline UnitaryOperator evolve_step(const HermitianOperator& h, double dt_ms) {
  if (!(dt_ms >= 0.0) || !std::isfinite(dt_ms))
    throw std::invalid_argument("evolve_step: dt must be finite and >= 0");
  if (dt_ms == 0.0) return UnitaryOperator::identity(h.dim());
  const EigenSystem es = eigendecompose(h);
  Vector phases(h.dim());
  for (Eigen::Index k = 0; k < h.dim(); ++k) {
    const double phi = -kTwoPi * es.values[k] * dt_ms;
    phases[k] = Complex(std::cos(phi), std::sin(phi));
  }
  Matrix u = es.vectors * phases.asDiagonal() * es.vectors.adjoint();
  return UnitaryOperator(std::move(u));
}

// Time-ordered product of midpoint-rule step exponentials over [0, duration].
// Each factor is exactly unitary, so the product is as well; the midpoint
// sampling makes the scheme second-order accurate in the step size.
inline UnitaryOperator propagate(const std::function<HermitianOperator(double)>& hamiltonian_at_ms,
                                 double duration_ms, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("propagate: n_steps must be >= 1");
  if (!(duration_ms > 0.0) || !std::isfinite(duration_ms))
    throw std::invalid_argument("propagate: duration must be finite and > 0");

  const double dt = duration_ms / n_steps;
  Matrix u = evolve_step(hamiltonian_at_ms(0.5 * dt), dt).matrix();
  for (int k = 1; k < n_steps; ++k) {
    const double t_mid = (k + 0.5) * dt;
    u = evolve_step(hamiltonian_at_ms(t_mid), dt).matrix() * u;
  }
  return UnitaryOperator(std::move(u));
}

// Step-count rule: at least 400 steps per period of the fastest instantaneous
// gap, with a floor of 2000 steps.
inline int default_step_count(double duration_ms, double max_gap_khz) {
  if (!(duration_ms > 0.0) || !(max_gap_khz >= 0.0))
    throw std::invalid_argument("default_step_count: need duration > 0 and gap >= 0");
  const double proposed = std::ceil(400.0 * duration_ms * max_gap_khz);
  const double capped = std::min(proposed, 50.0e6);
  return std::max(2000, static_cast<int>(capped));
}

}  // namespace qwork
