// tpm.hpp -- two-point-measurement work statistics.
//
// Protocol: measure the initial Hamiltonian's energy (outcome m, thermal
// weight p0[m]), evolve with the protocol unitary, measure the final
// Hamiltonian's energy (outcome n).  Work for the record (m, n) is
// w = spectrum_tau[n] - spectrum0[m], and the joint probability is
// p0[m] * P(n | m) with P the transition matrix of the unitary between the
// two instantaneous eigenbases.  Everything downstream (exponentiated-work
// moments, free-energy differences, the fluctuation-relation residual) is a
// functional of this joint table.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwork/quantum.hpp"

namespace qwork {

inline constexpr double kStochasticTol = 1e-9;
inline constexpr double kTableSumTol = 1e-10;
inline constexpr double kAtomMergeTol = 1e-9;
inline constexpr double kVarianceClampTol = 1e-12;

// ---- thermal initial state ----

struct ThermalState {
  double beta;             // 1/kHz
  RealVector populations;  // Gibbs weights over the ascending spectrum
};

inline ThermalState thermal_populations(const RealVector& spectrum_khz, double beta) {
  if (spectrum_khz.size() < 1 || !spectrum_khz.allFinite())
    throw std::invalid_argument("thermal_populations: spectrum must be nonempty and finite");
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("thermal_populations: beta must be finite and >= 0");
  const double e_min = spectrum_khz.minCoeff();
  RealVector w(spectrum_khz.size());
  for (Eigen::Index k = 0; k < spectrum_khz.size(); ++k)
    w[k] = std::exp(-beta * (spectrum_khz[k] - e_min));
  w /= w.sum();
  return {beta, std::move(w)};
}

// ---- transition matrices ----

// P(m, n) = |<n_tau| U |m_0>|^2; rows index the initial eigenstate.  The
// result of a unitary between orthonormal bases is doubly stochastic, and
// that is enforced here as a numerical contract.
inline RealMatrix transition_probabilities(const UnitaryOperator& u, const EigenSystem& basis0,
                                           const EigenSystem& basis_tau) {
  const Eigen::Index d = u.dim();
  if (basis0.vectors.rows() != d || basis_tau.vectors.rows() != d ||
      basis0.vectors.cols() != d || basis_tau.vectors.cols() != d)
    throw std::invalid_argument("transition_probabilities: dimension mismatch");
  const Matrix amp = basis_tau.vectors.adjoint() * u.matrix() * basis0.vectors;
  RealMatrix p(d, d);
  for (Eigen::Index m = 0; m < d; ++m)
    for (Eigen::Index n = 0; n < d; ++n) p(m, n) = std::norm(amp(n, m));
  for (Eigen::Index k = 0; k < d; ++k) {
    const double row = p.row(k).sum();
    const double col = p.col(k).sum();
    if (std::abs(row - 1.0) > kStochasticTol || std::abs(col - 1.0) > kStochasticTol)
      throw numerics_error("transition_probabilities: double stochasticity defect " +
                           format_sci(std::max(std::abs(row - 1.0), std::abs(col - 1.0))));
  }
  return p;
}

// Quasistatic limit: the adiabatic theorem maps eigenstate m to eigenstate m.
inline RealMatrix adiabatic_transition_matrix(Eigen::Index dim) {
  return RealMatrix::Identity(dim, dim);
}

// Instantaneous-quench limit: the state does not evolve, so transitions are
// pure basis overlaps (U = identity).
inline RealMatrix sudden_transition_matrix(const EigenSystem& basis0, const EigenSystem& basis_tau) {
  return transition_probabilities(UnitaryOperator::identity(basis0.vectors.rows()), basis0,
                                  basis_tau);
}

// ---- joint distribution of measurement records ----

class JointProbabilityTable {
 public:
  JointProbabilityTable(const ThermalState& initial, const RealMatrix& transitions)
      : entries_(initial.populations.asDiagonal() * transitions) {
    if (initial.populations.size() != transitions.rows() ||
        transitions.rows() != transitions.cols())
      throw std::invalid_argument("JointProbabilityTable: dimension mismatch");
    validate();
  }

  explicit JointProbabilityTable(RealMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
      throw std::invalid_argument("JointProbabilityTable: need a square matrix");
    validate();
  }

  const RealMatrix& entries() const { return entries_; }
  Eigen::Index dim() const { return entries_.rows(); }
  RealVector initial_populations() const { return entries_.rowwise().sum(); }

 private:
  void validate() {
    if (!entries_.allFinite())
      throw std::invalid_argument("JointProbabilityTable: entries must be finite");
    for (Eigen::Index m = 0; m < entries_.rows(); ++m)
      for (Eigen::Index n = 0; n < entries_.cols(); ++n) {
        if (entries_(m, n) < -kHermitianTol)
          throw numerics_error("JointProbabilityTable: entry " + format_sci(entries_(m, n)) +
                               " below -1e-12");
        if (entries_(m, n) < 0.0) entries_(m, n) = 0.0;
      }
    const double total = entries_.sum();
    if (std::abs(total - 1.0) > kTableSumTol)
      throw numerics_error("JointProbabilityTable: total probability " + format_g17(total) +
                           " deviates from 1 beyond 1e-10");
  }

  RealMatrix entries_;
};

// ---- work distribution and moments ----

struct WorkAtom {
  double w_khz;
  double prob;
};

class WorkDistribution {
 public:
  explicit WorkDistribution(std::vector<WorkAtom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("WorkDistribution: no atoms");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!std::isfinite(atoms_[i].w_khz) || !(atoms_[i].prob >= 0.0))
        throw std::invalid_argument("WorkDistribution: atoms must be finite with prob >= 0");
      if (i > 0 && !(atoms_[i].w_khz > atoms_[i - 1].w_khz))
        throw std::invalid_argument("WorkDistribution: atoms must be strictly ascending in w");
      total += atoms_[i].prob;
    }
    if (std::abs(total - 1.0) > kTableSumTol)
      throw numerics_error("WorkDistribution: total probability " + format_g17(total) +
                           " deviates from 1 beyond 1e-10");
  }

  const std::vector<WorkAtom>& atoms() const { return atoms_; }

 private:
  std::vector<WorkAtom> atoms_;
};

// Collapse a joint table to the distribution of w = spectrum_tau[n] -
// spectrum0[m].  Atoms closer than 1e-9 kHz merge into the first atom of the
// cluster, so degenerate work values (e.g. diagonal records of a symmetric
// spectrum) appear once.
inline WorkDistribution work_distribution(const JointProbabilityTable& table,
                                          const RealVector& spectrum0,
                                          const RealVector& spectrum_tau) {
  const Eigen::Index d = table.dim();
  if (spectrum0.size() != d || spectrum_tau.size() != d)
    throw std::invalid_argument("work_distribution: spectrum size mismatch");
  std::vector<WorkAtom> raw;
  raw.reserve(static_cast<std::size_t>(d * d));
  for (Eigen::Index m = 0; m < d; ++m)
    for (Eigen::Index n = 0; n < d; ++n) {
      const double prob = table.entries()(m, n);
      if (prob == 0.0) continue;  // forbidden transition, not an atom
      raw.push_back({spectrum_tau[n] - spectrum0[m], prob});
    }
  std::sort(raw.begin(), raw.end(), [](const WorkAtom& a, const WorkAtom& b) {
    return a.w_khz < b.w_khz;
  });
  std::vector<WorkAtom> merged;
  merged.reserve(raw.size());
  for (const WorkAtom& a : raw) {
    if (!merged.empty() && a.w_khz - merged.back().w_khz <= kAtomMergeTol)
      merged.back().prob += a.prob;
    else
      merged.push_back(a);
  }
  return WorkDistribution(std::move(merged));
}

inline WorkDistribution work_distribution(const ThermalState& initial, const RealMatrix& transitions,
                                          const RealVector& spectrum0,
                                          const RealVector& spectrum_tau) {
  for (Eigen::Index m = 0; m < transitions.rows(); ++m)
    if (std::abs(transitions.row(m).sum() - 1.0) > kStochasticTol)
      throw std::invalid_argument("work_distribution: transitions must be row stochastic");
  return work_distribution(JointProbabilityTable(initial, transitions), spectrum0, spectrum_tau);
}

struct ExpWorkMoments {
  double mean;      // < e^{-beta w} >
  double variance;  // var( e^{-beta w} ), clamped at 0 within -1e-12
};

inline ExpWorkMoments exp_work_moments(const WorkDistribution& dist, double beta) {
  if (!std::isfinite(beta)) throw std::invalid_argument("exp_work_moments: beta must be finite");
  double mean = 0.0;
  double second = 0.0;
  for (const WorkAtom& a : dist.atoms()) {
    const double g = std::exp(-beta * a.w_khz);
    mean += a.prob * g;
    second += a.prob * g * g;
  }
  double variance = second - mean * mean;
  if (variance < 0.0) {
    if (variance < -kVarianceClampTol)
      throw numerics_error("exp_work_moments: variance " + format_sci(variance) +
                           " below the -1e-12 clamp window");
    variance = 0.0;
  }
  return {mean, variance};
}

// ---- equilibrium reference quantities ----

namespace detail {

inline double log_partition(const RealVector& spectrum_khz, double beta) {
  const double e_min = spectrum_khz.minCoeff();
  double s = 0.0;
  for (Eigen::Index k = 0; k < spectrum_khz.size(); ++k)
    s += std::exp(-beta * (spectrum_khz[k] - e_min));
  return std::log(s) - beta * e_min;
}

}  // namespace detail

// Delta F = -(1/beta) ln(Z_tau / Z_0), in kHz.
inline double free_energy_difference(const RealVector& spectrum0, const RealVector& spectrum_tau,
                                     double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("free_energy_difference: beta must be finite and > 0");
  if (spectrum0.size() < 1 || spectrum_tau.size() < 1 || !spectrum0.allFinite() ||
      !spectrum_tau.allFinite())
    throw std::invalid_argument("free_energy_difference: spectra must be nonempty and finite");
  return -(detail::log_partition(spectrum_tau, beta) - detail::log_partition(spectrum0, beta)) /
         beta;
}

// | <e^{-beta w}> - e^{-beta DeltaF} |: exactly zero in exact arithmetic for
// any unitary protocol, so this measures accumulated numerical error.
inline double jarzynski_residual(const WorkDistribution& dist, double beta,
                                 const RealVector& spectrum0, const RealVector& spectrum_tau) {
  const double target = std::exp(-beta * free_energy_difference(spectrum0, spectrum_tau, beta));
  return std::abs(exp_work_moments(dist, beta).mean - target);
}

}  // namespace qwork
