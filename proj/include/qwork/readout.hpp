// readout.hpp -- measurement-error model and inversion-based correction.
//
// A readout model is a column-stochastic confusion matrix T: column j holds
// the probabilities of reporting each outcome when the true state is j.
// Observed statistics relate to true ones by p_obs = T p.  Correction
// inverts T on the observed initial populations and on the observed
// conditional (column-stochastic) transition matrix, then reassembles the
// joint table; small negative/overshoot entries produced by the inversion
// are clamped into [0, 1] and the total clamped mass is reported.

#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "qwork/tpm.hpp"

namespace qwork {

inline constexpr double kColumnSumTol = 1e-12;
inline constexpr double kReadoutDetFloor = 1e-6;
inline constexpr double kClampWindow = 0.05;

class ReadoutModel {
 public:
  explicit ReadoutModel(RealMatrix confusion) : confusion_(std::move(confusion)) {
    if (confusion_.rows() != confusion_.cols() || confusion_.rows() < 2)
      throw std::invalid_argument("ReadoutModel: need a square matrix of dimension >= 2");
    if (!confusion_.allFinite())
      throw std::invalid_argument("ReadoutModel: entries must be finite");
    for (Eigen::Index j = 0; j < confusion_.cols(); ++j) {
      for (Eigen::Index i = 0; i < confusion_.rows(); ++i)
        if (confusion_(i, j) < 0.0 || confusion_(i, j) > 1.0)
          throw std::invalid_argument("ReadoutModel: entries must lie in [0, 1]");
      if (std::abs(confusion_.col(j).sum() - 1.0) > kColumnSumTol)
        throw std::invalid_argument("ReadoutModel: column " + std::to_string(j) +
                                    " must sum to 1 within 1e-12");
    }
  }

  static ReadoutModel identity(Eigen::Index dim) {
    return ReadoutModel(RealMatrix::Identity(dim, dim));
  }

  Eigen::Index dim() const { return confusion_.rows(); }
  const RealMatrix& matrix() const { return confusion_; }
  double determinant() const { return confusion_.determinant(); }

 private:
  RealMatrix confusion_;
};

namespace detail {

inline void check_stochastic_vector(const RealVector& p, const char* fn) {
  if (p.size() < 1 || !p.allFinite())
    throw std::invalid_argument(std::string(fn) + ": probabilities must be finite");
  if (std::abs(p.sum() - 1.0) > kTableSumTol)
    throw std::invalid_argument(std::string(fn) + ": probabilities must sum to 1 within 1e-10");
}

inline void check_column_stochastic(const RealMatrix& m, const char* fn) {
  if (m.rows() != m.cols() || !m.allFinite())
    throw std::invalid_argument(std::string(fn) + ": need a finite square matrix");
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (std::abs(m.col(j).sum() - 1.0) > kTableSumTol)
      throw std::invalid_argument(std::string(fn) +
                                  ": columns must sum to 1 within 1e-10");
}

}  // namespace detail

// Forward model: what a detector described by `model` reports for true
// statistics.  Columns of stochastic inputs stay stochastic exactly.
inline RealVector apply_readout_noise(const RealVector& probabilities, const ReadoutModel& model) {
  detail::check_stochastic_vector(probabilities, "apply_readout_noise");
  if (probabilities.size() != model.dim())
    throw std::invalid_argument("apply_readout_noise: dimension mismatch");
  return model.matrix() * probabilities;
}

inline RealMatrix apply_readout_noise(const RealMatrix& column_stochastic,
                                      const ReadoutModel& model) {
  detail::check_column_stochastic(column_stochastic, "apply_readout_noise");
  if (column_stochastic.rows() != model.dim())
    throw std::invalid_argument("apply_readout_noise: dimension mismatch");
  return model.matrix() * column_stochastic;
}

struct CorrectedJoint {
  JointProbabilityTable table;
  double clamp_adjustment;  // total absolute probability moved by clamping
};

// Invert the readout model on observed initial populations p0_obs and the
// observed conditional transition matrix cond_obs (column j = distribution
// of final outcomes given initial outcome j), and rebuild the joint table
// joint(m, n) = cond(n, m) * p0(m).  Inversion can push entries slightly
// outside [0, 1]; excursions within 0.05 are clamped (and summed into
// clamp_adjustment), larger ones mean the data and model are inconsistent.
inline CorrectedJoint correct_joint(const RealVector& p0_observed,
                                    const RealMatrix& cond_observed, const ReadoutModel& model) {
  detail::check_stochastic_vector(p0_observed, "correct_joint");
  detail::check_column_stochastic(cond_observed, "correct_joint");
  const Eigen::Index d = model.dim();
  if (p0_observed.size() != d || cond_observed.rows() != d)
    throw std::invalid_argument("correct_joint: dimension mismatch");
  if (std::abs(model.determinant()) < kReadoutDetFloor)
    throw std::invalid_argument("correct_joint: readout model is numerically singular (|det| < 1e-6)");

  const RealMatrix inv = model.matrix().inverse();
  const RealVector p0 = inv * p0_observed;
  const RealMatrix cond = inv * cond_observed;

  RealMatrix joint(d, d);
  for (Eigen::Index m = 0; m < d; ++m)
    for (Eigen::Index n = 0; n < d; ++n) joint(m, n) = cond(n, m) * p0[m];

  double adjustment = 0.0;
  for (Eigen::Index m = 0; m < d; ++m)
    for (Eigen::Index n = 0; n < d; ++n) {
      double& v = joint(m, n);
      if (v < -kClampWindow || v > 1.0 + kClampWindow)
        throw numerics_error("correct_joint: corrected entry " + format_g17(v) +
                             " outside the clamp window [-0.05, 1.05]");
      const double clamped = std::min(std::max(v, 0.0), 1.0);
      adjustment += std::abs(clamped - v);
      v = clamped;
    }
  const double total = joint.sum();
  if (!(total > 0.0))
    throw numerics_error("correct_joint: corrected table has no probability mass");
  joint /= total;

  return {JointProbabilityTable(std::move(joint)), adjustment};
}

}  // namespace qwork
