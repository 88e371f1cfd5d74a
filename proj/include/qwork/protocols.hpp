// protocols.hpp -- drive protocols for a two-level system: transverse-field
// ramp X(t) on a fixed longitudinal splitting Z, optional counterdiabatic
// (CD) term, instantaneous spectra, and the adiabaticity figure of merit.
//
// The bare Hamiltonian is H0(t) = Z*Sz + X(t)*Sx with entries in kHz; the CD
// variant adds Y(t)*Sy with Y = Z*X'(t) / (2*pi*(X^2 + Z^2)), which cancels
// transitions between instantaneous eigenstates exactly (for any ramp shape
// and speed).  Time is in ms, so X' carries kHz/ms.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwork/quantum.hpp"

namespace qwork {

enum class ProtocolKind { Bare, CounterDiabatic };

struct Schedule {
  enum class Shape { CosineRamp, PiecewiseLinear };
  Shape shape = Shape::CosineRamp;
  // PiecewiseLinear: X values (kHz) at uniformly spaced times spanning
  // [0, tau]; unused (and required empty) for CosineRamp.
  std::vector<double> nodes;
};

inline Schedule cosine_ramp() { return {}; }

inline Schedule piecewise_linear(std::vector<double> nodes) {
  return {Schedule::Shape::PiecewiseLinear, std::move(nodes)};
}

struct DriveProtocol {
  double z_khz = 5.0 / std::numbers::sqrt3;
  double x_max_khz = 5.0;
  double tau_ms = 0.05;
  ProtocolKind kind = ProtocolKind::Bare;
  Schedule schedule{};

  void validate() const {
    if (!(z_khz > 0.0) || !std::isfinite(z_khz))
      throw std::invalid_argument("DriveProtocol: z_khz must be finite and > 0");
    if (!(x_max_khz >= 0.0) || !std::isfinite(x_max_khz))
      throw std::invalid_argument("DriveProtocol: x_max_khz must be finite and >= 0");
    if (!(tau_ms > 0.0) || !std::isfinite(tau_ms))
      throw std::invalid_argument("DriveProtocol: tau_ms must be finite and > 0");
    if (schedule.shape == Schedule::Shape::CosineRamp) {
      if (!schedule.nodes.empty())
        throw std::invalid_argument("DriveProtocol: cosine ramp takes no schedule nodes");
    } else {
      if (schedule.nodes.size() < 2)
        throw std::invalid_argument("DriveProtocol: piecewise-linear ramp needs >= 2 nodes");
      for (double v : schedule.nodes)
        if (!std::isfinite(v))
          throw std::invalid_argument("DriveProtocol: schedule nodes must be finite");
    }
  }
};

namespace detail {

inline double checked_time(const DriveProtocol& p, double t_ms, const char* fn) {
  const double slack = 1e-12 * p.tau_ms;
  if (!std::isfinite(t_ms) || t_ms < -slack || t_ms > p.tau_ms + slack)
    throw std::invalid_argument(std::string(fn) + ": t outside [0, tau]");
  return std::min(std::max(t_ms, 0.0), p.tau_ms);
}

}  // namespace detail

// ---- ramp shape and its rate ----

inline double x_schedule(const DriveProtocol& p, double t_ms) {
  p.validate();
  const double t = detail::checked_time(p, t_ms, "x_schedule");
  if (p.schedule.shape == Schedule::Shape::CosineRamp)
    return 0.5 * p.x_max_khz * (1.0 - std::cos(std::numbers::pi * t / p.tau_ms));
  const auto& nodes = p.schedule.nodes;
  const auto segments = static_cast<Eigen::Index>(nodes.size()) - 1;
  const double dt = p.tau_ms / static_cast<double>(segments);
  auto idx = static_cast<Eigen::Index>(t / dt);
  idx = std::min(idx, segments - 1);
  const double frac = t / dt - static_cast<double>(idx);
  return nodes[static_cast<std::size_t>(idx)] +
         frac * (nodes[static_cast<std::size_t>(idx) + 1] - nodes[static_cast<std::size_t>(idx)]);
}

// dX/dt in kHz/ms.  Piecewise-linear ramps use the slope of the segment that
// contains t, taking the right-hand segment at interior nodes.
inline double x_schedule_rate(const DriveProtocol& p, double t_ms) {
  p.validate();
  const double t = detail::checked_time(p, t_ms, "x_schedule_rate");
  if (p.schedule.shape == Schedule::Shape::CosineRamp) {
    const double w = std::numbers::pi / p.tau_ms;
    return 0.5 * p.x_max_khz * w * std::sin(w * t);
  }
  const auto& nodes = p.schedule.nodes;
  const auto segments = static_cast<Eigen::Index>(nodes.size()) - 1;
  const double dt = p.tau_ms / static_cast<double>(segments);
  auto idx = static_cast<Eigen::Index>(t / dt);
  idx = std::min(idx, segments - 1);
  return (nodes[static_cast<std::size_t>(idx) + 1] - nodes[static_cast<std::size_t>(idx)]) / dt;
}

// CD drive amplitude Y(t) in kHz.
inline double cd_coefficient(const DriveProtocol& p, double t_ms) {
  const double x = x_schedule(p, t_ms);
  const double rate = x_schedule_rate(p, t_ms);
  return p.z_khz * rate / (kTwoPi * (x * x + p.z_khz * p.z_khz));
}

// Instantaneous mixing angle theta(t) = atan(X/Z) of the bare Hamiltonian.
inline double mixing_angle(const DriveProtocol& p, double t_ms) {
  return std::atan2(x_schedule(p, t_ms), p.z_khz);
}

inline HermitianOperator hamiltonian_at(const DriveProtocol& p, double t_ms) {
  Matrix h = p.z_khz * spin_z().matrix() + x_schedule(p, t_ms) * spin_x().matrix();
  if (p.kind == ProtocolKind::CounterDiabatic)
    h += cd_coefficient(p, t_ms) * spin_y().matrix();
  return HermitianOperator(std::move(h));
}

// ---- integration helpers ----

// Largest instantaneous eigenvalue spread along the protocol (kHz), scanned
// on a uniform grid; sets the default step density.
inline double max_eigen_gap(const DriveProtocol& p, int n_scan = 257) {
  p.validate();
  if (n_scan < 2) throw std::invalid_argument("max_eigen_gap: n_scan must be >= 2");
  const auto gap_at = [&p](double t) {
    const EigenSystem es = eigendecompose(hamiltonian_at(p, t));
    return es.values[es.values.size() - 1] - es.values[0];
  };
  double best = 0.0;
  int best_i = 0;
  for (int i = 0; i < n_scan; ++i) {
    const double t = p.tau_ms * static_cast<double>(i) / static_cast<double>(n_scan - 1);
    const double g = gap_at(t);
    if (g > best) {
      best = g;
      best_i = i;
    }
  }
  // Golden-section refinement around the best grid point; the scan alone can
  // undershoot a sharp interior peak.
  const double dt = p.tau_ms / static_cast<double>(n_scan - 1);
  double a = std::max(0.0, dt * (best_i - 1));
  double b = std::min(p.tau_ms, dt * (best_i + 1));
  constexpr double invphi = 0.6180339887498949;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = gap_at(x1), f2 = gap_at(x2);
  for (int iter = 0; iter < 200 && (b - a) > 1e-14 * p.tau_ms; ++iter) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = gap_at(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = gap_at(x1);
    }
  }
  return std::max(best, std::max(f1, f2));
}

inline int default_step_count(const DriveProtocol& p) {
  p.validate();
  return default_step_count(p.tau_ms, max_eigen_gap(p));
}

inline UnitaryOperator propagate(const DriveProtocol& p, int n_steps) {
  p.validate();
  return propagate([&p](double t) { return hamiltonian_at(p, t); }, p.tau_ms, n_steps);
}

// ---- adiabaticity figure of merit ----

struct AdiabaticitySample {
  double t_ms;
  double ratio;
};

struct AdiabaticityReport {
  double gamma;            // max over t of the sampled ratio
  double argmax_time_ms;   // where the max was attained
  std::vector<AdiabaticitySample> samples;  // grid + refined point, ascending t
};

namespace detail {

// |<lower| dH/dt |upper>| / (angular gap)^2 for the bare protocol; dH/dt =
// 2*pi * X'(t) * Sx in angular units, gap converted by the same 2*pi.
inline double adiabaticity_ratio(const DriveProtocol& p, double t_ms) {
  const EigenSystem es = eigendecompose(hamiltonian_at(p, t_ms));
  const double gap = es.values[1] - es.values[0];
  const Complex me = (es.vectors.col(0).adjoint() * spin_x().matrix() * es.vectors.col(1))(0, 0);
  return x_schedule_rate(p, t_ms) * std::abs(me) / (kTwoPi * gap * gap);
}

}  // namespace detail

// Worst-case adiabaticity ratio over the protocol: sampled on a uniform grid
// of n_samples points, then the bracketing interval around the grid argmax is
// refined by golden-section search.  Endpoint rates of smooth ramps vanish,
// so the plain grid maximum would understate the true supremum.
inline AdiabaticityReport adiabatic_parameter(const DriveProtocol& p, int n_samples = 2001) {
  p.validate();
  if (p.kind != ProtocolKind::Bare)
    throw std::invalid_argument("adiabatic_parameter: defined for the bare protocol");
  if (n_samples < 100) throw std::invalid_argument("adiabatic_parameter: n_samples must be >= 100");

  AdiabaticityReport report;
  report.samples.reserve(static_cast<std::size_t>(n_samples) + 1);
  int grid_argmax = 0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = p.tau_ms * static_cast<double>(i) / static_cast<double>(n_samples - 1);
    const double r = detail::adiabaticity_ratio(p, t);
    report.samples.push_back({t, r});
    if (r > report.samples[static_cast<std::size_t>(grid_argmax)].ratio) grid_argmax = i;
  }

  const double dt = p.tau_ms / static_cast<double>(n_samples - 1);
  double a = std::max(0.0, report.samples[static_cast<std::size_t>(grid_argmax)].t_ms - dt);
  double b = std::min(p.tau_ms, report.samples[static_cast<std::size_t>(grid_argmax)].t_ms + dt);
  constexpr double invphi = 0.6180339887498949;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = detail::adiabaticity_ratio(p, c);
  double fd = detail::adiabaticity_ratio(p, d);
  for (int it = 0; it < 200 && (b - a) > 1e-14 * p.tau_ms; ++it) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - invphi * (b - a);
      fc = detail::adiabaticity_ratio(p, c);
    } else {
      a = c; c = d; fc = fd;
      d = a + invphi * (b - a);
      fd = detail::adiabaticity_ratio(p, d);
    }
  }
  const double t_ref = 0.5 * (a + b);
  const AdiabaticitySample refined{t_ref, detail::adiabaticity_ratio(p, t_ref)};
  auto pos = std::lower_bound(report.samples.begin(), report.samples.end(), refined.t_ms,
                              [](const AdiabaticitySample& s, double t) { return s.t_ms < t; });
  report.samples.insert(pos, refined);

  report.gamma = report.samples.front().ratio;
  report.argmax_time_ms = report.samples.front().t_ms;
  for (const auto& s : report.samples) {
    if (s.ratio > report.gamma) {
      report.gamma = s.ratio;
      report.argmax_time_ms = s.t_ms;
    }
  }
  return report;
}

}  // namespace qwork
