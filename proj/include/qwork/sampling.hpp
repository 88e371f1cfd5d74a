// sampling.hpp -- Monte Carlo side of the two-point-measurement statistics:
// trajectory draws from a joint table, the finite-sample free-energy
// estimator, and replica convergence studies.
//
// Determinism contract: every result here is a pure function of the inputs
// and the seed.  Sub-streams are derived with the splitting rule documented
// in rng.hpp; the convergence study keys them as child(grid index) ->
// child(replica index), so the estimate of replica r at grid point g never
// depends on evaluation order or worker count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qwork/parallel.hpp"
#include "qwork/rng.hpp"
#include "qwork/tpm.hpp"

namespace qwork {

// One two-point measurement record: initial eigenstate m, final eigenstate n,
// and the work value w = spectrum_tau[n] - spectrum0[m] (exactly, in kHz).
struct TrajectorySample {
  int m;
  int n;
  double w_khz;
};

namespace detail {

// Inverse-CDF sampler over the flattened (row-major) atoms of a joint table.
class DiscreteSampler {
 public:
  DiscreteSampler(const JointProbabilityTable& table, const RealVector& spectrum0,
                  const RealVector& spectrum_tau) {
    const Eigen::Index d = table.dim();
    if (spectrum0.size() != d || spectrum_tau.size() != d)
      throw std::invalid_argument("sample_trajectories: spectrum size mismatch");
    atoms_.reserve(static_cast<std::size_t>(d * d));
    cdf_.reserve(static_cast<std::size_t>(d * d));
    double acc = 0.0;
    for (Eigen::Index m = 0; m < d; ++m)
      for (Eigen::Index n = 0; n < d; ++n) {
        acc += table.entries()(m, n);
        atoms_.push_back({static_cast<int>(m), static_cast<int>(n),
                          spectrum_tau[n] - spectrum0[m]});
        cdf_.push_back(acc);
      }
    cdf_.back() = 1.0;  // guard the top bucket against cumulative rounding
  }

  TrajectorySample draw(SplitStream& rng) const {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const std::size_t idx = std::min(static_cast<std::size_t>(it - cdf_.begin()),
                                     cdf_.size() - 1);
    return atoms_[idx];
  }

 private:
  std::vector<TrajectorySample> atoms_;
  std::vector<double> cdf_;
};

}  // namespace detail

inline std::vector<TrajectorySample> sample_trajectories(const JointProbabilityTable& table,
                                                         const RealVector& spectrum0,
                                                         const RealVector& spectrum_tau,
                                                         std::int64_t count, SplitStream rng) {
  if (count < 1) throw std::invalid_argument("sample_trajectories: count must be >= 1");
  const detail::DiscreteSampler sampler(table, spectrum0, spectrum_tau);
  std::vector<TrajectorySample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) out.push_back(sampler.draw(rng));
  return out;
}

inline std::vector<TrajectorySample> sample_trajectories(const JointProbabilityTable& table,
                                                         const RealVector& spectrum0,
                                                         const RealVector& spectrum_tau,
                                                         std::int64_t count, std::uint64_t seed) {
  return sample_trajectories(table, spectrum0, spectrum_tau, count, SplitStream(seed));
}

// Finite-sample fluctuation-relation estimate
//   DeltaF_est = -(1/beta) ln( (1/N) sum_k e^{-beta w_k} ),
// computed in log-sum-exp form.  Work values repeat (there are at most dim^2
// distinct atoms), so exponentials are memoized by exact argument; the sum
// itself runs in sample order and is bit-identical to the naive loop.
inline double jarzynski_estimator(std::span<const TrajectorySample> samples, double beta) {
  if (samples.empty()) throw std::invalid_argument("jarzynski_estimator: no samples");
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("jarzynski_estimator: beta must be finite and > 0");

  double hi = -beta * samples[0].w_khz;
  for (const TrajectorySample& s : samples) hi = std::max(hi, -beta * s.w_khz);

  struct CacheEntry {
    double w;
    double g;
  };
  std::vector<CacheEntry> cache;
  cache.reserve(16);
  double sum = 0.0;
  for (const TrajectorySample& s : samples) {
    double g = -1.0;
    for (const CacheEntry& e : cache)
      if (e.w == s.w_khz) {
        g = e.g;
        break;
      }
    if (g < 0.0) {
      g = std::exp(-beta * s.w_khz - hi);
      if (cache.size() < 64) cache.push_back({s.w_khz, g});
    }
    sum += g;
  }
  return -(hi + std::log(sum / static_cast<double>(samples.size()))) / beta;
}

// ---- replica convergence study ----

struct EstimatorSeries {
  std::vector<std::int64_t> n_grid;
  std::vector<double> mean_estimate;  // kHz, replica mean of DeltaF_est at each N
  std::vector<double> bias;           // kHz, mean_estimate - delta_f
  std::vector<double> rmse;           // kHz, sqrt(mean (DeltaF_est - delta_f)^2)
  double delta_f;                     // kHz, exact reference
  std::int64_t replicas;
  std::uint64_t seed;
};

// For each N in n_grid, runs `replicas` independent N-sample estimations and
// reports replica mean, bias, and RMSE against the exact DeltaF.  Replicas
// are split across workers; each writes only its own slots and the reduction
// runs in replica order, so results do not depend on the worker count
// (n_workers = 0 picks the hardware concurrency).
inline EstimatorSeries convergence_study(const JointProbabilityTable& table,
                                         const RealVector& spectrum0,
                                         const RealVector& spectrum_tau, double beta,
                                         std::vector<std::int64_t> n_grid, std::int64_t replicas,
                                         std::uint64_t seed, int n_workers = 0) {
  if (n_grid.empty()) throw std::invalid_argument("convergence_study: n_grid must be nonempty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw std::invalid_argument("convergence_study: N must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1])
      throw std::invalid_argument("convergence_study: n_grid must be strictly increasing");
  }
  if (replicas < 2) throw std::invalid_argument("convergence_study: replicas must be >= 2");
  if (n_workers < 0) throw std::invalid_argument("convergence_study: n_workers must be >= 0");

  const detail::DiscreteSampler sampler(table, spectrum0, spectrum_tau);
  const double delta_f = free_energy_difference(spectrum0, spectrum_tau, beta);
  const SplitStream root(seed);
  const int workers = detail::resolve_workers(n_workers, replicas);

  EstimatorSeries series;
  series.n_grid = std::move(n_grid);
  series.delta_f = delta_f;
  series.replicas = replicas;
  series.seed = seed;

  std::vector<double> estimates(static_cast<std::size_t>(replicas));
  for (std::size_t g = 0; g < series.n_grid.size(); ++g) {
    const std::int64_t n = series.n_grid[g];
    const SplitStream grid_stream = root.child(g);

    detail::run_partitioned(replicas, workers, [&](std::int64_t r_begin, std::int64_t r_end) {
      std::vector<TrajectorySample> buf(static_cast<std::size_t>(n));
      for (std::int64_t r = r_begin; r < r_end; ++r) {
        SplitStream rng = grid_stream.child(static_cast<std::uint64_t>(r));
        for (std::int64_t k = 0; k < n; ++k)
          buf[static_cast<std::size_t>(k)] = sampler.draw(rng);
        estimates[static_cast<std::size_t>(r)] = jarzynski_estimator(buf, beta);
      }
    });

    double mean = 0.0;
    double mse = 0.0;
    for (std::int64_t r = 0; r < replicas; ++r) {
      const double e = estimates[static_cast<std::size_t>(r)];
      mean += e;
      const double dev = e - delta_f;
      mse += dev * dev;
    }
    mean /= static_cast<double>(replicas);
    mse /= static_cast<double>(replicas);
    series.mean_estimate.push_back(mean);
    series.bias.push_back(mean - delta_f);
    series.rmse.push_back(std::sqrt(mse));
  }
  return series;
}

}  // namespace qwork
