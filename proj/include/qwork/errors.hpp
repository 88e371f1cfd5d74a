// errors.hpp -- exception taxonomy and small diagnostics helpers.
//
// Two failure classes are kept apart on purpose:
//   * std::invalid_argument -- the caller handed us something malformed
//     (bad dimensions, out-of-range parameter, unparseable config value).
//   * numerics_error -- an internal numerical contract was breached
//     (unitarity loss, stochasticity violation, failed eigensolve).
// The command-line driver maps config problems to exit code 2 and
// numerics_error to exit code 3.

#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace qwork {

struct numerics_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compact scientific formatting for diagnostics ("3.142e-08").
inline std::string format_sci(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6e", x);
  return buf;
}

// Shortest exact decimal form: %.17g round-trips every double.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace qwork
