#pragma once

// Shared helpers for the unit tests and the acceptance runner: seeded random
// matrix generators, closed-form references for the two-level drive, and a
// small CSV reader for checking emitted tables.

#include <qwork/quantum.hpp>
#include <qwork/rng.hpp>
#include <qwork/tpm.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>

namespace testsupport {

inline double gauss(qwork::SplitStream& rng) {
  // Box-Muller; 1-u keeps the log argument strictly positive.
  const double u1 = 1.0 - rng.next_double();
  const double u2 = rng.next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline qwork::Matrix ginibre(int dim, qwork::SplitStream& rng) {
  qwork::Matrix g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = {gauss(rng), gauss(rng)};
  return g;
}

// Haar-distributed unitary: QR of a Ginibre matrix with the R-diagonal phase
// divided out.
inline qwork::Matrix haar_unitary(int dim, qwork::SplitStream& rng) {
  const qwork::Matrix g = ginibre(dim, rng);
  Eigen::HouseholderQR<qwork::Matrix> qr(g);
  qwork::Matrix q = qr.householderQ();
  const qwork::Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j) {
    const std::complex<double> d = r(j, j);
    const double mag = std::abs(d);
    if (mag > 0.0) q.col(j) *= d / mag;
  }
  return q;
}

inline qwork::HermitianOperator random_hermitian(int dim, qwork::SplitStream& rng) {
  const qwork::Matrix g = ginibre(dim, rng);
  return qwork::HermitianOperator((g + g.adjoint()).eval() / 2.0);
}

// Closed forms for the cosine-ramp two-level drive with x(tau)/z = sqrt(3).
// Everything below follows from the endpoint spectra (-z/2, z/2) and (-z, z)
// and the pi/3 mixing angle at t = tau.
struct ClosedForm {
  double z_khz = 5.0 / std::numbers::sqrt3;

  double beta(double beta_z) const { return beta_z / z_khz; }

  double mean_exp_w(double beta_z) const {
    return std::cosh(beta_z) / std::cosh(beta_z / 2.0);
  }
  double delta_f_khz(double beta_z) const {
    const double b = beta(beta_z);
    return -std::log(std::cosh(beta_z) / std::cosh(beta_z / 2.0)) / b;
  }
  double var_adiabatic(double beta_z) const {
    const double m = mean_exp_w(beta_z);
    return std::cosh(1.5 * beta_z) / std::cosh(0.5 * beta_z) - m * m;
  }
  double var_sudden(double beta_z) const {
    const double m = mean_exp_w(beta_z);
    const double second = (3.0 * std::cosh(1.5 * beta_z) + std::cosh(2.5 * beta_z)) /
                          (4.0 * std::cosh(0.5 * beta_z));
    return second - m * m;
  }
};

struct Csv {
  std::vector<std::string> cols;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv: no column " + name);
  }
  double num(size_t row, const std::string& name) const {
    return std::strtod(rows.at(row).at(col(name)).c_str(), nullptr);
  }
  const std::string& str(size_t row, const std::string& name) const {
    return rows.at(row).at(col(name));
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline Csv read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty " + path);
  csv.cols = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    csv.rows.push_back(split_csv_line(line));
  }
  return csv;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a shell command, returns the process exit code (-1 if it did not exit
// normally).
inline int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

}  // namespace testsupport
