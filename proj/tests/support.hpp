#pragma once

// Shared helpers for the test suites: finite-difference oracles and small
// fixtures.

#include <charprobe/rng.hpp>
#include <charprobe/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

namespace charprobe::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.uniform(lo, hi);
  return m;
}

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Central difference of f() with respect to coordinate k of m.
inline double central_difference(Matrix& m, Eigen::Index k, const std::function<double()>& f,
                                 double step = 1e-5) {
  const double saved = m.data()[k];
  m.data()[k] = saved + step;
  const double up = f();
  m.data()[k] = saved - step;
  const double down = f();
  m.data()[k] = saved;
  return (up - down) / (2.0 * step);
}

// Reduces y to a scalar as sum(y .* r) using only graph ops, so the
// gradient reaching y is r.
inline NodeId weighted_sum(Graph& g, NodeId y, const Matrix& r) {
  const Matrix& v = g.value(y);
  const NodeId ones_row = g.input(Matrix::Ones(1, v.rows()));
  const NodeId ones_col = g.input(Matrix::Ones(v.cols(), 1));
  return g.matmul(g.matmul(ones_row, g.mul(y, g.input(r))), ones_col);
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("charprobe-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace charprobe::test
