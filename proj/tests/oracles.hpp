#pragma once

// Independent dense reference computations used as test oracles. Nothing
// here calls into the library's kernels.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmpa/data.hpp"
#include "fedmpa/dense.hpp"
#include "fedmpa/graph.hpp"
#include "fedmpa/rng.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat eye(std::size_t n) {
  Mat m = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat from(const fedmpa::DenseMatrix& d) {
  Mat m = zeros(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) m[i][j] = d(i, j);
  return m;
}

inline Mat dense(const fedmpa::SparseGraph& g) {
  Mat m = zeros(g.n_nodes(), g.n_nodes());
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    auto nb = g.neighbors(i);
    auto v = g.row_values(i);
    for (std::size_t k = 0; k < nb.size(); ++k) m[i][nb[k]] = v[k];
  }
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat c = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < c[i].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat add(const Mat& a, const Mat& b, double sb = 1.0) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += sb * b[i][j];
  return c;
}

inline Mat scale(const Mat& a, double s) {
  Mat c = a;
  for (auto& row : c)
    for (double& v : row) v *= s;
  return c;
}

// D^-1/2 (A + I) D^-1/2 entry by entry from the dense adjacency.
inline Mat sym_norm_selfloop(const Mat& a) {
  const std::size_t n = a.size();
  Mat h = add(a, eye(n));
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += h[i][j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h[i][j] /= std::sqrt(d[i]) * std::sqrt(d[j]);
  return h;
}

// sum_{t<k} alpha (1-alpha)^t S^t R0 + (1-alpha)^k S^k R0
inline Mat ppr_partial_sum(const Mat& s, const Mat& r0, double alpha, std::size_t k) {
  Mat term = r0;  // S^t R0
  Mat out = zeros(r0.size(), r0[0].size());
  double w = 1.0;  // (1-alpha)^t
  for (std::size_t t = 0; t < k; ++t) {
    out = add(out, term, alpha * w);
    term = mul(s, term);
    w *= 1.0 - alpha;
  }
  return add(out, term, w);
}

// Solves M X = B by Gauss-Jordan elimination with partial pivoting.
inline Mat solve(Mat m, Mat b) {
  const std::size_t n = m.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) < 1e-300) throw std::runtime_error("singular");
    std::swap(m[col], m[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
      for (std::size_t c = 0; c < b[r].size(); ++c) b[r][c] -= f * b[col][c];
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (double& v : b[r]) v /= m[r][r];
  return b;
}

// alpha (I - (1-alpha) S)^-1 R0
inline Mat ppr_fixed_point(const Mat& s, const Mat& r0, double alpha) {
  return scale(solve(add(eye(s.size()), s, -(1.0 - alpha)), r0), alpha);
}

inline double max_abs_diff(const Mat& a, const fedmpa::DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b(i, j)));
  return m;
}

// Newman modularity by brute force over all node pairs.
inline double modularity(const fedmpa::SparseGraph& g, const std::vector<std::size_t>& comm) {
  const Mat a = dense(g);
  const std::size_t n = a.size();
  std::vector<double> k(n, 0.0);
  double two_m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      k[i] += a[i][j];
      two_m += a[i][j];
    }
  if (two_m == 0.0) return 0.0;
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (comm[i] == comm[j]) q += a[i][j] - k[i] * k[j] / two_m;
  return q / two_m;
}

inline fedmpa::SparseGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
  fedmpa::Rng rng(seed);
  std::vector<fedmpa::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (fedmpa::uniform01(rng) < p) edges.emplace_back(i, j);
  return fedmpa::SparseGraph::from_edges(n, edges);
}

inline fedmpa::DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  fedmpa::Rng rng(seed);
  fedmpa::DenseMatrix m(r, c);
  for (double& v : m.values()) v = 2.0 * fedmpa::uniform01(rng) - 1.0;
  return m;
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(FEDMPA_FIXTURE_DIR) / name;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fedmpa_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
