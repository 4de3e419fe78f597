#include "fedmpa/kernels.hpp"

#include <cstdint>
#include <string>

#include "fedmpa/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedmpa::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

void check_inner(std::size_t lhs, std::size_t rhs, const char* op) {
  if (lhs != rhs) {
    throw ShapeError(std::string(op) + ": inner dimensions " + std::to_string(lhs) +
                     " and " + std::to_string(rhs) + " differ");
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  DenseMatrix c(n, m);
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = cd + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* bp = bd + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  const std::size_t s = a.rows(), n = a.cols(), m = b.cols();
  DenseMatrix c(n, m);
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * s * m > kParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = cd + i * m;
    for (std::size_t r = 0; r < s; ++r) {
      const double av = ad[r * n + i];
      if (av == 0.0) continue;
      const double* br = bd + r * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * br[j];
    }
  }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  DenseMatrix c(n, m);
  const double* ad = a.data();
  const double* bd = b.data();
  double* cd = c.data();
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* ai = ad + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = bd + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      cd[i * m + j] = acc;
    }
  }
  return c;
}

DenseMatrix spmm(const SparseGraph& g, const DenseMatrix& x) {
  check_inner(g.n_nodes(), x.rows(), "spmm");
  const std::size_t n = g.n_nodes(), m = x.cols();
  DenseMatrix c(n, m);
  const auto offsets = g.row_offsets();
  const auto cols = g.col_indices();
  const auto vals = g.values();
  const double* xd = x.data();
  double* cd = c.data();
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (g.n_entries() * m > kParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* ci = cd + i * m;
    for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      const double w = vals[e];
      const double* xr = xd + cols[e] * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += w * xr[j];
    }
  }
  return c;
}

DenseMatrix axpby(double alpha, const DenseMatrix& x, double beta, const DenseMatrix& y) {
  require_same_shape(x, y, "axpby");
  DenseMatrix out(x.rows(), x.cols());
  const double* xd = x.data();
  const double* yd = y.data();
  double* od = out.data();
  const auto len = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() > kParallelWork)
  for (std::int64_t k = 0; k < len; ++k) od[k] = alpha * xd[k] + beta * yd[k];
  return out;
}

namespace ref {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (a(r, i) == 0.0) continue;
        acc += a(r, i) * b(r, j);
      }
      c(i, j) = acc;
    }
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a(i, p) * b(j, p);
      c(i, j) = acc;
    }
  return c;
}

DenseMatrix spmm(const SparseGraph& g, const DenseMatrix& x) {
  check_inner(g.n_nodes(), x.rows(), "spmm");
  DenseMatrix c(g.n_nodes(), x.cols());
  for (std::size_t i = 0; i < g.n_nodes(); ++i) {
    auto nb = g.neighbors(i);
    auto w = g.row_values(i);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t e = 0; e < nb.size(); ++e) acc += w[e] * x(nb[e], j);
      c(i, j) = acc;
    }
  }
  return c;
}

DenseMatrix axpby(double alpha, const DenseMatrix& x, double beta, const DenseMatrix& y) {
  require_same_shape(x, y, "axpby");
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k)
    out.values()[k] = alpha * x.values()[k] + beta * y.values()[k];
  return out;
}

}  // namespace ref

}  // namespace fedmpa::kernels
