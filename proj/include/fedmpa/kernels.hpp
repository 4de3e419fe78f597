#pragma once

// Dense and sparse-dense products used by training.
//
// kernels::ref holds straight-line serial versions; the unqualified kernels
// are OpenMP-parallel over output rows. Each output element is accumulated
// in the same order in both, so results are bit-identical regardless of the
// thread count. Tests rely on that.

#include "fedmpa/dense.hpp"
#include "fedmpa/graph.hpp"

namespace fedmpa::kernels {

// C = A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// C = A^T * B
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// C = A * B^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// C = G * X for sparse G
DenseMatrix spmm(const SparseGraph& g, const DenseMatrix& x);
// out = alpha * x + beta * y, elementwise
DenseMatrix axpby(double alpha, const DenseMatrix& x, double beta, const DenseMatrix& y);

// Number of threads the parallel kernels will use.
int max_threads();

namespace ref {
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix spmm(const SparseGraph& g, const DenseMatrix& x);
DenseMatrix axpby(double alpha, const DenseMatrix& x, double beta, const DenseMatrix& y);
}  // namespace ref

}  // namespace fedmpa::kernels
