// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "nbfusion/tensor.hpp"

namespace nbf::kernels {

// C[n x m] += A[n x k] * B[k x m]
void gemm_acc(const double* a, const double* b, double* c,
              std::size_t n, std::size_t k, std::size_t m);

// C[n x m] += A[n x k] * B[m x k]^T
void gemm_nt_acc(const double* a, const double* b, double* c,
                 std::size_t n, std::size_t k, std::size_t m);

// C[n x m] += A[k x n]^T * B[k x m]
void gemm_tn_acc(const double* a, const double* b, double* c,
                 std::size_t n, std::size_t k, std::size_t m);

// y[m] += W[m x n] * x[n]
void matvec_acc(const double* w, const double* x, double* y,
                std::size_t m, std::size_t n);

// y[n] += W[m x n]^T * x[m]
void matvec_t_acc(const double* w, const double* x, double* y,
                  std::size_t m, std::size_t n);

// Stable softmax of a row in place.
void softmax_inplace(double* row, std::size_t n);

// log(sum_j exp(z_j)) with max subtraction.
double logsumexp(const double* z, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);

double sigmoid(double x);

// y = W.x + b for rank-1 x, or row-wise for rank-2 x with bias broadcast.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace nbf::kernels
