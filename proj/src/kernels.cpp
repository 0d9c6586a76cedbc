// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "nbfusion/errors.hpp"

namespace nbf::kernels {

void gemm_acc(const double* a, const double* b, double* c,
              std::size_t n, std::size_t k, std::size_t m) {
    // i-k-j order: unit-stride inner loops over B and C rows.
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_nt_acc(const double* a, const double* b, double* c,
                 std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += dot(arow, b + j * k, k);
    }
}

void gemm_tn_acc(const double* a, const double* b, double* c,
                 std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * n;
        const double* brow = b + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double api = arow[i];
            if (api == 0.0) continue;
            double* crow = c + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += api * brow[j];
        }
    }
}

void matvec_acc(const double* w, const double* x, double* y,
                std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) y[i] += dot(w + i * n, x, n);
}

void matvec_t_acc(const double* w, const double* x, double* y,
                  std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wrow = w + i * n;
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * wrow[j];
    }
}

void softmax_inplace(double* row, std::size_t n) {
    const double mx = *std::max_element(row, row + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

double logsumexp(const double* z, std::size_t n) {
    const double mx = *std::max_element(z, z + n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(z[j] - mx);
    return mx + std::log(sum);
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2) throw ShapeError("affine: weight must be rank-2, got " + shape_str(w.shape()));
    const std::size_t m = w.dim(0), n = w.dim(1);
    if (b.rank() != 1 || b.dim(0) != m) {
        throw ShapeError("affine: bias shape " + shape_str(b.shape()) + " does not match weight rows " +
                         std::to_string(m));
    }
    if (x.rank() == 1) {
        if (x.dim(0) != n) {
            throw ShapeError("affine: input length " + std::to_string(x.dim(0)) +
                             " does not match weight cols " + std::to_string(n));
        }
        Tensor y({m}, std::vector<double>(b.vec()));
        matvec_acc(w.data(), x.data(), y.data(), m, n);
        return y;
    }
    if (x.rank() == 2) {
        if (x.dim(1) != n) {
            throw ShapeError("affine: input cols " + std::to_string(x.dim(1)) +
                             " do not match weight cols " + std::to_string(n));
        }
        const std::size_t rows = x.dim(0);
        Tensor y({rows, m});
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy(b.data(), b.data() + m, y.data() + i * m);
        }
        gemm_nt_acc(x.data(), w.data(), y.data(), rows, n, m);
        return y;
    }
    throw ShapeError("affine: input must be rank-1 or rank-2, got " + shape_str(x.shape()));
}

}  // namespace nbf::kernels
