#pragma once

#include <cstddef>

// Dense kernels behind the tensor ops. Each kernel exists in a serial
// reference form and an OpenMP form; the dispatching entry point picks the
// OpenMP path above a size threshold. Both paths compute every output
// element with the same accumulation order, so results are bit-identical.
namespace ces::kernels {

// c[m x n] (+)= op(a) * op(b), where op is optional transpose.
// a is m x k (or k x m when ta), b is k x n (or n x k when tb).
void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool ta, bool tb, bool accumulate);
void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n, bool ta, bool tb, bool accumulate);
void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool ta = false, bool tb = false,
            bool accumulate = false);

// Row-wise layer norm over the last axis; saves per-row mean and reciprocal
// std for the backward pass when the out-params are non-null.
void layer_norm_rows_serial(const double* x, const double* gamma, const double* beta,
                            double* y, double* mean, double* rstd,
                            int rows, int d, double eps);
void layer_norm_rows_omp(const double* x, const double* gamma, const double* beta,
                         double* y, double* mean, double* rstd,
                         int rows, int d, double eps);
void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double* y, double* mean, double* rstd,
                     int rows, int d, double eps);

// In-place numerically stable softmax of each row of x (rows x n).
void softmax_rows_serial(double* x, int rows, int n);
void softmax_rows_omp(double* x, int rows, int n);
void softmax_rows(double* x, int rows, int n);

} // namespace ces::kernels
