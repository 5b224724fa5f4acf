#include "ces/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ces::kernels {

namespace {

// One output row of the product; inner loops ordered so the accumulation
// over k is identical in the serial and parallel paths.
inline void matmul_row(const double* a, const double* b, double* c,
                       int i, int k, int n, bool ta, bool tb, int m) {
    double* ci = c + static_cast<size_t>(i) * n;
    if (!tb) {
        // c[i,:] += sum_p a[i,p] * b[p,:]
        for (int p = 0; p < k; p++) {
            const double aip = ta ? a[static_cast<size_t>(p) * m + i]
                                  : a[static_cast<size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; j++) ci[j] += aip * bp[j];
        }
    } else {
        // b is n x k; dot rows of a with rows of b.
        for (int j = 0; j < n; j++) {
            const double* bj = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            if (!ta) {
                const double* ai = a + static_cast<size_t>(i) * k;
                for (int p = 0; p < k; p++) acc += ai[p] * bj[p];
            } else {
                for (int p = 0; p < k; p++) acc += a[static_cast<size_t>(p) * m + i] * bj[p];
            }
            ci[j] += acc;
        }
    }
}

} // namespace

void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool ta, bool tb, bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
    for (int i = 0; i < m; i++) matmul_row(a, b, c, i, k, n, ta, tb, m);
}

void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n, bool ta, bool tb, bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m) * n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; i++) matmul_row(a, b, c, i, k, n, ta, tb, m);
}

void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool ta, bool tb, bool accumulate) {
    const long long work = 1LL * m * k * n;
    if (work >= 1LL << 16)
        matmul_omp(a, b, c, m, k, n, ta, tb, accumulate);
    else
        matmul_serial(a, b, c, m, k, n, ta, tb, accumulate);
}

namespace {

inline void layer_norm_row(const double* x, const double* gamma, const double* beta,
                           double* y, double* mean, double* rstd,
                           int r, int d, double eps) {
    const double* xr = x + static_cast<size_t>(r) * d;
    double* yr = y + static_cast<size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; j++) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; j++) {
        const double t = xr[j] - mu;
        var += t * t;
    }
    var /= d;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; j++) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    if (mean) mean[r] = mu;
    if (rstd) rstd[r] = rs;
}

inline void softmax_row(double* xr, int n) {
    double mx = xr[0];
    for (int j = 1; j < n; j++) mx = std::max(mx, xr[j]);
    double z = 0.0;
    for (int j = 0; j < n; j++) {
        xr[j] = std::exp(xr[j] - mx);
        z += xr[j];
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < n; j++) xr[j] *= inv;
}

} // namespace

void layer_norm_rows_serial(const double* x, const double* gamma, const double* beta,
                            double* y, double* mean, double* rstd,
                            int rows, int d, double eps) {
    for (int r = 0; r < rows; r++) layer_norm_row(x, gamma, beta, y, mean, rstd, r, d, eps);
}

void layer_norm_rows_omp(const double* x, const double* gamma, const double* beta,
                         double* y, double* mean, double* rstd,
                         int rows, int d, double eps) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; r++) layer_norm_row(x, gamma, beta, y, mean, rstd, r, d, eps);
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta,
                     double* y, double* mean, double* rstd,
                     int rows, int d, double eps) {
    if (1LL * rows * d >= 1LL << 15)
        layer_norm_rows_omp(x, gamma, beta, y, mean, rstd, rows, d, eps);
    else
        layer_norm_rows_serial(x, gamma, beta, y, mean, rstd, rows, d, eps);
}

void softmax_rows_serial(double* x, int rows, int n) {
    for (int r = 0; r < rows; r++) softmax_row(x + static_cast<size_t>(r) * n, n);
}

void softmax_rows_omp(double* x, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < rows; r++) softmax_row(x + static_cast<size_t>(r) * n, n);
}

void softmax_rows(double* x, int rows, int n) {
    if (1LL * rows * n >= 1LL << 15)
        softmax_rows_omp(x, rows, n);
    else
        softmax_rows_serial(x, rows, n);
}

} // namespace ces::kernels
