#pragma once

// Dense row-major kernels behind the autodiff primitives. Every kernel is
// data-parallel over independent output elements, so the OpenMP versions are
// bit-identical to the serial references in kernels::serial regardless of
// thread count; tests assert exact equality and tools/kernel_bench compares
// their throughput.
//
// Full-tensor reductions accumulate in double and stay serial in both
// namespaces: they are never hot and a deterministic order matters more.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace ruledist::kernels {

// Work threshold below which spawning a parallel region is not worth it.
inline constexpr std::ptrdiff_t kParallelCutoff = 256 * 1024;

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------
namespace serial {

// C[MxN] (+)= A[MxK] * B[KxN]
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int kk = 0; kk < k; ++kk) {
            const T av = a[static_cast<std::ptrdiff_t>(i) * lda + kk];
            const T* brow = b + static_cast<std::ptrdiff_t>(kk) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[MxN] (+)= A[MxK] * B[NxK]^T. B is transposed into scratch so the inner
// loops stream rows and vectorize; per-element accumulation stays k-ascending.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    std::vector<T> bt(static_cast<std::size_t>(k) * n);
    for (int kk = 0; kk < k; ++kk) {
        for (int j = 0; j < n; ++j) {
            bt[static_cast<std::ptrdiff_t>(kk) * n + j] =
                b[static_cast<std::ptrdiff_t>(j) * ldb + kk];
        }
    }
    gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
}

// C[MxN] (+)= A[KxM]^T * B[KxN]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int kk = 0; kk < k; ++kk) {
            const T av = a[static_cast<std::ptrdiff_t>(kk) * lda + i];
            const T* brow = b + static_cast<std::ptrdiff_t>(kk) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Row-wise numerically stable softmax with a column mask. Masked columns get
// exactly zero; each row must have at least one unmasked column.
template <typename T>
void masked_softmax_rows(const T* x, T* out, int rows, int cols, int ldx, int ldo,
                         const std::uint8_t* mask) {
    for (int r = 0; r < rows; ++r) {
        const T* xr = x + static_cast<std::ptrdiff_t>(r) * ldx;
        T* yr = out + static_cast<std::ptrdiff_t>(r) * ldo;
        T mx = -std::numeric_limits<T>::infinity();
        for (int c = 0; c < cols; ++c) {
            if (mask[c] && xr[c] > mx) mx = xr[c];
        }
        T denom = T(0);
        for (int c = 0; c < cols; ++c) {
            if (mask[c]) {
                yr[c] = std::exp(xr[c] - mx);
                denom += yr[c];
            } else {
                yr[c] = T(0);
            }
        }
        const T inv = T(1) / denom;
        for (int c = 0; c < cols; ++c) yr[c] *= inv;
    }
}

// dx = p . (dp - sum_unmasked(p . dp)) per row; zero at masked columns.
template <typename T>
void masked_softmax_backward_rows(const T* p, const T* dp, T* dx, int rows, int cols, int ldp,
                                  int lddp, int lddx, const std::uint8_t* mask,
                                  bool accumulate) {
    for (int r = 0; r < rows; ++r) {
        const T* pr = p + static_cast<std::ptrdiff_t>(r) * ldp;
        const T* dpr = dp + static_cast<std::ptrdiff_t>(r) * lddp;
        T* dxr = dx + static_cast<std::ptrdiff_t>(r) * lddx;
        T dot = T(0);
        for (int c = 0; c < cols; ++c) {
            if (mask[c]) dot += pr[c] * dpr[c];
        }
        for (int c = 0; c < cols; ++c) {
            const T g = mask[c] ? pr[c] * (dpr[c] - dot) : T(0);
            if (accumulate) {
                dxr[c] += g;
            } else {
                dxr[c] = g;
            }
        }
    }
}

// y = (x - mean) * rstd * gain + bias per row; saves mean/rstd for backward.
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int cols,
                     int ldx, int ldy, T eps, T* save_mean, T* save_rstd) {
    for (int r = 0; r < rows; ++r) {
        const T* xr = x + static_cast<std::ptrdiff_t>(r) * ldx;
        T* yr = y + static_cast<std::ptrdiff_t>(r) * ldy;
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) mean += xr[c];
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
        }
        var /= cols;
        const T mu = static_cast<T>(mean);
        const T rstd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        save_mean[r] = mu;
        save_rstd[r] = rstd;
        for (int c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rstd * gain[c] + bias[c];
    }
}

template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* dy, const T* mean,
                              const T* rstd, T* dx, T* dgain, T* dbias, int rows, int cols,
                              int ldx, int lddy, int lddx) {
    for (int r = 0; r < rows; ++r) {
        const T* xr = x + static_cast<std::ptrdiff_t>(r) * ldx;
        const T* dyr = dy + static_cast<std::ptrdiff_t>(r) * lddy;
        T* dxr = dx + static_cast<std::ptrdiff_t>(r) * lddx;
        const T mu = mean[r];
        const T rs = rstd[r];
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int c = 0; c < cols; ++c) {
            const T xhat = (xr[c] - mu) * rs;
            const T dxhat = dyr[c] * gain[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
            dgain[c] += dyr[c] * xhat;
            dbias[c] += dyr[c];
        }
        const T m1 = static_cast<T>(sum_dxhat / cols);
        const T m2 = static_cast<T>(sum_dxhat_xhat / cols);
        for (int c = 0; c < cols; ++c) {
            const T xhat = (xr[c] - mu) * rs;
            const T dxhat = dyr[c] * gain[c];
            dxr[c] += rs * (dxhat - m1 - xhat * m2);
        }
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP-parallel versions. Parallelism is over rows of the output, keeping
// the per-element arithmetic order identical to the serial reference.
// ---------------------------------------------------------------------------

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(m) * n * k;
#pragma omp parallel for if (work > kParallelCutoff && m > 1)
    for (int i = 0; i < m; ++i) {
        serial::gemm_nn(1, n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, b, ldb,
                        c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, accumulate);
    }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(m) * n * k;
    if (work <= kParallelCutoff) {
        serial::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
        return;
    }
    std::vector<T> bt(static_cast<std::size_t>(k) * n);
#pragma omp parallel
    {
#pragma omp for
        for (int kk = 0; kk < k; ++kk) {
            for (int j = 0; j < n; ++j) {
                bt[static_cast<std::ptrdiff_t>(kk) * n + j] =
                    b[static_cast<std::ptrdiff_t>(j) * ldb + kk];
            }
        }
#pragma omp for
        for (int i = 0; i < m; ++i) {
            serial::gemm_nn(1, n, k, a + static_cast<std::ptrdiff_t>(i) * lda, lda, bt.data(),
                            n, c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, accumulate);
        }
    }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(m) * n * k;
#pragma omp parallel for if (work > kParallelCutoff && m > 1)
    for (int i = 0; i < m; ++i) {
        // Column i of A is a [k x 1] view at offset i with stride lda.
        serial::gemm_tn(1, n, k, a + i, lda, b, ldb,
                        c + static_cast<std::ptrdiff_t>(i) * ldc, ldc, accumulate);
    }
}

template <typename T>
void masked_softmax_rows(const T* x, T* out, int rows, int cols, int ldx, int ldo,
                         const std::uint8_t* mask) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(rows) * cols * 8;
#pragma omp parallel for if (work > kParallelCutoff && rows > 1)
    for (int r = 0; r < rows; ++r) {
        serial::masked_softmax_rows(x + static_cast<std::ptrdiff_t>(r) * ldx, out + static_cast<std::ptrdiff_t>(r) * ldo,
                                    1, cols, ldx, ldo, mask);
    }
}

template <typename T>
void masked_softmax_backward_rows(const T* p, const T* dp, T* dx, int rows, int cols, int ldp,
                                  int lddp, int lddx, const std::uint8_t* mask,
                                  bool accumulate) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(rows) * cols * 8;
#pragma omp parallel for if (work > kParallelCutoff && rows > 1)
    for (int r = 0; r < rows; ++r) {
        serial::masked_softmax_backward_rows(
            p + static_cast<std::ptrdiff_t>(r) * ldp, dp + static_cast<std::ptrdiff_t>(r) * lddp,
            dx + static_cast<std::ptrdiff_t>(r) * lddx, 1, cols, ldp, lddp, lddx, mask, accumulate);
    }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int cols,
                     int ldx, int ldy, T eps, T* save_mean, T* save_rstd) {
    const std::ptrdiff_t work = static_cast<std::ptrdiff_t>(rows) * cols * 8;
#pragma omp parallel for if (work > kParallelCutoff && rows > 1)
    for (int r = 0; r < rows; ++r) {
        serial::layer_norm_rows(x + static_cast<std::ptrdiff_t>(r) * ldx, gain, bias,
                                y + static_cast<std::ptrdiff_t>(r) * ldy, 1, cols, ldx, ldy, eps,
                                save_mean + r, save_rstd + r);
    }
}

// layer_norm backward stays serial: the dgain/dbias accumulation crosses rows
// and a fixed order keeps it deterministic.
template <typename T>
void layer_norm_backward_rows(const T* x, const T* gain, const T* dy, const T* mean,
                              const T* rstd, T* dx, T* dgain, T* dbias, int rows, int cols,
                              int ldx, int lddy, int lddx) {
    serial::layer_norm_backward_rows(x, gain, dy, mean, rstd, dx, dgain, dbias, rows, cols, ldx,
                                     lddy, lddx);
}

// ---------------------------------------------------------------------------
// Elementwise maps; identical order per element.
// ---------------------------------------------------------------------------

template <typename T, typename F>
void map_unary(const T* x, T* y, std::ptrdiff_t n, F f) {
#pragma omp parallel for if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T, typename F>
void map_binary(const T* a, const T* b, T* y, std::ptrdiff_t n, F f) {
#pragma omp parallel for if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

// y += a (fixed order accumulation).
template <typename T>
void accumulate(T* y, const T* a, std::ptrdiff_t n) {
#pragma omp parallel for if (n > kParallelCutoff)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a[i];
}

// Serial double-accumulated reductions.
template <typename T>
double sum_all(const T* x, std::ptrdiff_t n) {
    double acc = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    return acc;
}

template <typename T>
double dot(const T* a, const T* b, std::ptrdiff_t n) {
    double acc = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

}  // namespace ruledist::kernels
