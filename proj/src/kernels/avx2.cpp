// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.

#include "cnalloc/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace cnalloc::kernels::detail {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d pair = _mm_add_pd(lo, hi);
    const __m128d swapped = _mm_unpackhi_pd(pair, pair);
    return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

void dot4_avx2(const double* a, const double* const* b, std::size_t n, double* out) {
    const double* b0 = b[0];
    const double* b1 = b[1];
    const double* b2 = b[2];
    const double* b3 = b[3];
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + i), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + i), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + i), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + i), acc3);
    }
    double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
    for (; i < n; ++i) {
        s0 += a[i] * b0[i];
        s1 += a[i] * b1[i];
        s2 += a[i] * b2[i];
        s3 += a[i] * b3[i];
    }
    out[0] = s0;
    out[1] = s1;
    out[2] = s2;
    out[3] = s3;
}

void axpy4_avx2(const double* alpha, const double* const* x, double* y, std::size_t n) {
    const __m256d a0 = _mm256_set1_pd(alpha[0]);
    const __m256d a1 = _mm256_set1_pd(alpha[1]);
    const __m256d a2 = _mm256_set1_pd(alpha[2]);
    const __m256d a3 = _mm256_set1_pd(alpha[3]);
    const double* x0 = x[0];
    const double* x1 = x[1];
    const double* x2 = x[2];
    const double* x3 = x[3];
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_mul_pd(a0, _mm256_loadu_pd(x0 + i));
        t = _mm256_fmadd_pd(a1, _mm256_loadu_pd(x1 + i), t);
        t = _mm256_fmadd_pd(a2, _mm256_loadu_pd(x2 + i), t);
        t = _mm256_fmadd_pd(a3, _mm256_loadu_pd(x3 + i), t);
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), t));
    }
    for (; i < n; ++i) {
        y[i] += alpha[0] * x0[i] + alpha[1] * x1[i] + alpha[2] * x2[i] + alpha[3] * x3[i];
    }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4,
                         _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(alpha, x[i], y[i]);
    }
}

// Multiply-then-add without fusion so tau = 0 and tau = 1 stay exact copies.
void blend_avx2(double tau, const double* online, double* target, std::size_t n) {
    const __m256d t = _mm256_set1_pd(tau);
    const __m256d keep = _mm256_set1_pd(1.0 - tau);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mixed = _mm256_add_pd(_mm256_mul_pd(t, _mm256_loadu_pd(online + i)),
                                            _mm256_mul_pd(keep, _mm256_loadu_pd(target + i)));
        _mm256_storeu_pd(target + i, mixed);
    }
    const double keep_s = 1.0 - tau;
    for (; i < n; ++i) {
        const double a = tau * online[i];
        const double b = keep_s * target[i];
        target[i] = a + b;
    }
}

void adam_avx2(const AdamCoefficients& c, const double* grad, double* param, double* m, double* v,
               std::size_t n) {
    const __m256d b1 = _mm256_set1_pd(c.beta1);
    const __m256d b2 = _mm256_set1_pd(c.beta2);
    const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
    const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
    const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
    const __m256d lr = _mm256_set1_pd(c.learning_rate);
    const __m256d eps = _mm256_set1_pd(c.epsilon);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d m_hat = _mm256_div_pd(mi, bc1);
        const __m256d v_hat = _mm256_div_pd(vi, bc2);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    if (i < n) {
        scalar_table().adam(c, grad + i, param + i, m + i, v + i, n - i);
    }
}

constexpr KernelTable kAvx2{dot_avx2, dot4_avx2, axpy_avx2, axpy4_avx2, blend_avx2, adam_avx2};

}  // namespace

const KernelTable* avx2_table() noexcept { return &kAvx2; }

}  // namespace cnalloc::kernels::detail
