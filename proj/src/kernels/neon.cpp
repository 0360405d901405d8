// AArch64 only; NEON is part of the base ISA there so no runtime probe is needed.

#include "cnalloc/kernels.hpp"

#include <arm_neon.h>

#include <cmath>

namespace cnalloc::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

void dot4_neon(const double* a, const double* const* b, std::size_t n, double* out) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    float64x2_t acc2 = vdupq_n_f64(0.0);
    float64x2_t acc3 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t av = vld1q_f64(a + i);
        acc0 = vfmaq_f64(acc0, av, vld1q_f64(b[0] + i));
        acc1 = vfmaq_f64(acc1, av, vld1q_f64(b[1] + i));
        acc2 = vfmaq_f64(acc2, av, vld1q_f64(b[2] + i));
        acc3 = vfmaq_f64(acc3, av, vld1q_f64(b[3] + i));
    }
    double s[4] = {vaddvq_f64(acc0), vaddvq_f64(acc1), vaddvq_f64(acc2), vaddvq_f64(acc3)};
    for (; i < n; ++i) {
        for (std::size_t j = 0; j < 4; ++j) s[j] += a[i] * b[j][i];
    }
    for (std::size_t j = 0; j < 4; ++j) out[j] = s[j];
}

void axpy4_neon(const double* alpha, const double* const* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t t = vmulq_n_f64(vld1q_f64(x[0] + i), alpha[0]);
        t = vfmaq_n_f64(t, vld1q_f64(x[1] + i), alpha[1]);
        t = vfmaq_n_f64(t, vld1q_f64(x[2] + i), alpha[2]);
        t = vfmaq_n_f64(t, vld1q_f64(x[3] + i), alpha[3]);
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), t));
    }
    if (i < n) {
        const double* tail[4] = {x[0] + i, x[1] + i, x[2] + i, x[3] + i};
        scalar_table().axpy4(alpha, tail, y + i, n - i);
    }
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t a = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = std::fma(alpha, x[i], y[i]);
    }
}

void blend_neon(double tau, const double* online, double* target, std::size_t n) {
    const float64x2_t t = vdupq_n_f64(tau);
    const float64x2_t keep = vdupq_n_f64(1.0 - tau);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(target + i, vaddq_f64(vmulq_f64(t, vld1q_f64(online + i)), vmulq_f64(keep, vld1q_f64(target + i))));
    }
    if (i < n) {
        scalar_table().blend(tau, online + i, target + i, n - i);
    }
}

void adam_neon(const AdamCoefficients& c, const double* grad, double* param, double* m, double* v,
               std::size_t n) {
    const float64x2_t b1 = vdupq_n_f64(c.beta1);
    const float64x2_t b2 = vdupq_n_f64(c.beta2);
    const float64x2_t omb1 = vdupq_n_f64(1.0 - c.beta1);
    const float64x2_t omb2 = vdupq_n_f64(1.0 - c.beta2);
    const float64x2_t bc1 = vdupq_n_f64(c.bias_correction1);
    const float64x2_t bc2 = vdupq_n_f64(c.bias_correction2);
    const float64x2_t lr = vdupq_n_f64(c.learning_rate);
    const float64x2_t eps = vdupq_n_f64(c.epsilon);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t g = vld1q_f64(grad + i);
        const float64x2_t mi = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(omb1, g));
        const float64x2_t vi = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(omb2, vmulq_f64(g, g)));
        vst1q_f64(m + i, mi);
        vst1q_f64(v + i, vi);
        const float64x2_t m_hat = vdivq_f64(mi, bc1);
        const float64x2_t v_hat = vdivq_f64(vi, bc2);
        const float64x2_t step = vdivq_f64(vmulq_f64(lr, m_hat), vaddq_f64(vsqrtq_f64(v_hat), eps));
        vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
    }
    if (i < n) {
        scalar_table().adam(c, grad + i, param + i, m + i, v + i, n - i);
    }
}

constexpr KernelTable kNeon{dot_neon, dot4_neon, axpy_neon, axpy4_neon, blend_neon, adam_neon};

}  // namespace

const KernelTable* neon_table() noexcept { return &kNeon; }

}  // namespace cnalloc::kernels::detail
