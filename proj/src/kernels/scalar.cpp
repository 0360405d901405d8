#include "cnalloc/kernels.hpp"

#include <cmath>

namespace cnalloc::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

void dot4_scalar(const double* a, const double* const* b, std::size_t n, double* out) {
    for (std::size_t j = 0; j < 4; ++j) {
        out[j] = dot_scalar(a, b[j], n);
    }
}

void axpy4_scalar(const double* alpha, const double* const* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha[0] * x[0][i] + alpha[1] * x[1][i] + alpha[2] * x[2][i] + alpha[3] * x[3][i];
    }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void blend_scalar(double tau, const double* online, double* target, std::size_t n) {
    const double keep = 1.0 - tau;
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = tau * online[i] + keep * target[i];
    }
}

void adam_scalar(const AdamCoefficients& c, const double* grad, double* param, double* m, double* v,
                 std::size_t n) {
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double m_hat = m[i] / c.bias_correction1;
        const double v_hat = v[i] / c.bias_correction2;
        param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

constexpr KernelTable kScalar{dot_scalar, dot4_scalar, axpy_scalar, axpy4_scalar, blend_scalar, adam_scalar};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace cnalloc::kernels::detail
