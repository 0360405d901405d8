#pragma once

// Dense arithmetic kernels used by the network toolkit.
//
// Every kernel has a scalar reference implementation plus optional vector
// variants (AVX2+FMA on x86-64, NEON on AArch64). The active backend is picked
// once at startup from the CPU feature set and can be overridden, either with
// set_backend() or the CNALLOC_KERNELS environment variable ("scalar",
// "avx2", "neon"). Results are bit-reproducible for a fixed backend; across
// backends they agree to rounding only, because the vector reductions sum in a
// different order.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

namespace cnalloc::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend backend) noexcept;

/// Parses "scalar" / "avx2" / "neon"; throws std::invalid_argument otherwise.
Backend parse_backend(std::string_view name);

/// True when the backend was compiled in and the running CPU supports it.
bool backend_supported(Backend backend) noexcept;

Backend active_backend() noexcept;

/// Throws std::invalid_argument when the backend is not supported here.
void set_backend(Backend backend);

/// Bias-corrected adaptive-moment coefficients for one update.
struct AdamCoefficients {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double bias_correction1 = 1.0;  // 1 - beta1^t
    double bias_correction2 = 1.0;  // 1 - beta2^t
};

/// Function table for one backend. All spans in a call must have equal length.
struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // out[j] = a . b[j] for j < 4; reuses each load of a four times
    void (*dot4)(const double* a, const double* const* b, std::size_t n, double* out);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y += alpha[0] * x[0] + ... + alpha[3] * x[3]
    void (*axpy4)(const double* alpha, const double* const* x, double* y, std::size_t n);
    // target = tau * online + (1 - tau) * target
    void (*blend)(double tau, const double* online, double* target, std::size_t n);
    void (*adam)(const AdamCoefficients& c, const double* grad, double* param, double* m, double* v,
                 std::size_t n);
};

/// Table for a specific backend; throws std::invalid_argument if unsupported.
const KernelTable& table(Backend backend);

const KernelTable& active_table() noexcept;

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void dot4(std::span<const double> a, const std::array<std::span<const double>, 4>& b, std::array<double, 4>& out);
void axpy4(const std::array<double, 4>& alpha, const std::array<std::span<const double>, 4>& x, std::span<double> y);
void blend(double tau, std::span<const double> online, std::span<double> target);
void adam_update(const AdamCoefficients& c, std::span<const double> grad, std::span<double> param,
                 std::span<double> m, std::span<double> v);

namespace detail {
const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;  // nullptr when not compiled in
const KernelTable* neon_table() noexcept;  // nullptr when not compiled in
}  // namespace detail

}  // namespace cnalloc::kernels
