// Backend selection. No intrinsics in this file.

#include "cnalloc/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace cnalloc::kernels {

namespace detail {
#ifndef CNALLOC_HAVE_AVX2
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif
#ifndef CNALLOC_HAVE_NEON
const KernelTable* neon_table() noexcept { return nullptr; }
#endif
}  // namespace detail

namespace {

bool cpu_has_avx2() noexcept {
#if defined(CNALLOC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect_best() noexcept {
    if (backend_supported(Backend::avx2)) {
        return Backend::avx2;
    }
    if (backend_supported(Backend::neon)) {
        return Backend::neon;
    }
    return Backend::scalar;
}

Backend initial_backend() {
    if (const char* forced = std::getenv("CNALLOC_KERNELS"); forced != nullptr && *forced != '\0') {
        const Backend requested = parse_backend(forced);
        if (!backend_supported(requested)) {
            throw std::invalid_argument("CNALLOC_KERNELS=" + std::string(forced) + " is not supported on this CPU");
        }
        return requested;
    }
    return detect_best();
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> slot{&table(initial_backend())};
    return slot;
}

std::atomic<Backend>& current_backend() {
    static std::atomic<Backend> slot{initial_backend()};
    return slot;
}

void check_sizes(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                                    std::to_string(b) + ")");
    }
}

}  // namespace

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "unknown";
}

Backend parse_backend(std::string_view name) {
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2") return Backend::avx2;
    if (name == "neon") return Backend::neon;
    throw std::invalid_argument("unknown kernel backend '" + std::string(name) + "'");
}

bool backend_supported(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
            return detail::avx2_table() != nullptr && cpu_has_avx2();
        case Backend::neon:
            return detail::neon_table() != nullptr;
    }
    return false;
}

const KernelTable& table(Backend backend) {
    if (!backend_supported(backend)) {
        throw std::invalid_argument("kernel backend '" + std::string(backend_name(backend)) +
                                    "' is not available on this build/CPU");
    }
    switch (backend) {
        case Backend::avx2:
            return *detail::avx2_table();
        case Backend::neon:
            return *detail::neon_table();
        case Backend::scalar:
            break;
    }
    return detail::scalar_table();
}

Backend active_backend() noexcept { return current_backend().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
    const KernelTable& t = table(backend);
    current().store(&t, std::memory_order_relaxed);
    current_backend().store(backend, std::memory_order_relaxed);
}

const KernelTable& active_table() noexcept { return *current().load(std::memory_order_relaxed); }

double dot(std::span<const double> a, std::span<const double> b) {
    check_sizes(a.size(), b.size(), "dot");
    return active_table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    check_sizes(x.size(), y.size(), "axpy");
    active_table().axpy(alpha, x.data(), y.data(), x.size());
}

void dot4(std::span<const double> a, const std::array<std::span<const double>, 4>& b, std::array<double, 4>& out) {
    std::array<const double*, 4> ptrs{};
    for (std::size_t j = 0; j < 4; ++j) {
        check_sizes(a.size(), b[j].size(), "dot4");
        ptrs[j] = b[j].data();
    }
    active_table().dot4(a.data(), ptrs.data(), a.size(), out.data());
}

void axpy4(const std::array<double, 4>& alpha, const std::array<std::span<const double>, 4>& x, std::span<double> y) {
    std::array<const double*, 4> ptrs{};
    for (std::size_t j = 0; j < 4; ++j) {
        check_sizes(x[j].size(), y.size(), "axpy4");
        ptrs[j] = x[j].data();
    }
    active_table().axpy4(alpha.data(), ptrs.data(), y.data(), y.size());
}

void blend(double tau, std::span<const double> online, std::span<double> target) {
    check_sizes(online.size(), target.size(), "blend");
    active_table().blend(tau, online.data(), target.data(), online.size());
}

void adam_update(const AdamCoefficients& c, std::span<const double> grad, std::span<double> param,
                 std::span<double> m, std::span<double> v) {
    check_sizes(grad.size(), param.size(), "adam_update");
    check_sizes(grad.size(), m.size(), "adam_update");
    check_sizes(grad.size(), v.size(), "adam_update");
    active_table().adam(c, grad.data(), param.data(), m.data(), v.data(), grad.size());
}

}  // namespace cnalloc::kernels
