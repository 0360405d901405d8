#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "cnalloc/kernels.hpp"

using namespace cnalloc::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

std::vector<Backend> vector_backends() {
    std::vector<Backend> out;
    for (Backend b : {Backend::avx2, Backend::neon}) {
        if (backend_supported(b)) out.push_back(b);
    }
    return out;
}

// Lengths straddle every unroll boundary of the vector loops.
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 255, 256, 257};

void check_close(double a, double b, double scale) { CHECK(std::abs(a - b) <= 1e-12 * (1.0 + scale)); }

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("backend names round-trip") {
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
        CHECK(parse_backend(backend_name(b)) == b);
    }
    CHECK_THROWS_AS(parse_backend("sse9"), std::invalid_argument);
    CHECK(backend_supported(Backend::scalar));
}

TEST_CASE("vector kernels agree with the scalar reference") {
    const auto& ref = table(Backend::scalar);
    std::mt19937_64 rng(7);
    for (Backend b : vector_backends()) {
        CAPTURE(backend_name(b));
        const auto& vec = table(b);
        for (std::size_t n : kLengths) {
            CAPTURE(n);
            const auto x = random_vector(n, rng);
            const auto y = random_vector(n, rng);
            double mag = 0.0;
            for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
            check_close(vec.dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n), mag);

            std::vector<double> b4[4] = {random_vector(n, rng), random_vector(n, rng), random_vector(n, rng),
                                         random_vector(n, rng)};
            const double* ptrs[4] = {b4[0].data(), b4[1].data(), b4[2].data(), b4[3].data()};
            double out_v[4], out_r[4];
            vec.dot4(x.data(), ptrs, n, out_v);
            ref.dot4(x.data(), ptrs, n, out_r);
            for (int j = 0; j < 4; ++j) check_close(out_v[j], out_r[j], 4.0 * static_cast<double>(n));

            auto ya = y, yb = y;
            vec.axpy(0.37, x.data(), ya.data(), n);
            ref.axpy(0.37, x.data(), yb.data(), n);
            for (std::size_t i = 0; i < n; ++i) check_close(ya[i], yb[i], 4.0);

            const double alpha[4] = {0.5, -1.25, 2.0, 0.125};
            ya = y;
            yb = y;
            vec.axpy4(alpha, ptrs, ya.data(), n);
            ref.axpy4(alpha, ptrs, yb.data(), n);
            for (std::size_t i = 0; i < n; ++i) check_close(ya[i], yb[i], 16.0);

            ya = y;
            yb = y;
            vec.blend(0.005, x.data(), ya.data(), n);
            ref.blend(0.005, x.data(), yb.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(ya[i] == yb[i]);

            AdamCoefficients c;
            c.learning_rate = 1e-3;
            c.bias_correction1 = 1.0 - std::pow(c.beta1, 3.0);
            c.bias_correction2 = 1.0 - std::pow(c.beta2, 3.0);
            auto pa = y, pb = y;
            auto ma = random_vector(n, rng), va = random_vector(n, rng);
            for (auto& v : va) v = std::abs(v);
            auto mb = ma, vb = va;
            vec.adam(c, x.data(), pa.data(), ma.data(), va.data(), n);
            ref.adam(c, x.data(), pb.data(), mb.data(), vb.data(), n);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(ma[i] == mb[i]);
                CHECK(va[i] == vb[i]);
                CHECK(pa[i] == pb[i]);
            }
        }
    }
}

TEST_CASE("blend endpoints are exact on every backend") {
    std::mt19937_64 rng(3);
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
        if (!backend_supported(b)) continue;
        const auto& k = table(b);
        const auto online = random_vector(37, rng);
        auto target = random_vector(37, rng);
        const auto before = target;
        k.blend(0.0, online.data(), target.data(), target.size());
        CHECK(target == before);
        k.blend(1.0, online.data(), target.data(), target.size());
        CHECK(target == online);
    }
}

TEST_CASE("span wrappers reject mismatched lengths") {
    std::vector<double> a(3), b(4);
    CHECK_THROWS_AS(dot(a, b), std::invalid_argument);
    CHECK_THROWS_AS(axpy(1.0, a, b), std::invalid_argument);
    CHECK_THROWS_AS(blend(0.5, a, b), std::invalid_argument);
    std::array<std::span<const double>, 4> four{a, a, a, b};
    std::array<double, 4> out{};
    CHECK_THROWS_AS(dot4(a, four, out), std::invalid_argument);
}

TEST_CASE("set_backend switches the active table") {
    const Backend original = active_backend();
    set_backend(Backend::scalar);
    CHECK(active_backend() == Backend::scalar);
    CHECK(&active_table() == &table(Backend::scalar));
    set_backend(original);
    CHECK(active_backend() == original);
}

}
