#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "prunelab/kernels.hpp"
#include "prunelab/rng.hpp"

using namespace prunelab;
using kernels::ConvShape;

namespace {

template <typename T>
std::vector<T> random_vec(size_t n, Rng& rng, double scale = 1.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, scale));
    return v;
}

template <typename T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
        const double m = std::max({std::abs(static_cast<double>(a[i])),
                                   std::abs(static_cast<double>(b[i])), 1.0});
        worst = std::max(worst, d / m);
    }
    return worst;
}

}  // namespace

TEST_CASE("conv forward matches a hand-evaluated corner-sum oracle") {
    // 2x2 input of ones, single 3x3 all-ones kernel, zero padding 1:
    // every output is the sum of the corner's 2x2 neighborhood = 4
    ConvShape s;
    s.n = 1; s.cin = 1; s.h = 2; s.w = 2;
    s.cout = 1; s.kh = 3; s.kw = 3; s.stride = 1; s.pad = 1;
    REQUIRE(s.oh() == 2);
    REQUIRE(s.ow() == 2);
    std::vector<float> x(4, 1.f), w(9, 1.f), y(4, -1.f);
    kernels::conv2d_forward(x.data(), w.data(), y.data(), s);
    for (float v : y) CHECK(v == doctest::Approx(4.f));
    std::vector<float> yref(4, -1.f);
    kernels::reference::conv2d_forward(x.data(), w.data(), yref.data(), s);
    for (float v : yref) CHECK(v == doctest::Approx(4.f));
}

TEST_CASE("1x1 identity kernel passes the input through") {
    ConvShape s;
    s.n = 2; s.cin = 3; s.h = 4; s.w = 5;
    s.cout = 3; s.kh = 1; s.kw = 1;
    Rng rng(11);
    auto x = random_vec<float>(static_cast<size_t>(s.n) * s.cin * s.h * s.w, rng);
    std::vector<float> w(9, 0.f);
    for (int c = 0; c < 3; ++c) w[static_cast<size_t>(c) * 3 + c] = 1.f;
    std::vector<float> y(x.size());
    kernels::conv2d_forward(x.data(), w.data(), y.data(), s);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE_TEMPLATE("fast conv kernels agree with the serial reference", T, float, double) {
    Rng rng(42);
    const double tol = sizeof(T) == 4 ? 2e-5 : 1e-12;
    const std::vector<ConvShape> shapes = {
        {2, 3, 9, 11, 4, 3, 3, 1, 1, 1},   // padded 3x3
        {3, 8, 10, 12, 8, 3, 3, 2, 1, 1},  // strided
        {2, 6, 7, 7, 6, 3, 3, 1, 1, 6},    // depthwise
        {1, 4, 6, 6, 8, 1, 1, 1, 0, 1},    // pointwise
        {2, 4, 8, 8, 6, 5, 5, 1, 2, 1},    // 5x5
        {2, 6, 9, 9, 4, 3, 3, 1, 1, 2},    // grouped, 2 groups
    };
    for (const auto& s : shapes) {
        CAPTURE(s.cin);
        CAPTURE(s.groups);
        const size_t xs = static_cast<size_t>(s.n) * s.cin * s.h * s.w;
        const size_t ws = static_cast<size_t>(s.cout) * (s.cin / s.groups) * s.kh * s.kw;
        const size_t ys = static_cast<size_t>(s.n) * s.cout * s.oh() * s.ow();
        auto x = random_vec<T>(xs, rng);
        auto w = random_vec<T>(ws, rng);
        auto dy = random_vec<T>(ys, rng);

        std::vector<T> y(ys), yref(ys);
        kernels::conv2d_forward(x.data(), w.data(), y.data(), s);
        kernels::reference::conv2d_forward(x.data(), w.data(), yref.data(), s);
        CHECK(max_rel_diff(y, yref) < tol);

        std::vector<T> dx(xs), dxref(xs);
        kernels::conv2d_backward_input(dy.data(), w.data(), dx.data(), s);
        kernels::reference::conv2d_backward_input(dy.data(), w.data(), dxref.data(), s);
        CHECK(max_rel_diff(dx, dxref) < tol);

        std::vector<T> dw(ws), dwref(ws);
        kernels::conv2d_backward_weight(x.data(), dy.data(), dw.data(), s);
        kernels::reference::conv2d_backward_weight(x.data(), dy.data(), dwref.data(), s);
        CHECK(max_rel_diff(dw, dwref) < tol);
    }
}

TEST_CASE("thread count does not change a single bit") {
    Rng rng(7);
    ConvShape s{4, 8, 12, 16, 16, 3, 3, 1, 1, 1};
    const size_t xs = static_cast<size_t>(s.n) * s.cin * s.h * s.w;
    const size_t ws = static_cast<size_t>(s.cout) * s.cin * s.kh * s.kw;
    const size_t ys = static_cast<size_t>(s.n) * s.cout * s.oh() * s.ow();
    auto x = random_vec<float>(xs, rng);
    auto w = random_vec<float>(ws, rng);
    auto dy = random_vec<float>(ys, rng);

    std::vector<float> y1(ys), y4(ys), dw1(ws), dw4(ws), dx1(xs), dx4(xs);
    kernels::set_threads(1);
    kernels::conv2d_forward(x.data(), w.data(), y1.data(), s);
    kernels::conv2d_backward_weight(x.data(), dy.data(), dw1.data(), s);
    kernels::conv2d_backward_input(dy.data(), w.data(), dx1.data(), s);
    kernels::set_threads(4);
    kernels::conv2d_forward(x.data(), w.data(), y4.data(), s);
    kernels::conv2d_backward_weight(x.data(), dy.data(), dw4.data(), s);
    kernels::conv2d_backward_input(dy.data(), w.data(), dx4.data(), s);
    kernels::set_threads(0);

    CHECK(std::memcmp(y1.data(), y4.data(), ys * sizeof(float)) == 0);
    CHECK(std::memcmp(dw1.data(), dw4.data(), ws * sizeof(float)) == 0);
    CHECK(std::memcmp(dx1.data(), dx4.data(), xs * sizeof(float)) == 0);
}

TEST_CASE("gemm matches the naive triple loop bitwise") {
    Rng rng(3);
    const int m = 17, k = 33, p = 301;  // spans a tile boundary
    auto a = random_vec<double>(static_cast<size_t>(m) * k, rng);
    auto b = random_vec<double>(static_cast<size_t>(k) * p, rng);
    std::vector<double> c(static_cast<size_t>(m) * p), cref(c.size(), 0.0);
    kernels::gemm(m, k, p, a.data(), b.data(), c.data());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk)
                acc += a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * p + j];
            cref[static_cast<size_t>(i) * p + j] = acc;
        }
    for (size_t i = 0; i < c.size(); ++i) CHECK(c[i] == cref[i]);
}

TEST_CASE("dense kernels agree with the reference") {
    Rng rng(5);
    const int n = 9, in = 37, out = 13;
    auto x = random_vec<float>(static_cast<size_t>(n) * in, rng);
    auto w = random_vec<float>(static_cast<size_t>(out) * in, rng);
    auto b = random_vec<float>(out, rng);
    auto dy = random_vec<float>(static_cast<size_t>(n) * out, rng);

    std::vector<float> y(static_cast<size_t>(n) * out), yref(y.size());
    kernels::dense_forward(x.data(), w.data(), b.data(), y.data(), n, in, out);
    kernels::reference::dense_forward(x.data(), w.data(), b.data(), yref.data(), n, in, out);
    CHECK(max_rel_diff(y, yref) < 1e-5);

    std::vector<float> dx(x.size()), dxref(x.size());
    kernels::dense_backward_input(dy.data(), w.data(), dx.data(), n, in, out);
    kernels::reference::dense_backward_input(dy.data(), w.data(), dxref.data(), n, in, out);
    CHECK(max_rel_diff(dx, dxref) < 1e-5);

    std::vector<float> dw(w.size()), dwref(w.size()), db(out), dbref(out);
    kernels::dense_backward_weight(x.data(), dy.data(), dw.data(), db.data(), n, in, out);
    kernels::reference::dense_backward_weight(x.data(), dy.data(), dwref.data(), dbref.data(), n,
                                              in, out);
    CHECK(max_rel_diff(dw, dwref) < 1e-5);
    CHECK(max_rel_diff(db, dbref) < 1e-5);
}

TEST_CASE("invalid conv shapes are rejected") {
    ConvShape s;
    s.cin = 4;
    s.groups = 3;  // does not divide
    CHECK_THROWS_AS(kernels::conv2d_forward<float>(nullptr, nullptr, nullptr, s),
                    std::invalid_argument);
}
