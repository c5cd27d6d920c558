// times the OpenMP kernels against the serial reference implementations

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prunelab/kernels.hpp"
#include "prunelab/rng.hpp"

using namespace prunelab;
using kernels::ConvShape;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

double conv_gmacs(const ConvShape& s) {
    return 1e-9 * s.n * s.cout * s.oh() * s.ow() * (s.cin / s.groups) * s.kh * s.kw;
}

void bench_shape(const char* label, const ConvShape& s, int repeats) {
    Rng rng(1);
    std::vector<float> x(static_cast<size_t>(s.n) * s.cin * s.h * s.w);
    std::vector<float> w(static_cast<size_t>(s.cout) * (s.cin / s.groups) * s.kh * s.kw);
    std::vector<float> y(static_cast<size_t>(s.n) * s.cout * s.oh() * s.ow());
    std::vector<float> dx(x.size()), dw(w.size());
    for (auto& v : x) v = static_cast<float>(rng.normal());
    for (auto& v : w) v = static_cast<float>(rng.normal());

    struct Row {
        const char* op;
        std::function<void()> fast, ref;
    };
    const std::vector<Row> rows = {
        {"forward", [&] { kernels::conv2d_forward(x.data(), w.data(), y.data(), s); },
         [&] { kernels::reference::conv2d_forward(x.data(), w.data(), y.data(), s); }},
        {"dgrad", [&] { kernels::conv2d_backward_input(y.data(), w.data(), dx.data(), s); },
         [&] { kernels::reference::conv2d_backward_input(y.data(), w.data(), dx.data(), s); }},
        {"wgrad", [&] { kernels::conv2d_backward_weight(x.data(), y.data(), dw.data(), s); },
         [&] { kernels::reference::conv2d_backward_weight(x.data(), y.data(), dw.data(), s); }},
    };

    const double gm = conv_gmacs(s);
    for (const auto& r : rows) {
        const double fast_ms = time_ms(r.fast, repeats);
        const double ref_ms = time_ms(r.ref, std::max(1, repeats / 4));
        std::printf("%-22s %-8s fast %8.3f ms (%6.2f GMAC/s)   reference %8.3f ms (%6.2f GMAC/s)   speedup %5.2fx\n",
                    label, r.op, fast_ms, gm / fast_ms * 1e3, ref_ms, gm / ref_ms * 1e3,
                    ref_ms / fast_ms);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel benchmark: OpenMP fast path vs serial reference"};
    int threads = 0;
    int repeats = 10;
    app.add_option("--threads", threads, "0 = library default");
    app.add_option("--repeats", repeats);
    CLI11_PARSE(app, argc, argv);

    kernels::set_threads(threads);
    std::printf("threads: %d\n", kernels::max_threads());

    bench_shape("stage1 1->16 40x128", {32, 1, 40, 128, 16, 3, 3, 1, 1, 1}, repeats);
    bench_shape("stage3 32->64 10x32", {32, 32, 10, 32, 64, 3, 3, 1, 1, 1}, repeats);
    bench_shape("depthwise 64 20x64", {32, 64, 20, 64, 64, 3, 3, 1, 1, 64}, repeats);
    bench_shape("pointwise 64->128", {32, 64, 10, 32, 128, 1, 1, 1, 0, 1}, repeats);
    return 0;
}
