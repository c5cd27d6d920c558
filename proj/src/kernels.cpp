#include "prunelab/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

// Accumulation-order contract: every output element is produced by exactly one
// thread and its additive terms are consumed in a fixed order (k ascending for
// GEMM elements, sample index ascending for weight gradients). Changing the
// thread count therefore never changes a single bit of the result.

namespace prunelab::kernels {

namespace {

int g_threads =
#ifdef _OPENMP
    0;  // 0 = use the OpenMP default
#else
    1;
#endif

inline int div_up(int a, int b) { return (a + b - 1) / b; }

void check(const ConvShape& s) {
    if (!s.valid()) throw std::invalid_argument("conv2d: invalid shape");
}

// column tile sized so a K x NB block of B stays cache resident
constexpr int kGemmTile = 256;

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
    g_threads = n < 1 ? 0 : n;
}

// C[m x p] = A[m x k] * B[k x p]. For each (i,j) the k terms accumulate in
// ascending order, matching the naive triple loop.
template <typename T>
void gemm(int m, int k, int p, const T* a, const T* b, T* c) {
    for (int j0 = 0; j0 < p; j0 += kGemmTile) {
        const int nb = std::min(kGemmTile, p - j0);
        for (int i = 0; i < m; ++i) {
            T acc[kGemmTile];
            for (int j = 0; j < nb; ++j) acc[j] = T(0);
            const T* arow = a + static_cast<size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
                const T av = arow[kk];
                const T* brow = b + static_cast<size_t>(kk) * p + j0;
                for (int j = 0; j < nb; ++j) acc[j] += av * brow[j];
            }
            T* crow = c + static_cast<size_t>(i) * p + j0;
            for (int j = 0; j < nb; ++j) crow[j] = acc[j];
        }
    }
}

namespace {

// col is (cin*kh*kw) x (oh*ow); one row per kernel tap, zero padded
template <typename T>
void im2col(const T* x, const ConvShape& s, T* col) {
    const int oh = s.oh(), ow = s.ow(), ohw = oh * ow;
    size_t r = 0;
    for (int c = 0; c < s.cin; ++c) {
        for (int ki = 0; ki < s.kh; ++ki) {
            for (int kj = 0; kj < s.kw; ++kj, ++r) {
                T* dst = col + r * ohw;
                for (int i = 0; i < oh; ++i) {
                    const int ih = i * s.stride - s.pad + ki;
                    T* d = dst + static_cast<size_t>(i) * ow;
                    if (ih < 0 || ih >= s.h) {
                        for (int j = 0; j < ow; ++j) d[j] = T(0);
                        continue;
                    }
                    const T* src = x + (static_cast<size_t>(c) * s.h + ih) * s.w;
                    for (int j = 0; j < ow; ++j) {
                        const int iw = j * s.stride - s.pad + kj;
                        d[j] = (iw >= 0 && iw < s.w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

// row per output position, column per kernel tap: colT is (oh*ow) x (cin*kh*kw)
template <typename T>
void im2row(const T* x, const ConvShape& s, T* colt) {
    const int oh = s.oh(), ow = s.ow();
    const size_t kdim = static_cast<size_t>(s.cin) * s.kh * s.kw;
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            T* row = colt + (static_cast<size_t>(i) * ow + j) * kdim;
            size_t r = 0;
            for (int c = 0; c < s.cin; ++c) {
                for (int ki = 0; ki < s.kh; ++ki) {
                    const int ih = i * s.stride - s.pad + ki;
                    for (int kj = 0; kj < s.kw; ++kj, ++r) {
                        const int iw = j * s.stride - s.pad + kj;
                        row[r] = (ih >= 0 && ih < s.h && iw >= 0 && iw < s.w)
                                     ? x[(static_cast<size_t>(c) * s.h + ih) * s.w + iw]
                                     : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvShape& s, T* x) {
    const int oh = s.oh(), ow = s.ow(), ohw = oh * ow;
    size_t r = 0;
    for (int c = 0; c < s.cin; ++c) {
        for (int ki = 0; ki < s.kh; ++ki) {
            for (int kj = 0; kj < s.kw; ++kj, ++r) {
                const T* src = col + r * ohw;
                for (int i = 0; i < oh; ++i) {
                    const int ih = i * s.stride - s.pad + ki;
                    if (ih < 0 || ih >= s.h) continue;
                    T* dst = x + (static_cast<size_t>(c) * s.h + ih) * s.w;
                    for (int j = 0; j < ow; ++j) {
                        const int iw = j * s.stride - s.pad + kj;
                        if (iw >= 0 && iw < s.w) dst[iw] += src[static_cast<size_t>(i) * ow + j];
                    }
                }
            }
        }
    }
}

// direct path for grouped/depthwise convs; vectorizes over the output row
template <typename T>
void grouped_forward(const T* x, const T* w, T* y, const ConvShape& s) {
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * oh * ow;
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int n = 0; n < s.n; ++n) {
        const T* xn = x + n * xs;
        T* yn = y + n * ys;
        for (int g = 0; g < s.groups; ++g) {
            for (int oc = 0; oc < cog; ++oc) {
                const int co = g * cog + oc;
                const T* wc = w + (static_cast<size_t>(co) * cig) * s.kh * s.kw;
                for (int i = 0; i < oh; ++i) {
                    T* yrow = yn + (static_cast<size_t>(co) * oh + i) * ow;
                    for (int j = 0; j < ow; ++j) yrow[j] = T(0);
                    for (int ic = 0; ic < cig; ++ic) {
                        const T* xc = xn + static_cast<size_t>(g * cig + ic) * s.h * s.w;
                        for (int ki = 0; ki < s.kh; ++ki) {
                            const int ih = i * s.stride - s.pad + ki;
                            if (ih < 0 || ih >= s.h) continue;
                            const T* xrow = xc + static_cast<size_t>(ih) * s.w;
                            const T* wrow = wc + (static_cast<size_t>(ic) * s.kh + ki) * s.kw;
                            for (int kj = 0; kj < s.kw; ++kj) {
                                const T wv = wrow[kj];
                                const int jlo = std::max(0, div_up(s.pad - kj, s.stride));
                                const int jhi =
                                    std::min(ow, (s.w - 1 + s.pad - kj) / s.stride + 1);
                                for (int j = jlo; j < jhi; ++j)
                                    yrow[j] += wv * xrow[j * s.stride - s.pad + kj];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void grouped_backward_input(const T* dy, const T* w, T* dx, const ConvShape& s) {
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * oh * ow;
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int n = 0; n < s.n; ++n) {
        const T* dyn = dy + n * ys;
        T* dxn = dx + n * xs;
        std::fill(dxn, dxn + xs, T(0));
        for (int g = 0; g < s.groups; ++g) {
            for (int oc = 0; oc < cog; ++oc) {
                const int co = g * cog + oc;
                const T* wc = w + (static_cast<size_t>(co) * cig) * s.kh * s.kw;
                for (int i = 0; i < oh; ++i) {
                    const T* dyrow = dyn + (static_cast<size_t>(co) * oh + i) * ow;
                    for (int ic = 0; ic < cig; ++ic) {
                        T* dxc = dxn + static_cast<size_t>(g * cig + ic) * s.h * s.w;
                        for (int ki = 0; ki < s.kh; ++ki) {
                            const int ih = i * s.stride - s.pad + ki;
                            if (ih < 0 || ih >= s.h) continue;
                            T* dxrow = dxc + static_cast<size_t>(ih) * s.w;
                            const T* wrow = wc + (static_cast<size_t>(ic) * s.kh + ki) * s.kw;
                            for (int kj = 0; kj < s.kw; ++kj) {
                                const T wv = wrow[kj];
                                const int jlo = std::max(0, div_up(s.pad - kj, s.stride));
                                const int jhi =
                                    std::min(ow, (s.w - 1 + s.pad - kj) / s.stride + 1);
                                for (int j = jlo; j < jhi; ++j)
                                    dxrow[j * s.stride - s.pad + kj] += wv * dyrow[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void grouped_backward_weight(const T* x, const T* dy, T* dw, const ConvShape& s) {
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * oh * ow;
    const size_t wstride = static_cast<size_t>(cig) * s.kh * s.kw;
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int co = 0; co < s.cout; ++co) {
        const int g = co / cog;
        T* wc = dw + co * wstride;
        std::fill(wc, wc + wstride, T(0));
        for (int n = 0; n < s.n; ++n) {
            const T* xn = x + n * xs;
            const T* dyc = dy + n * ys + static_cast<size_t>(co) * oh * ow;
            for (int ic = 0; ic < cig; ++ic) {
                const T* xc = xn + static_cast<size_t>(g * cig + ic) * s.h * s.w;
                for (int ki = 0; ki < s.kh; ++ki) {
                    for (int kj = 0; kj < s.kw; ++kj) {
                        T accs[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
                        for (int i = 0; i < oh; ++i) {
                            const int ih = i * s.stride - s.pad + ki;
                            if (ih < 0 || ih >= s.h) continue;
                            const T* xrow = xc + static_cast<size_t>(ih) * s.w;
                            const T* dyrow = dyc + static_cast<size_t>(i) * ow;
                            const int jlo = std::max(0, div_up(s.pad - kj, s.stride));
                            const int jhi = std::min(ow, (s.w - 1 + s.pad - kj) / s.stride + 1);
                            for (int j = jlo; j < jhi; ++j)
                                accs[j & 7] += dyrow[j] * xrow[j * s.stride - s.pad + kj];
                        }
                        T acc = T(0);
                        for (T v : accs) acc += v;
                        wc[(static_cast<size_t>(ic) * s.kh + ki) * s.kw + kj] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const ConvShape& s) {
    check(s);
    if (s.groups > 1) {
        grouped_forward(x, w, y, s);
        return;
    }
    const int ohw = s.oh() * s.ow();
    const int kdim = s.cin * s.kh * s.kw;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * ohw;
#pragma omp parallel num_threads(max_threads())
    {
        std::vector<T> col(static_cast<size_t>(kdim) * ohw);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (int n = 0; n < s.n; ++n) {
            im2col(x + n * xs, s, col.data());
            gemm(s.cout, kdim, ohw, w, col.data(), y + n * ys);
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const ConvShape& s) {
    check(s);
    if (s.groups > 1) {
        grouped_backward_input(dy, w, dx, s);
        return;
    }
    const int ohw = s.oh() * s.ow();
    const int kdim = s.cin * s.kh * s.kw;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * ohw;

    // w transposed once: wt is kdim x cout
    std::vector<T> wt(static_cast<size_t>(kdim) * s.cout);
    for (int co = 0; co < s.cout; ++co)
        for (int k = 0; k < kdim; ++k)
            wt[static_cast<size_t>(k) * s.cout + co] = w[static_cast<size_t>(co) * kdim + k];

#pragma omp parallel num_threads(max_threads())
    {
        std::vector<T> dcol(static_cast<size_t>(kdim) * ohw);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
        for (int n = 0; n < s.n; ++n) {
            gemm(kdim, s.cout, ohw, wt.data(), dy + n * ys, dcol.data());
            T* dxn = dx + n * xs;
            std::fill(dxn, dxn + xs, T(0));
            col2im_add(dcol.data(), s, dxn);
        }
    }
}

template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, const ConvShape& s) {
    check(s);
    if (s.groups > 1) {
        grouped_backward_weight(x, dy, dw, s);
        return;
    }
    const int ohw = s.oh() * s.ow();
    const int kdim = s.cin * s.kh * s.kw;
    const size_t xs = static_cast<size_t>(s.cin) * s.h * s.w;
    const size_t ys = static_cast<size_t>(s.cout) * ohw;

    std::fill(dw, dw + static_cast<size_t>(s.cout) * kdim, T(0));
    std::vector<T> colt(static_cast<size_t>(ohw) * kdim);
    for (int n = 0; n < s.n; ++n) {
        im2row(x + n * xs, s, colt.data());
        const T* dyn = dy + n * ys;
        // dw[co,:] += sum_j dy[co,j] * colt[j,:]; j ascends within each sample,
        // samples ascend in the outer loop, so the order is thread-invariant
#pragma omp parallel for num_threads(max_threads()) schedule(static)
        for (int co = 0; co < s.cout; ++co) {
            T* wrow = dw + static_cast<size_t>(co) * kdim;
            const T* dyrow = dyn + static_cast<size_t>(co) * ohw;
            for (int j = 0; j < ohw; ++j) {
                const T g = dyrow[j];
                const T* crow = colt.data() + static_cast<size_t>(j) * kdim;
                for (int k = 0; k < kdim; ++k) wrow[k] += g * crow[k];
            }
        }
    }
}

template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int in, int out) {
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* xrow = x + static_cast<size_t>(i) * in;
        T* yrow = y + static_cast<size_t>(i) * out;
        for (int o = 0; o < out; ++o) {
            T acc = b ? b[o] : T(0);
            const T* wrow = w + static_cast<size_t>(o) * in;
            for (int k = 0; k < in; ++k) acc += xrow[k] * wrow[k];
            yrow[o] = acc;
        }
    }
}

template <typename T>
void dense_backward_input(const T* dy, const T* w, T* dx, int n, int in, int out) {
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int i = 0; i < n; ++i) {
        const T* dyrow = dy + static_cast<size_t>(i) * out;
        T* dxrow = dx + static_cast<size_t>(i) * in;
        for (int k = 0; k < in; ++k) dxrow[k] = T(0);
        for (int o = 0; o < out; ++o) {
            const T g = dyrow[o];
            const T* wrow = w + static_cast<size_t>(o) * in;
            for (int k = 0; k < in; ++k) dxrow[k] += g * wrow[k];
        }
    }
}

template <typename T>
void dense_backward_weight(const T* x, const T* dy, T* dw, T* db, int n, int in, int out) {
#pragma omp parallel for num_threads(max_threads()) schedule(static)
    for (int o = 0; o < out; ++o) {
        T* wrow = dw + static_cast<size_t>(o) * in;
        for (int k = 0; k < in; ++k) wrow[k] = T(0);
        T bacc = T(0);
        for (int i = 0; i < n; ++i) {
            const T g = dy[static_cast<size_t>(i) * out + o];
            bacc += g;
            const T* xrow = x + static_cast<size_t>(i) * in;
            for (int k = 0; k < in; ++k) wrow[k] += g * xrow[k];
        }
        if (db) db[o] = bacc;
    }
}

namespace reference {

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const ConvShape& s) {
    check(s);
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    for (int n = 0; n < s.n; ++n) {
        for (int co = 0; co < s.cout; ++co) {
            const int g = co / cog;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    T acc = T(0);
                    for (int ic = 0; ic < cig; ++ic) {
                        for (int ki = 0; ki < s.kh; ++ki) {
                            for (int kj = 0; kj < s.kw; ++kj) {
                                const int ih = i * s.stride - s.pad + ki;
                                const int iw = j * s.stride - s.pad + kj;
                                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                                acc += x[((static_cast<size_t>(n) * s.cin + g * cig + ic) * s.h +
                                          ih) * s.w + iw] *
                                       w[((static_cast<size_t>(co) * cig + ic) * s.kh + ki) *
                                             s.kw + kj];
                            }
                        }
                    }
                    y[((static_cast<size_t>(n) * s.cout + co) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const ConvShape& s) {
    check(s);
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    std::fill(dx, dx + static_cast<size_t>(s.n) * s.cin * s.h * s.w, T(0));
    for (int n = 0; n < s.n; ++n) {
        for (int co = 0; co < s.cout; ++co) {
            const int g = co / cog;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    const T gout = dy[((static_cast<size_t>(n) * s.cout + co) * oh + i) * ow + j];
                    for (int ic = 0; ic < cig; ++ic) {
                        for (int ki = 0; ki < s.kh; ++ki) {
                            for (int kj = 0; kj < s.kw; ++kj) {
                                const int ih = i * s.stride - s.pad + ki;
                                const int iw = j * s.stride - s.pad + kj;
                                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                                dx[((static_cast<size_t>(n) * s.cin + g * cig + ic) * s.h + ih) *
                                       s.w + iw] +=
                                    gout * w[((static_cast<size_t>(co) * cig + ic) * s.kh + ki) *
                                                 s.kw + kj];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, const ConvShape& s) {
    check(s);
    const int oh = s.oh(), ow = s.ow();
    const int cig = s.cin / s.groups, cog = s.cout / s.groups;
    std::fill(dw, dw + static_cast<size_t>(s.cout) * cig * s.kh * s.kw, T(0));
    for (int n = 0; n < s.n; ++n) {
        for (int co = 0; co < s.cout; ++co) {
            const int g = co / cog;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    const T gout = dy[((static_cast<size_t>(n) * s.cout + co) * oh + i) * ow + j];
                    for (int ic = 0; ic < cig; ++ic) {
                        for (int ki = 0; ki < s.kh; ++ki) {
                            for (int kj = 0; kj < s.kw; ++kj) {
                                const int ih = i * s.stride - s.pad + ki;
                                const int iw = j * s.stride - s.pad + kj;
                                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                                dw[((static_cast<size_t>(co) * cig + ic) * s.kh + ki) * s.kw +
                                   kj] +=
                                    gout * x[((static_cast<size_t>(n) * s.cin + g * cig + ic) *
                                                  s.h + ih) * s.w + iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int in, int out) {
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out; ++o) {
            T acc = b ? b[o] : T(0);
            for (int k = 0; k < in; ++k)
                acc += x[static_cast<size_t>(i) * in + k] * w[static_cast<size_t>(o) * in + k];
            y[static_cast<size_t>(i) * out + o] = acc;
        }
}

template <typename T>
void dense_backward_input(const T* dy, const T* w, T* dx, int n, int in, int out) {
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < in; ++k) {
            T acc = T(0);
            for (int o = 0; o < out; ++o)
                acc += dy[static_cast<size_t>(i) * out + o] * w[static_cast<size_t>(o) * in + k];
            dx[static_cast<size_t>(i) * in + k] = acc;
        }
}

template <typename T>
void dense_backward_weight(const T* x, const T* dy, T* dw, T* db, int n, int in, int out) {
    for (int o = 0; o < out; ++o) {
        for (int k = 0; k < in; ++k) {
            T acc = T(0);
            for (int i = 0; i < n; ++i)
                acc += dy[static_cast<size_t>(i) * out + o] * x[static_cast<size_t>(i) * in + k];
            dw[static_cast<size_t>(o) * in + k] = acc;
        }
        if (db) {
            T acc = T(0);
            for (int i = 0; i < n; ++i) acc += dy[static_cast<size_t>(i) * out + o];
            db[o] = acc;
        }
    }
}

}  // namespace reference

#define PRUNELAB_INSTANTIATE(T)                                                            \
    template void gemm<T>(int, int, int, const T*, const T*, T*);                          \
    template void conv2d_forward<T>(const T*, const T*, T*, const ConvShape&);             \
    template void conv2d_backward_input<T>(const T*, const T*, T*, const ConvShape&);      \
    template void conv2d_backward_weight<T>(const T*, const T*, T*, const ConvShape&);     \
    template void dense_forward<T>(const T*, const T*, const T*, T*, int, int, int);       \
    template void dense_backward_input<T>(const T*, const T*, T*, int, int, int);          \
    template void dense_backward_weight<T>(const T*, const T*, T*, T*, int, int, int);     \
    template void reference::conv2d_forward<T>(const T*, const T*, T*, const ConvShape&);  \
    template void reference::conv2d_backward_input<T>(const T*, const T*, T*,              \
                                                      const ConvShape&);                   \
    template void reference::conv2d_backward_weight<T>(const T*, const T*, T*,             \
                                                       const ConvShape&);                  \
    template void reference::dense_forward<T>(const T*, const T*, const T*, T*, int, int,  \
                                              int);                                        \
    template void reference::dense_backward_input<T>(const T*, const T*, T*, int, int,     \
                                                     int);                                 \
    template void reference::dense_backward_weight<T>(const T*, const T*, T*, T*, int,     \
                                                      int, int);

PRUNELAB_INSTANTIATE(float)
PRUNELAB_INSTANTIATE(double)

#undef PRUNELAB_INSTANTIATE

}  // namespace prunelab::kernels
