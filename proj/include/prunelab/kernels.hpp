#pragma once

#include <cstddef>

namespace prunelab::kernels {

// Geometry of one conv2d call. Activations N,C,H,W; kernels out,in/groups,kh,kw.
struct ConvShape {
    int n = 1;
    int cin = 1, h = 1, w = 1;
    int cout = 1, kh = 1, kw = 1;
    int stride = 1, pad = 0, groups = 1;

    int oh() const { return (h + 2 * pad - kh) / stride + 1; }
    int ow() const { return (w + 2 * pad - kw) / stride + 1; }
    bool valid() const {
        return n >= 1 && cin >= 1 && cout >= 1 && kh >= 1 && kw >= 1 && stride >= 1 &&
               pad >= 0 && groups >= 1 && cin % groups == 0 && cout % groups == 0 &&
               oh() >= 1 && ow() >= 1;
    }
};

// Number of OpenMP threads the fast kernels may use. 1 forces serial execution.
// Results are bitwise identical for any thread count: every output element is
// accumulated by exactly one thread, in a fixed order (see kernels.cpp).
int max_threads();
void set_threads(int n);

// ---- fast kernels (OpenMP; im2col + tiled GEMM for groups == 1) ----

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const ConvShape& s);

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const ConvShape& s);

template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, const ConvShape& s);

// dense: x is n-by-in, w is out-by-in, y is n-by-out
template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int in, int out);

template <typename T>
void dense_backward_input(const T* dy, const T* w, T* dx, int n, int in, int out);

template <typename T>
void dense_backward_weight(const T* x, const T* dy, T* dw, T* db, int n, int in, int out);

// C[m x p] = A[m x k] * B[k x p], all row-major
template <typename T>
void gemm(int m, int k, int p, const T* a, const T* b, T* c);

// ---- serial reference implementations (the oracle the tests compare against) ----

namespace reference {

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const ConvShape& s);

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const ConvShape& s);

template <typename T>
void conv2d_backward_weight(const T* x, const T* dy, T* dw, const ConvShape& s);

template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int in, int out);

template <typename T>
void dense_backward_input(const T* dy, const T* w, T* dx, int n, int in, int out);

template <typename T>
void dense_backward_weight(const T* x, const T* dy, T* dw, T* db, int n, int in, int out);

}  // namespace reference

}  // namespace prunelab::kernels
