#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace prunelab {

// Dense n-dimensional row-major array. Activations are N,C,H,W; conv kernels
// are out,in,kh,kw.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw std::invalid_argument("tensor: extents must be positive");
            n *= static_cast<size_t>(e);
        }
        return n;
    }

    size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    // N,C,H,W addressing
    T& at4(int n, int c, int h, int w) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const T& at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    void fill(T v) { data.assign(data.size(), v); }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "(";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape[i]);
    }
    return s + ")";
}

}  // namespace prunelab
