#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "echodfkd/errors.hpp"

namespace echodfkd {

// Dense NCHW tensor. Lower-rank data uses leading dims of 1.
template <typename S>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<S> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, S(0)) {}

    size_t size() const { return v.size(); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    S& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    S at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    void fill(S x) { std::fill(v.begin(), v.end(), x); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Row-major C[MxN] = A[MxK] * B[KxN] (+ C if accumulate).
void gemm(int m, int n, int k, const float* a, const float* b, float* c,
          bool trans_a = false, bool trans_b = false, bool accumulate = false);
void gemm(int m, int n, int k, const double* a, const double* b, double* c,
          bool trans_a = false, bool trans_b = false, bool accumulate = false);

}  // namespace echodfkd
