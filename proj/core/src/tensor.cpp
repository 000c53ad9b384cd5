#include "echodfkd/tensor.hpp"

#include <cblas.h>

namespace echodfkd {

void gemm(int m, int n, int k, const float* a, const float* b, float* c,
          bool trans_a, bool trans_b, bool accumulate) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a,
                trans_a ? m : k, b, trans_b ? k : n,
                accumulate ? 1.0f : 0.0f, c, n);
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c,
          bool trans_a, bool trans_b, bool accumulate) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a,
                trans_a ? m : k, b, trans_b ? k : n, accumulate ? 1.0 : 0.0,
                c, n);
}

}  // namespace echodfkd
