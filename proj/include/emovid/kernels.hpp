#pragma once

// Low-level numeric kernels behind the tensor ops. The primary versions are
// OpenMP-parallel; parallelism is only ever over independent output elements
// and each element is accumulated in a fixed serial order, so results are
// bit-identical for any thread count. emovid::kernels::serial holds naive
// straight-line reference implementations kept for testing and benchmarking.

namespace emovid::kernels {

// y(m x n) = op_a(a) * op_b(b) where op transposes when the flag is set.
// a is m x k after op_a, b is k x n after op_b. When accumulate is set the
// product is added into y, otherwise y is overwritten.
void gemm(const double* a, const double* b, double* y, int m, int k, int n,
          bool transpose_a = false, bool transpose_b = false,
          bool accumulate = false);

struct Conv2dShape {
    int groups = 1;
    int stride = 1;
    int pad = 0;
    int cin = 0, h = 0, w = 0;    // input tensor extents
    int cout = 0, kh = 0, kw = 0; // filter extents; weights are cout x (cin/groups) x kh x kw

    int oh() const { return (h + 2 * pad - kh) / stride + 1; }
    int ow() const { return (w + 2 * pad - kw) / stride + 1; }
};

// Zero-padded grouped convolution. y is overwritten; gradients accumulate.
void conv2d_forward(const Conv2dShape& s, const double* x, const double* w, double* y);
void conv2d_grad_input(const Conv2dShape& s, const double* gy, const double* w, double* gx);
void conv2d_grad_weight(const Conv2dShape& s, const double* gy, const double* x, double* gw);

namespace serial {

void gemm(const double* a, const double* b, double* y, int m, int k, int n,
          bool transpose_a = false, bool transpose_b = false,
          bool accumulate = false);

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w, double* y);
void conv2d_grad_input(const Conv2dShape& s, const double* gy, const double* w, double* gx);
void conv2d_grad_weight(const Conv2dShape& s, const double* gy, const double* x, double* gw);

} // namespace serial

} // namespace emovid::kernels
