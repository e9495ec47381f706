#pragma once

// Raw dense kernels behind the differentiable ops. Row-major storage.

#include <cstdint>

namespace sparse::kernels {

struct ConvDims {
    std::int64_t batch, in_channels, height, width;
    std::int64_t out_channels, kernel_h, kernel_w;
    std::int64_t stride, padding;
    std::int64_t out_height, out_width;
};

void conv2d_forward(const ConvDims& d, const double* x, const double* w, double* y);
// dx must be zero-initialised; results are accumulated.
void conv2d_backward_input(const ConvDims& d, const double* grad_out, const double* w, double* dx);
// dw must be zero-initialised; results are accumulated.
void conv2d_backward_weight(const ConvDims& d, const double* x, const double* grad_out, double* dw);

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n);

}  // namespace sparse::kernels
