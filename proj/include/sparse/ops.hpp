#pragma once

// Differentiable tensor operations. Binary elementwise ops broadcast with
// numpy rules; images are NCHW.

#include <cstdint>
#include <vector>

#include "sparse/autograd.hpp"

namespace sparse::ag {

Shape broadcast_shape(const Shape& a, const Shape& b);

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
Tensor relu(const Tensor& x);
// max(x, floor); gradient passes only where x > floor.
Tensor clamp_min(const Tensor& x, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }

// shape
Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
// Sum over broadcast axes down to `shape` (inverse of broadcast_to).
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor transpose(const Tensor& x);  // 2-D only
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length);
// Zero tensor of extent `full_length` along `axis` with x placed at `start`.
Tensor pad_slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t full_length);

// softmax family over the last axis
Tensor logsumexp(const Tensor& x);  // keeps the last axis with extent 1
Tensor log_softmax(const Tensor& x);
Tensor softmax(const Tensor& x);

// convolution family; weights are [Cout, Cin, kh, kw]
struct ConvGeometry {
    std::int64_t stride = 1;
    std::int64_t padding = 0;
};
Tensor conv2d(const Tensor& x, const Tensor& weight, ConvGeometry geom);
// Gradient of conv2d w.r.t. its input, given the output gradient.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape, ConvGeometry geom);
// Gradient of conv2d w.r.t. its weight, given input and output gradient.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, const Shape& weight_shape, ConvGeometry geom);

Tensor upsample_nearest2x(const Tensor& x);
Tensor sum_pool2x(const Tensor& x);
// Mean over H and W: [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

}  // namespace sparse::ag
