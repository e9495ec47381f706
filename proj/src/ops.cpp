#include "sparse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "kernels.hpp"

namespace sparse::ag {

namespace {

using BackwardFn = std::function<std::vector<Tensor>(const Tensor&, const std::vector<bool>&)>;

class LambdaFunction final : public Function {
public:
    LambdaFunction(const char* name, BackwardFn fn) : name_(name), fn_(std::move(fn)) {}
    const char* name() const override { return name_; }
    std::vector<Tensor> backward(const Tensor& grad_output, const std::vector<bool>& needed) override {
        return fn_(grad_output, needed);
    }

private:
    const char* name_;
    BackwardFn fn_;
};

bool any_requires_grad(const std::vector<Tensor>& inputs) {
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor record(const char* name, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              BackwardFn backward) {
    if (!GradMode::enabled() || !any_requires_grad(inputs)) {
        return Tensor::make_result(std::move(shape), std::move(values), nullptr);
    }
    auto fn = std::make_shared<LambdaFunction>(name, std::move(backward));
    fn->inputs = std::move(inputs);
    return Tensor::make_result(std::move(shape), std::move(values), std::move(fn));
}

template <class F>
std::vector<double> map_values(const Tensor& x, F f) {
    std::vector<double> out(x.values());
    for (double& v : out) v = f(v);
    return out;
}

Tensor constant_like(const Tensor& x, std::vector<double> values) { return Tensor::from(x.shape(), std::move(values)); }

Shape left_pad(const Shape& s, std::size_t rank) {
    Shape out(rank - s.size(), 1);
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

// Calls f(big_flat, small_flat) for every element of `big`, where `small`
// broadcasts to `big`.
template <class F>
void for_each_broadcast(const Shape& big, const Shape& small, F f) {
    const std::size_t rank = big.size();
    const Shape padded = left_pad(small, rank);
    std::vector<std::int64_t> small_stride(rank, 0);
    std::int64_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
        small_stride[i] = padded[i] == 1 ? 0 : acc;
        acc *= padded[i];
    }
    const std::int64_t total = numel_of(big);
    if (rank == 0) {
        if (total) f(0, 0);
        return;
    }
    // Iterate the innermost axis in a tight loop.
    const std::int64_t inner = big[rank - 1];
    const std::int64_t inner_stride = small_stride[rank - 1];
    std::vector<std::int64_t> counter(rank, 0);
    std::int64_t small_base = 0;
    for (std::int64_t flat = 0; flat < total; flat += inner) {
        for (std::int64_t j = 0; j < inner; ++j) f(flat + j, small_base + j * inner_stride);
        for (std::size_t axis = rank - 1; axis-- > 0;) {
            ++counter[axis];
            small_base += small_stride[axis];
            if (counter[axis] < big[axis]) break;
            small_base -= small_stride[axis] * counter[axis];
            counter[axis] = 0;
        }
    }
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw std::out_of_range("axis out of range");
    return axis;
}

// (outer, extent, inner) around `axis`
struct AxisSplit {
    std::int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::int64_t axis) {
    AxisSplit out;
    for (std::int64_t i = 0; i < axis; ++i) out.outer *= s[static_cast<std::size_t>(i)];
    out.extent = s[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) out.inner *= s[i];
    return out;
}

kernels::ConvDims conv_dims(const Shape& x, const Shape& w, ConvGeometry geom) {
    if (x.size() != 4 || w.size() != 4) throw std::invalid_argument("conv2d expects 4-D input and weight");
    if (x[1] != w[1]) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x[1]) + " vs weight " +
                                    shape_str(w));
    }
    kernels::ConvDims d{};
    d.batch = x[0];
    d.in_channels = x[1];
    d.height = x[2];
    d.width = x[3];
    d.out_channels = w[0];
    d.kernel_h = w[2];
    d.kernel_w = w[3];
    d.stride = geom.stride;
    d.padding = geom.padding;
    d.out_height = (d.height + 2 * d.padding - d.kernel_h) / d.stride + 1;
    d.out_width = (d.width + 2 * d.padding - d.kernel_w) / d.stride + 1;
    if (d.out_height <= 0 || d.out_width <= 0) throw std::invalid_argument("conv2d: empty output");
    return d;
}

Tensor binary_same_shape(const char* name, const Tensor& a, const Tensor& b, double (*f)(double, double),
                         BackwardFn backward) {
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i], bv[i]);
    return record(name, {a, b}, a.shape(), std::move(out), std::move(backward));
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape pa = left_pad(a, rank), pb = left_pad(b, rank), out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (pa[i] == pb[i] || pb[i] == 1) {
            out[i] = pa[i];
        } else if (pa[i] == 1) {
            out[i] = pb[i];
        } else {
            throw std::invalid_argument("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
    }
    return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    if (broadcast_shape(x.shape(), shape) != shape) {
        throw std::invalid_argument("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(static_cast<std::size_t>(numel_of(shape)));
    const auto& xv = x.values();
    for_each_broadcast(shape, x.shape(), [&](std::int64_t big, std::int64_t small) {
        out[static_cast<std::size_t>(big)] = xv[static_cast<std::size_t>(small)];
    });
    Shape src = x.shape();
    return record("broadcast_to", {x}, shape, std::move(out),
                  [src](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{sum_to(g, src)}; });
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    if (broadcast_shape(shape, x.shape()) != x.shape()) {
        throw std::invalid_argument("cannot reduce " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(static_cast<std::size_t>(numel_of(shape)), 0.0);
    const auto& xv = x.values();
    for_each_broadcast(x.shape(), shape, [&](std::int64_t big, std::int64_t small) {
        out[static_cast<std::size_t>(small)] += xv[static_cast<std::size_t>(big)];
    });
    Shape src = x.shape();
    return record("sum_to", {x}, shape, std::move(out),
                  [src](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{broadcast_to(g, src)};
                  });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        Shape s = broadcast_shape(a.shape(), b.shape());
        return add(broadcast_to(a, s), broadcast_to(b, s));
    }
    return binary_same_shape("add", a, b, [](double x, double y) { return x + y; },
                             [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        Shape s = broadcast_shape(a.shape(), b.shape());
        return sub(broadcast_to(a, s), broadcast_to(b, s));
    }
    return binary_same_shape("sub", a, b, [](double x, double y) { return x - y; },
                             [](const Tensor& g, const std::vector<bool>& need) {
                                 return std::vector<Tensor>{g, need[1] ? neg(g) : Tensor()};
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        Shape s = broadcast_shape(a.shape(), b.shape());
        return mul(broadcast_to(a, s), broadcast_to(b, s));
    }
    return binary_same_shape("mul", a, b, [](double x, double y) { return x * y; },
                             [a, b](const Tensor& g, const std::vector<bool>& need) {
                                 return std::vector<Tensor>{need[0] ? mul(g, b) : Tensor(),
                                                            need[1] ? mul(g, a) : Tensor()};
                             });
}

Tensor div(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        Shape s = broadcast_shape(a.shape(), b.shape());
        return div(broadcast_to(a, s), broadcast_to(b, s));
    }
    return binary_same_shape("div", a, b, [](double x, double y) { return x / y; },
                             [a, b](const Tensor& g, const std::vector<bool>& need) {
                                 return std::vector<Tensor>{need[0] ? div(g, b) : Tensor(),
                                                            need[1] ? neg(div(mul(g, a), mul(b, b))) : Tensor()};
                             });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
    return record("scale", {x}, x.shape(), map_values(x, [factor](double v) { return v * factor; }),
                  [factor](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{scale(g, factor)};
                  });
}

Tensor add_scalar(const Tensor& x, double value) {
    return record("add_scalar", {x}, x.shape(), map_values(x, [value](double v) { return v + value; }),
                  [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g}; });
}

Tensor exp(const Tensor& x) {
    return record("exp", {x}, x.shape(), map_values(x, [](double v) { return std::exp(v); }),
                  [x](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{mul(g, exp(x))}; });
}

Tensor log(const Tensor& x) {
    return record("log", {x}, x.shape(), map_values(x, [](double v) { return std::log(v); }),
                  [x](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{div(g, x)}; });
}

Tensor tanh(const Tensor& x) {
    return record("tanh", {x}, x.shape(), map_values(x, [](double v) { return std::tanh(v); }),
                  [x](const Tensor& g, const std::vector<bool>&) {
                      Tensor t = tanh(x);
                      return std::vector<Tensor>{mul(g, add_scalar(neg(mul(t, t)), 1.0))};
                  });
}

Tensor pow(const Tensor& x, double exponent) {
    return record("pow", {x}, x.shape(), map_values(x, [exponent](double v) { return std::pow(v, exponent); }),
                  [x, exponent](const Tensor& g, const std::vector<bool>&) {
                      if (exponent == 1.0) return std::vector<Tensor>{g};
                      return std::vector<Tensor>{mul(g, scale(pow(x, exponent - 1.0), exponent))};
                  });
}

Tensor sqrt(const Tensor& x) { return pow(x, 0.5); }

Tensor abs(const Tensor& x) {
    Tensor sign = constant_like(x, map_values(x, [](double v) { return double((v > 0) - (v < 0)); }));
    return record("abs", {x}, x.shape(), map_values(x, [](double v) { return std::abs(v); }),
                  [sign](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{mul(g, sign)}; });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
    std::vector<double> out(x.values());
    std::vector<double> mask(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = out[i] > 0 ? 1.0 : negative_slope;
        out[i] *= mask[i];
    }
    if (!GradMode::enabled() || !x.requires_grad()) return Tensor::make_result(x.shape(), std::move(out), nullptr);
    Tensor m = constant_like(x, std::move(mask));
    return record("leaky_relu", {x}, x.shape(), std::move(out),
                  [m](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{mul(g, m)}; });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor clamp_min(const Tensor& x, double floor) {
    std::vector<double> out(x.values());
    std::vector<double> mask(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = out[i] > floor ? 1.0 : 0.0;
        out[i] = std::max(out[i], floor);
    }
    if (!GradMode::enabled() || !x.requires_grad()) return Tensor::make_result(x.shape(), std::move(out), nullptr);
    Tensor m = constant_like(x, std::move(mask));
    return record("clamp_min", {x}, x.shape(), std::move(out),
                  [m](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{mul(g, m)}; });
}

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t known = 1, infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            infer = static_cast<std::int64_t>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) shape[static_cast<std::size_t>(infer)] = known ? x.numel() / known : 0;
    if (numel_of(shape) != x.numel()) {
        throw std::invalid_argument("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Shape src = x.shape();
    return record("reshape", {x}, shape, x.values(), [src](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{reshape(g, src)};
    });
}

Tensor sum(const Tensor& x) { return reshape(sum_to(x, Shape(x.shape().size(), 1)), {}); }

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor transpose(const Tensor& x) {
    if (x.dim() != 2) throw std::invalid_argument("transpose expects a matrix");
    const std::int64_t r = x.size(0), c = x.size(1);
    std::vector<double> out(x.values().size());
    const auto& xv = x.values();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j * r + i)] = xv[static_cast<std::size_t>(i * c + j)];
    return record("transpose", {x}, {c, r}, std::move(out),
                  [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
        throw std::invalid_argument("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t m = a.size(0), k = a.size(1), n = b.size(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    kernels::matmul(a.values().data(), b.values().data(), out.data(), m, k, n);
    return record("matmul", {a, b}, {m, n}, std::move(out), [a, b](const Tensor& g, const std::vector<bool>& need) {
        return std::vector<Tensor>{need[0] ? matmul(g, transpose(b)) : Tensor(),
                                   need[1] ? matmul(transpose(a), g) : Tensor()};
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat of nothing");
    const Shape& first = parts.front().shape();
    axis = normalize_axis(axis, static_cast<std::int64_t>(first.size()));
    Shape shape = first;
    shape[static_cast<std::size_t>(axis)] = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != first.size()) throw std::invalid_argument("concat rank mismatch");
        shape[static_cast<std::size_t>(axis)] += s[static_cast<std::size_t>(axis)];
        s[static_cast<std::size_t>(axis)] = first[static_cast<std::size_t>(axis)];
        if (s != first) throw std::invalid_argument("concat shape mismatch");
    }
    const AxisSplit total = split_at(shape, axis);
    std::vector<double> out(static_cast<std::size_t>(numel_of(shape)));
    std::vector<std::int64_t> offsets;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const AxisSplit ps = split_at(p.shape(), axis);
        const auto& pv = p.values();
        const std::int64_t chunk = ps.extent * ps.inner;
        for (std::int64_t o = 0; o < ps.outer; ++o) {
            std::copy_n(pv.begin() + o * chunk, chunk, out.begin() + o * total.extent * total.inner + offset * total.inner);
        }
        offset += ps.extent;
    }
    std::vector<std::int64_t> extents;
    for (const auto& p : parts) extents.push_back(p.size(axis));
    return record("concat", parts, shape, std::move(out),
                  [axis, offsets, extents](const Tensor& g, const std::vector<bool>& need) {
                      std::vector<Tensor> grads(offsets.size());
                      for (std::size_t i = 0; i < offsets.size(); ++i) {
                          if (need[i]) grads[i] = slice(g, axis, offsets[i], extents[i]);
                      }
                      return grads;
                  });
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length) {
    axis = normalize_axis(axis, x.dim());
    const AxisSplit s = split_at(x.shape(), axis);
    if (start < 0 || length < 0 || start + length > s.extent) throw std::out_of_range("slice out of range");
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = length;
    std::vector<double> out(static_cast<std::size_t>(s.outer * length * s.inner));
    const auto& xv = x.values();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        std::copy_n(xv.begin() + (o * s.extent + start) * s.inner, length * s.inner,
                    out.begin() + o * length * s.inner);
    }
    const std::int64_t full = s.extent;
    return record("slice", {x}, shape, std::move(out), [axis, start, full](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{pad_slice(g, axis, start, full)};
    });
}

Tensor pad_slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t full_length) {
    axis = normalize_axis(axis, x.dim());
    const AxisSplit s = split_at(x.shape(), axis);
    if (start < 0 || start + s.extent > full_length) throw std::out_of_range("pad_slice out of range");
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = full_length;
    std::vector<double> out(static_cast<std::size_t>(s.outer * full_length * s.inner), 0.0);
    const auto& xv = x.values();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        std::copy_n(xv.begin() + o * s.extent * s.inner, s.extent * s.inner,
                    out.begin() + (o * full_length + start) * s.inner);
    }
    const std::int64_t length = s.extent;
    return record("pad_slice", {x}, shape, std::move(out),
                  [axis, start, length](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{slice(g, axis, start, length)};
                  });
}

Tensor logsumexp(const Tensor& x) {
    if (x.dim() == 0) throw std::invalid_argument("logsumexp needs at least one axis");
    const std::int64_t k = x.size(-1);
    const std::int64_t rows = x.numel() / k;
    Shape shape = x.shape();
    shape.back() = 1;
    std::vector<double> out(static_cast<std::size_t>(rows));
    const auto& xv = x.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * k;
        const double m = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::int64_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
        out[static_cast<std::size_t>(r)] = m + std::log(s);
    }
    return record("logsumexp", {x}, shape, std::move(out), [x](const Tensor& g, const std::vector<bool>&) {
        return std::vector<Tensor>{mul(broadcast_to(g, x.shape()), softmax(x))};
    });
}

Tensor log_softmax(const Tensor& x) { return sub(x, logsumexp(x)); }

Tensor softmax(const Tensor& x) { return exp(log_softmax(x)); }

Tensor conv2d(const Tensor& x, const Tensor& weight, ConvGeometry geom) {
    const auto d = conv_dims(x.shape(), weight.shape(), geom);
    std::vector<double> out(static_cast<std::size_t>(d.batch * d.out_channels * d.out_height * d.out_width));
    kernels::conv2d_forward(d, x.values().data(), weight.values().data(), out.data());
    return record("conv2d", {x, weight}, {d.batch, d.out_channels, d.out_height, d.out_width}, std::move(out),
                  [x, weight, geom](const Tensor& g, const std::vector<bool>& need) {
                      return std::vector<Tensor>{
                          need[0] ? conv2d_input_grad(g, weight, x.shape(), geom) : Tensor(),
                          need[1] ? conv2d_weight_grad(x, g, weight.shape(), geom) : Tensor()};
                  });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape, ConvGeometry geom) {
    const auto d = conv_dims(input_shape, weight.shape(), geom);
    if (grad_out.shape() != Shape{d.batch, d.out_channels, d.out_height, d.out_width}) {
        throw std::invalid_argument("conv2d_input_grad: bad gradient shape " + shape_str(grad_out.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(numel_of(input_shape)), 0.0);
    kernels::conv2d_backward_input(d, grad_out.values().data(), weight.values().data(), out.data());
    return record("conv2d_input_grad", {grad_out, weight}, input_shape, std::move(out),
                  [grad_out, weight, geom](const Tensor& g, const std::vector<bool>& need) {
                      // <input_grad(go, w), G> = <go, conv(G, w)> = <w, weight_grad(G, go)>
                      return std::vector<Tensor>{
                          need[0] ? conv2d(g, weight, geom) : Tensor(),
                          need[1] ? conv2d_weight_grad(g, grad_out, weight.shape(), geom) : Tensor()};
                  });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, const Shape& weight_shape, ConvGeometry geom) {
    const auto d = conv_dims(x.shape(), weight_shape, geom);
    if (grad_out.shape() != Shape{d.batch, d.out_channels, d.out_height, d.out_width}) {
        throw std::invalid_argument("conv2d_weight_grad: bad gradient shape " + shape_str(grad_out.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(numel_of(weight_shape)), 0.0);
    kernels::conv2d_backward_weight(d, x.values().data(), grad_out.values().data(), out.data());
    return record("conv2d_weight_grad", {x, grad_out}, weight_shape, std::move(out),
                  [x, grad_out, geom](const Tensor& g, const std::vector<bool>& need) {
                      return std::vector<Tensor>{
                          need[0] ? conv2d_input_grad(grad_out, g, x.shape(), geom) : Tensor(),
                          need[1] ? conv2d(x, g, geom) : Tensor()};
                  });
}

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.dim() != 4) throw std::invalid_argument("upsample expects NCHW");
    const std::int64_t planes = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
    std::vector<double> out(static_cast<std::size_t>(planes * 4 * h * w));
    const auto& xv = x.values();
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* src = xv.data() + p * h * w;
        double* dst = out.data() + p * 4 * h * w;
        for (std::int64_t i = 0; i < 2 * h; ++i)
            for (std::int64_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
    }
    return record("upsample_nearest2x", {x}, {x.size(0), x.size(1), 2 * h, 2 * w}, std::move(out),
                  [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{sum_pool2x(g)}; });
}

Tensor sum_pool2x(const Tensor& x) {
    if (x.dim() != 4 || x.size(2) % 2 || x.size(3) % 2) throw std::invalid_argument("sum_pool2x expects even NCHW");
    const std::int64_t planes = x.size(0) * x.size(1), h = x.size(2) / 2, w = x.size(3) / 2;
    std::vector<double> out(static_cast<std::size_t>(planes * h * w), 0.0);
    const auto& xv = x.values();
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* src = xv.data() + p * 4 * h * w;
        double* dst = out.data() + p * h * w;
        for (std::int64_t i = 0; i < 2 * h; ++i)
            for (std::int64_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
    }
    return record("sum_pool2x", {x}, {x.size(0), x.size(1), h, w}, std::move(out),
                  [](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{upsample_nearest2x(g)};
                  });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.dim() != 4) throw std::invalid_argument("global_avg_pool expects NCHW");
    const double area = static_cast<double>(x.size(2) * x.size(3));
    return scale(reshape(sum_to(x, {x.size(0), x.size(1), 1, 1}), {x.size(0), x.size(1)}), 1.0 / area);
}

}  // namespace sparse::ag
