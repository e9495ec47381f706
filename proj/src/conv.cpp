#include <Eigen/Core>
#include <vector>

#include "kernels.hpp"

namespace sparse::kernels {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// col: [Cin*kh*kw, Ho*Wo]
void im2col(const ConvDims& d, const double* x, double* col) {
    const std::int64_t plane = d.out_height * d.out_width;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < d.in_channels; ++c) {
        const double* xc = x + c * d.height * d.width;
        for (std::int64_t ki = 0; ki < d.kernel_h; ++ki) {
            for (std::int64_t kj = 0; kj < d.kernel_w; ++kj, ++row) {
                double* out = col + row * plane;
                for (std::int64_t oy = 0; oy < d.out_height; ++oy) {
                    const std::int64_t iy = oy * d.stride - d.padding + ki;
                    double* out_row = out + oy * d.out_width;
                    if (iy < 0 || iy >= d.height) {
                        std::fill(out_row, out_row + d.out_width, 0.0);
                        continue;
                    }
                    const double* x_row = xc + iy * d.width;
                    for (std::int64_t ox = 0; ox < d.out_width; ++ox) {
                        const std::int64_t ix = ox * d.stride - d.padding + kj;
                        out_row[ox] = (ix >= 0 && ix < d.width) ? x_row[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvDims& d, const double* col, double* x) {
    const std::int64_t plane = d.out_height * d.out_width;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < d.in_channels; ++c) {
        double* xc = x + c * d.height * d.width;
        for (std::int64_t ki = 0; ki < d.kernel_h; ++ki) {
            for (std::int64_t kj = 0; kj < d.kernel_w; ++kj, ++row) {
                const double* in = col + row * plane;
                for (std::int64_t oy = 0; oy < d.out_height; ++oy) {
                    const std::int64_t iy = oy * d.stride - d.padding + ki;
                    if (iy < 0 || iy >= d.height) continue;
                    double* x_row = xc + iy * d.width;
                    const double* in_row = in + oy * d.out_width;
                    for (std::int64_t ox = 0; ox < d.out_width; ++ox) {
                        const std::int64_t ix = ox * d.stride - d.padding + kj;
                        if (ix >= 0 && ix < d.width) x_row[ix] += in_row[ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const ConvDims& d) {
    return d.kernel_h == 1 && d.kernel_w == 1 && d.stride == 1 && d.padding == 0;
}

}  // namespace

void conv2d_forward(const ConvDims& d, const double* x, const double* w, double* y) {
    const std::int64_t patch = d.in_channels * d.kernel_h * d.kernel_w;
    const std::int64_t plane = d.out_height * d.out_width;
    MapConst weight(w, d.out_channels, patch);
    std::vector<double> col(is_pointwise(d) ? 0 : static_cast<std::size_t>(patch * plane));
    for (std::int64_t b = 0; b < d.batch; ++b) {
        const double* xb = x + b * d.in_channels * d.height * d.width;
        const double* cols = xb;
        if (!is_pointwise(d)) {
            im2col(d, xb, col.data());
            cols = col.data();
        }
        Map out(y + b * d.out_channels * plane, d.out_channels, plane);
        out.noalias() = weight * MapConst(cols, patch, plane);
    }
}

void conv2d_backward_input(const ConvDims& d, const double* grad_out, const double* w, double* dx) {
    const std::int64_t patch = d.in_channels * d.kernel_h * d.kernel_w;
    const std::int64_t plane = d.out_height * d.out_width;
    MapConst weight(w, d.out_channels, patch);
    RowMatrix col(patch, plane);
    for (std::int64_t b = 0; b < d.batch; ++b) {
        MapConst g(grad_out + b * d.out_channels * plane, d.out_channels, plane);
        double* dxb = dx + b * d.in_channels * d.height * d.width;
        if (is_pointwise(d)) {
            Map(dxb, patch, plane).noalias() += weight.transpose() * g;
        } else {
            col.noalias() = weight.transpose() * g;
            col2im_add(d, col.data(), dxb);
        }
    }
}

void conv2d_backward_weight(const ConvDims& d, const double* x, const double* grad_out, double* dw) {
    const std::int64_t patch = d.in_channels * d.kernel_h * d.kernel_w;
    const std::int64_t plane = d.out_height * d.out_width;
    Map dweight(dw, d.out_channels, patch);
    std::vector<double> col(is_pointwise(d) ? 0 : static_cast<std::size_t>(patch * plane));
    for (std::int64_t b = 0; b < d.batch; ++b) {
        const double* xb = x + b * d.in_channels * d.height * d.width;
        const double* cols = xb;
        if (!is_pointwise(d)) {
            im2col(d, xb, col.data());
            cols = col.data();
        }
        MapConst g(grad_out + b * d.out_channels * plane, d.out_channels, plane);
        dweight.noalias() += g * MapConst(cols, patch, plane).transpose();
    }
}

void matmul(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    Map(c, m, n).noalias() = MapConst(a, m, k) * MapConst(b, k, n);
}

}  // namespace sparse::kernels
