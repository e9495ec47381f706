#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "sparse/ops.hpp"

using namespace sparse::ag;
using testutil::gradcheck;
using testutil::grad_projection;
using testutil::random_tensor;

namespace {

constexpr double kTol = 1e-6;

Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor(y.shape(), rng);
    return sum(mul(y, w.detach()));
}

}  // namespace

TEST(Autograd, BasicValues) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2}, {10, 20});
    Tensor c = add(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 2}));
    EXPECT_DOUBLE_EQ(c.at(3), 24.0);
    Tensor m = matmul(a, a);
    EXPECT_DOUBLE_EQ(m.at(0), 7.0);
    EXPECT_DOUBLE_EQ(m.at(3), 22.0);
    Tensor s = softmax(Tensor::from({1, 2}, {0.0, std::log(3.0)}));
    EXPECT_NEAR(s.at(1), 0.75, 1e-12);
}

TEST(Autograd, UnreachableInputGetsZeros) {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3}, rng), b = random_tensor({2}, rng);
    auto g = grad(sum(a), {a, b});
    EXPECT_EQ(g[1].shape(), (Shape{2}));
    EXPECT_EQ(g[1].at(0), 0.0);
    EXPECT_EQ(g[0].at(2), 1.0);
}

TEST(Autograd, NoGradSkipsHistory) {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3}, rng);
    NoGradGuard ng;
    EXPECT_TRUE(exp(a).is_leaf());
    EXPECT_FALSE(exp(a).requires_grad());
}

TEST(Autograd, ElementwiseGradients) {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng, 0.5, 1.5);
    auto f = [](const std::vector<Tensor>& in) {
        const Tensor& x = in[0];
        const Tensor& y = in[1];
        Tensor t = add(mul(tanh(x), y), div(exp(x), y));
        t = add(t, leaky_relu(sub(x, y), 0.2));
        t = add(t, mul(pow(y, 3.0), sqrt(y)));
        t = add(t, log(add_scalar(abs(x), 0.5)));
        t = add(t, scale(relu(x), 1.5));
        return weighted_sum(t, 11);
    };
    EXPECT_LT(gradcheck(f, {a, b}), kTol);
}

TEST(Autograd, ShapeAndReductionGradients) {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({2, 3, 4}, rng), m = random_tensor({4, 5}, rng);
    auto f = [](const std::vector<Tensor>& in) {
        Tensor x = reshape(in[0], {-1, 4});
        Tensor y = matmul(x, in[1]);
        Tensor z = transpose(concat({slice(y, 1, 1, 3), slice(y, 1, 0, 2)}, 1));
        Tensor p = pad_slice(z, 1, 2, 9);
        return add(weighted_sum(p, 5), mean(sum_to(in[0], {3, 1})));
    };
    EXPECT_LT(gradcheck(f, {a, m}), kTol);
}

TEST(Autograd, SoftmaxFamilyGradients) {
    std::mt19937_64 rng(4);
    Tensor a = random_tensor({3, 5}, rng, -3.0, 3.0);
    auto f = [](const std::vector<Tensor>& in) {
        return add(weighted_sum(softmax(in[0]), 1),
                   add(weighted_sum(log_softmax(in[0]), 2), weighted_sum(logsumexp(in[0]), 3)));
    };
    EXPECT_LT(gradcheck(f, {a}), kTol);
}

TEST(Autograd, ConvFamilyGradients) {
    std::mt19937_64 rng(5);
    for (ConvGeometry geom : {ConvGeometry{1, 1}, ConvGeometry{2, 1}, ConvGeometry{2, 0}}) {
        Tensor x = random_tensor({2, 3, 6, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng);
        auto f = [geom](const std::vector<Tensor>& in) { return weighted_sum(conv2d(in[0], in[1], geom), 9); };
        EXPECT_LT(gradcheck(f, {x, w}), kTol);
    }
}

TEST(Autograd, ConvAdjointsAgreeWithDefinition) {
    std::mt19937_64 rng(6);
    ConvGeometry geom{2, 1};
    Tensor x = random_tensor({1, 2, 6, 6}, rng), w = random_tensor({3, 2, 4, 4}, rng);
    Tensor y = conv2d(x, w, geom);
    Tensor g = random_tensor(y.shape(), rng).detach();
    // <conv(x,w), g> == <x, input_grad(g,w)> == <w, weight_grad(x,g)>
    const double lhs = sum(mul(y, g)).item();
    const double via_x = sum(mul(x, conv2d_input_grad(g, w, x.shape(), geom))).item();
    const double via_w = sum(mul(w, conv2d_weight_grad(x, g, w.shape(), geom))).item();
    EXPECT_NEAR(lhs, via_x, 1e-10);
    EXPECT_NEAR(lhs, via_w, 1e-10);
}

TEST(Autograd, PoolingGradients) {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    auto f = [](const std::vector<Tensor>& in) {
        return add(weighted_sum(upsample_nearest2x(in[0]), 1),
                   add(weighted_sum(sum_pool2x(in[0]), 2), weighted_sum(global_avg_pool(in[0]), 3)));
    };
    EXPECT_LT(gradcheck(f, {x}), kTol);
}

TEST(Autograd, DoubleBackwardElementwise) {
    std::mt19937_64 rng(8);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng, 0.5, 1.5);
    auto f = [](const std::vector<Tensor>& in) {
        Tensor t = mul(tanh(in[0]), exp(in[1]));
        t = add(t, softmax(mul(in[0], in[1])));
        t = add(t, div(leaky_relu(in[0], 0.2), in[1]));
        return weighted_sum(mul(t, t), 3);
    };
    Tensor v = random_tensor(a.shape(), rng).detach();
    EXPECT_LT(gradcheck(grad_projection(f, 0, v), {a, b}, 1e-5), 1e-5);
}

TEST(Autograd, DoubleBackwardThroughConvCritic) {
    // Mirrors the gradient-penalty pattern: norm of d critic / d input,
    // differentiated w.r.t. the weights.
    std::mt19937_64 rng(9);
    Tensor x = random_tensor({2, 2, 6, 6}, rng), w1 = random_tensor({3, 2, 4, 4}, rng),
           w2 = random_tensor({9 * 3, 1}, rng);
    auto f = [](const std::vector<Tensor>& in) {
        Tensor h = leaky_relu(conv2d(in[0], in[1], {2, 1}), 0.2);
        return sum(matmul(reshape(h, {2, -1}), in[2]));
    };
    auto penalty = [f](const std::vector<Tensor>& in) {
        GradModeGuard on(true);
        Tensor g = grad(f(in), {in[0]}, Tensor(), true)[0];
        Tensor flat = reshape(g, {2, -1});
        Tensor norm = sqrt(add_scalar(sum_to(mul(flat, flat), {2, 1}), 1e-12));
        Tensor gap = add_scalar(norm, -1.0);
        return mean(mul(gap, gap));
    };
    EXPECT_LT(gradcheck(penalty, {x, w1, w2}, 1e-5), 1e-5);
}

TEST(Autograd, DoubleBackwardShapeOps) {
    std::mt19937_64 rng(10);
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    auto f = [](const std::vector<Tensor>& in) {
        Tensor u = upsample_nearest2x(tanh(in[0]));
        Tensor p = sum_pool2x(mul(u, u));
        Tensor c = concat({reshape(slice(p, 1, 0, 1), {1, -1}), exp(global_avg_pool(in[0]))}, 1);
        Tensor b = broadcast_to(sum_to(mul(in[0], in[0]), {1, 2, 1, 1}), {1, 2, 4, 4});
        return add(weighted_sum(mul(c, c), 4), sum(mul(b, in[0])));
    };
    Tensor v = random_tensor(x.shape(), rng).detach();
    EXPECT_LT(gradcheck(grad_projection(f, 0, v), {x}, 1e-5), 1e-5);
}
