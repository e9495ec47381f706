#include "sparse/nn.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace sparse::nn {

namespace {

Tensor uniform_param(ag::Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(static_cast<std::size_t>(ag::numel_of(shape)));
    for (double& v : values) v = dist(rng);
    Tensor t = Tensor::from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

Tensor constant_param(ag::Shape shape, double value) {
    Tensor t = Tensor::full(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

}  // namespace

std::vector<NamedParameter> Module::named_parameters() const {
    std::vector<NamedParameter> out;
    for (const auto& [name, t] : params_) out.push_back({name, t});
    for (const auto& [prefix, child] : children_) {
        for (auto& p : child->named_parameters()) out.push_back({prefix + "." + p.name, p.tensor});
    }
    return out;
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (auto& p : named_parameters()) out.push_back(p.tensor);
    return out;
}

std::int64_t Module::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : named_parameters()) n += p.tensor.numel();
    return n;
}

StateDict Module::state_dict() const {
    StateDict out;
    for (const auto& p : named_parameters()) out[p.name] = p.tensor.values();
    return out;
}

void Module::load_state_dict(const StateDict& state) {
    for (auto& p : named_parameters()) {
        auto it = state.find(p.name);
        if (it == state.end()) throw std::runtime_error("state dict is missing parameter '" + p.name + "'");
        if (static_cast<std::int64_t>(it->second.size()) != p.tensor.numel()) {
            throw std::runtime_error("parameter '" + p.name + "' has " + std::to_string(it->second.size()) +
                                     " values, expected " + std::to_string(p.tensor.numel()));
        }
        auto dst = p.tensor.mutable_data();
        std::copy(it->second.begin(), it->second.end(), dst.begin());
    }
}

Tensor& Module::register_parameter(std::string name, Tensor value) {
    params_.emplace_back(std::move(name), std::move(value));
    return params_.back().second;
}

void Module::register_module(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

Conv2d::Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel, std::int64_t stride,
               std::int64_t padding, bool bias, std::mt19937_64& rng)
    : geom_{stride, padding} {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
    weight_ = register_parameter("weight", uniform_param({out_channels, in_channels, kernel, kernel}, bound, rng));
    if (bias) bias_ = register_parameter("bias", uniform_param({1, out_channels, 1, 1}, bound, rng));
}

Tensor Conv2d::forward(const Tensor& x) const {
    Tensor y = ag::conv2d(x, weight_, geom_);
    return bias_.defined() ? ag::add(y, bias_) : y;
}

Linear::Linear(std::int64_t in_features, std::int64_t out_features, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    weight_ = register_parameter("weight", uniform_param({in_features, out_features}, bound, rng));
    bias_ = register_parameter("bias", uniform_param({out_features}, bound, rng));
}

Tensor Linear::forward(const Tensor& x) const { return ag::add(ag::matmul(x, weight_), bias_); }

InstanceNorm2d::InstanceNorm2d(std::int64_t channels, double eps) : eps_(eps) {
    gamma_ = register_parameter("gamma", constant_param({1, channels, 1, 1}, 1.0));
    beta_ = register_parameter("beta", constant_param({1, channels, 1, 1}, 0.0));
}

Tensor InstanceNorm2d::forward(const Tensor& x) const {
    const ag::Shape stat{x.size(0), x.size(1), 1, 1};
    const double inv_area = 1.0 / static_cast<double>(x.size(2) * x.size(3));
    Tensor centered = ag::sub(x, ag::scale(ag::sum_to(x, stat), inv_area));
    Tensor var = ag::scale(ag::sum_to(ag::mul(centered, centered), stat), inv_area);
    Tensor normed = ag::mul(centered, ag::pow(ag::add_scalar(var, eps_), -0.5));
    return ag::add(ag::mul(normed, gamma_), beta_);
}

std::uint64_t parameter_checksum(const Module& m) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : m.named_parameters()) {
        for (double v : p.tensor.values()) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xffU;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

}  // namespace sparse::nn
