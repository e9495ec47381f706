#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sparse/autograd.hpp"
#include "sparse/ops.hpp"

namespace sparse::nn {

using ag::Tensor;

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

// Flat parameter name -> values, used for checkpoints and checksums.
using StateDict = std::map<std::string, std::vector<double>>;

class Module {
public:
    Module() = default;
    virtual ~Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    std::vector<NamedParameter> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::int64_t parameter_count() const;

    StateDict state_dict() const;
    // Throws std::runtime_error on missing keys or size mismatch.
    void load_state_dict(const StateDict& state);

protected:
    Tensor& register_parameter(std::string name, Tensor value);
    void register_module(std::string name, Module& child);

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Module*>> children_;
};

class Conv2d : public Module {
public:
    Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel, std::int64_t stride,
           std::int64_t padding, bool bias, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;

private:
    Tensor weight_;
    Tensor bias_;
    ag::ConvGeometry geom_;
};

class Linear : public Module {
public:
    Linear(std::int64_t in_features, std::int64_t out_features, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;  // [B, in] -> [B, out]

    Tensor& weight() { return weight_; }
    Tensor& bias() { return bias_; }

private:
    Tensor weight_;  // [in, out]
    Tensor bias_;    // [out]
};

// Per-sample, per-channel normalisation with a learned affine transform.
class InstanceNorm2d : public Module {
public:
    explicit InstanceNorm2d(std::int64_t channels, double eps = 1e-5);
    Tensor forward(const Tensor& x) const;

private:
    Tensor gamma_;
    Tensor beta_;
    double eps_;
};

// Hash of all parameter bits; equal iff parameters are bit-identical
// (up to hash collisions).
std::uint64_t parameter_checksum(const Module& m);

}  // namespace sparse::nn
