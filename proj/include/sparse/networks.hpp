#pragma once

// Generator (conditional U-Net with a bottleneck class head), Wasserstein
// critic with an auxiliary class head, and a standalone classifier.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sparse/nn.hpp"

namespace sparse::networks {

using ag::Tensor;

// Everything needed to rebuild a network without outside context.
struct ArchSpec {
    std::int64_t channels = 1;
    std::int64_t resolution = 32;
    std::int64_t num_classes = 2;
    std::int64_t depth = 3;
    std::int64_t width = 16;

    bool operator==(const ArchSpec&) const = default;
    std::string to_string() const;
    static ArchSpec parse(const std::string& text);
};

// Batch of one-hot rows [B, K]; throws std::invalid_argument otherwise.
void require_one_hot(const Tensor& z, std::int64_t num_classes);
Tensor one_hot(const std::vector<int>& classes, std::int64_t num_classes);

class ImageTranslator {
public:
    virtual ~ImageTranslator() = default;
    // x: [B,C,H,W] in [-1,1], z: one-hot [B,K] -> image of the same shape.
    virtual Tensor translate(const Tensor& x, const Tensor& z) const = 0;
    // Bottleneck class head: [B,C,H,W] -> [B,K] logits.
    virtual Tensor encoder_logits(const Tensor& x) const = 0;
};

struct CriticOutput {
    Tensor realism;  // [B], unbounded
    Tensor logits;   // [B,K]
};

class Critic {
public:
    virtual ~Critic() = default;
    virtual CriticOutput discriminate(const Tensor& x) const = 0;
};

class Generator final : public nn::Module, public ImageTranslator {
public:
    Generator(const ArchSpec& arch, std::mt19937_64& rng);

    Tensor translate(const Tensor& x, const Tensor& z) const override;
    Tensor encoder_logits(const Tensor& x) const override;

    const ArchSpec& arch() const { return arch_; }
    // Parameters of the encoder path and bottleneck head (trained by the
    // supervised phase).
    std::vector<Tensor> encoder_parameters() const;

private:
    // Encoder activations from input to bottleneck.
    std::vector<Tensor> encode(const Tensor& x, const Tensor& z) const;

    ArchSpec arch_;
    std::vector<std::unique_ptr<nn::Conv2d>> enc_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm2d>> enc_norm_;
    std::vector<std::unique_ptr<nn::Conv2d>> dec_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm2d>> dec_norm_;
    std::unique_ptr<nn::Conv2d> out_conv_;
    std::unique_ptr<nn::Linear> head_;
    std::vector<std::int64_t> enc_channels_;
};

class Discriminator final : public nn::Module, public Critic {
public:
    Discriminator(const ArchSpec& arch, std::mt19937_64& rng);

    CriticOutput discriminate(const Tensor& x) const override;
    const ArchSpec& arch() const { return arch_; }
    nn::Linear& realism_head() { return *realism_; }

private:
    Tensor trunk(const Tensor& x) const;

    ArchSpec arch_;
    std::vector<std::unique_ptr<nn::Conv2d>> convs_;
    std::unique_ptr<nn::Linear> realism_;
    std::unique_ptr<nn::Linear> classes_;
};

class Classifier final : public nn::Module {
public:
    Classifier(const ArchSpec& arch, std::mt19937_64& rng);

    Tensor classify(const Tensor& x) const;  // [B,K] logits
    const ArchSpec& arch() const { return arch_; }

private:
    ArchSpec arch_;
    std::unique_ptr<nn::Conv2d> stem_;
    std::vector<std::unique_ptr<nn::Conv2d>> res_a_;
    std::vector<std::unique_ptr<nn::Conv2d>> res_b_;
    std::vector<std::unique_ptr<nn::Conv2d>> down_;
    std::unique_ptr<nn::Linear> head_;
};

struct NetworkTriplet {
    std::unique_ptr<Generator> generator;
    std::unique_ptr<Discriminator> discriminator;
    std::unique_ptr<Classifier> classifier;

    static NetworkTriplet create(const ArchSpec& arch, std::uint64_t seed);
};

}  // namespace sparse::networks
