#pragma once

// Class-conditioned image translation under a Wasserstein critic with
// gradient penalty and cycle reconstruction, plus classifier training on
// translated images labelled by their target class.

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sparse/networks.hpp"
#include "sparse/optim.hpp"

namespace sparse::translation {

using ag::Tensor;

struct GanWeights {
    double reconstruction = 10.0;    // lambda_rec
    double classification = 1.0;     // lambda_cls
    double gradient_penalty = 10.0;  // lambda_gp
    int critic_steps = 1;            // critic updates per generator update
};

std::vector<int> sample_target_classes(std::size_t count, std::int64_t num_classes, std::mt19937_64& rng);

struct TranslationBatch {
    Tensor real;    // [B,C,H,W] selected unlabeled images
    Tensor source;  // [B,K] one-hot pseudo-labels
    Tensor target;  // [B,K] one-hot target classes

    bool empty() const { return !real.defined() || real.size(0) == 0; }
};

struct GeneratorTerms {
    Tensor adversarial;       // -E[D(G(x, z_t))]
    Tensor critic_class;      // CE of the critic's class head on G(x, z_t) vs z_t
    Tensor generator_class;   // CE of the bottleneck head on G(x, z_t) vs z_t
    Tensor reconstruction;    // mean |G(G(x, z_t), z_s) - x|
    Tensor total;
};

struct CriticTerms {
    Tensor critic;            // -E[D(x)] + E[D(G(x, z_t))]
    Tensor classification;    // CE of the class head on real images vs pseudo-labels
    Tensor gradient_penalty;
    Tensor total;
};

using RealismFn = std::function<Tensor(const Tensor&)>;

// E[(||grad_x D(x_hat)||_2 - 1)^2] on x_hat = eps * real + (1 - eps) * fake,
// with the graph kept so the result can be differentiated w.r.t. critic
// parameters. `eps` holds one interpolation weight per sample.
Tensor gradient_penalty(const RealismFn& realism, const Tensor& real, const Tensor& fake, std::span<const double> eps);
Tensor gradient_penalty(const RealismFn& realism, const Tensor& real, const Tensor& fake, std::mt19937_64& rng);

// nullopt for an empty batch.
std::optional<GeneratorTerms> generator_loss(const networks::ImageTranslator& generator,
                                             const networks::Critic& critic, const TranslationBatch& batch,
                                             const GanWeights& weights);
// Generated images are constants here: no gradient reaches the generator.
std::optional<CriticTerms> discriminator_loss(const networks::ImageTranslator& generator,
                                              const networks::Critic& critic, const TranslationBatch& batch,
                                              const GanWeights& weights, std::mt19937_64& rng);

using ClassifyFn = std::function<Tensor(const Tensor&)>;

// One optimizer step on the classifier against CE(C(G(x, z)), z) with the
// generator frozen. Returns the loss before the step.
double synthetic_classifier_step(const networks::ImageTranslator& generator, const ClassifyFn& classify,
                                 optim::AdamW& classifier_optimizer, const Tensor& images, const Tensor& targets);

}  // namespace sparse::translation
