#include "sparse/translation.hpp"

#include <stdexcept>

#include "sparse/ops.hpp"
#include "sparse/sup_losses.hpp"

namespace sparse::translation {

namespace {

// Tiny constant inside the square root keeps the norm differentiable at 0.
constexpr double kNormEpsilon = 1e-12;

Tensor class_ce(const Tensor& logits, const Tensor& onehot) { return sup::cross_entropy(ag::softmax(logits), onehot); }

}  // namespace

std::vector<int> sample_target_classes(std::size_t count, std::int64_t num_classes, std::mt19937_64& rng) {
    if (num_classes <= 0) throw std::invalid_argument("need at least one class");
    std::uniform_int_distribution<int> pick(0, static_cast<int>(num_classes) - 1);
    std::vector<int> out(count);
    for (int& c : out) c = pick(rng);
    return out;
}

Tensor gradient_penalty(const RealismFn& realism, const Tensor& real, const Tensor& fake, std::span<const double> eps) {
    if (real.shape() != fake.shape()) throw std::invalid_argument("gradient_penalty: real/fake shape mismatch");
    const std::int64_t b = real.size(0);
    if (static_cast<std::int64_t>(eps.size()) != b) throw std::invalid_argument("gradient_penalty: one eps per sample");
    const std::int64_t per = real.numel() / b;
    std::vector<double> mixed(static_cast<std::size_t>(real.numel()));
    for (std::int64_t i = 0; i < b; ++i) {
        const double e = eps[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < per; ++j) {
            const std::int64_t idx = i * per + j;
            mixed[static_cast<std::size_t>(idx)] = e * real.at(idx) + (1.0 - e) * fake.at(idx);
        }
    }
    Tensor interp = Tensor::from(real.shape(), std::move(mixed));
    interp.set_requires_grad(true);
    ag::GradModeGuard record(true);
    Tensor score = realism(interp);
    Tensor g = ag::grad(ag::sum(score), {interp}, Tensor(), /*create_graph=*/true)[0];
    Tensor flat = ag::reshape(g, {b, per});
    Tensor norm = ag::sqrt(ag::add_scalar(ag::sum_to(ag::mul(flat, flat), {b, 1}), kNormEpsilon));
    Tensor gap = ag::add_scalar(norm, -1.0);
    return ag::mean(ag::mul(gap, gap));
}

Tensor gradient_penalty(const RealismFn& realism, const Tensor& real, const Tensor& fake, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> eps(static_cast<std::size_t>(real.size(0)));
    for (double& e : eps) e = unit(rng);
    return gradient_penalty(realism, real, fake, eps);
}

std::optional<GeneratorTerms> generator_loss(const networks::ImageTranslator& generator,
                                             const networks::Critic& critic, const TranslationBatch& batch,
                                             const GanWeights& weights) {
    if (batch.empty()) return std::nullopt;
    GeneratorTerms t;
    Tensor fake = generator.translate(batch.real, batch.target);
    const auto judged = critic.discriminate(fake);
    t.adversarial = ag::neg(ag::mean(judged.realism));
    t.critic_class = class_ce(judged.logits, batch.target);
    t.generator_class = class_ce(generator.encoder_logits(fake), batch.target);
    Tensor cycled = generator.translate(fake, batch.source);
    t.reconstruction = ag::mean(ag::abs(ag::sub(cycled, batch.real)));
    t.total = ag::add(ag::add(t.adversarial, t.critic_class),
                      ag::add(t.generator_class, ag::scale(t.reconstruction, weights.reconstruction)));
    return t;
}

std::optional<CriticTerms> discriminator_loss(const networks::ImageTranslator& generator,
                                              const networks::Critic& critic, const TranslationBatch& batch,
                                              const GanWeights& weights, std::mt19937_64& rng) {
    if (batch.empty()) return std::nullopt;
    Tensor fake;
    {
        ag::NoGradGuard frozen;
        fake = generator.translate(batch.real, batch.target).detach();
    }
    CriticTerms t;
    const auto on_real = critic.discriminate(batch.real);
    const auto on_fake = critic.discriminate(fake);
    t.critic = ag::add(ag::neg(ag::mean(on_real.realism)), ag::mean(on_fake.realism));
    t.classification = class_ce(on_real.logits, batch.source);
    t.gradient_penalty = gradient_penalty(
        [&critic](const Tensor& x) { return critic.discriminate(x).realism; }, batch.real, fake, rng);
    t.total = ag::add(t.critic, ag::add(ag::scale(t.classification, weights.classification),
                                        ag::scale(t.gradient_penalty, weights.gradient_penalty)));
    return t;
}

double synthetic_classifier_step(const networks::ImageTranslator& generator, const ClassifyFn& classify,
                                 optim::AdamW& classifier_optimizer, const Tensor& images, const Tensor& targets) {
    Tensor synthetic;
    {
        ag::NoGradGuard frozen;
        synthetic = generator.translate(images, targets).detach();
    }
    Tensor loss = class_ce(classify(synthetic), targets);
    classifier_optimizer.step(ag::grad(loss, classifier_optimizer.params()));
    return loss.item();
}

}  // namespace sparse::translation
