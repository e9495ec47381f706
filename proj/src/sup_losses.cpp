#include "sparse/sup_losses.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "sparse/ops.hpp"

namespace sparse::sup {

namespace {

void require_rows(const Tensor& probs, const Tensor& labels) {
    if (probs.dim() != 2 || labels.shape() != probs.shape()) {
        throw std::invalid_argument("expected matching [B,K] probabilities and labels, got " +
                                    ag::shape_str(probs.shape()) + " and " + ag::shape_str(labels.shape()));
    }
    if (probs.size(0) == 0) throw std::invalid_argument("empty batch");
}

void require_models(std::span<const Tensor> t) {
    if (t.size() != kModels) throw std::invalid_argument("expected one tensor per model (3)");
}

// Mean over the batch of a per-sample [B,1] or [B,K] quantity summed over K.
Tensor batch_mean_of_row_sums(const Tensor& per_entry) {
    return ag::scale(ag::sum(per_entry), 1.0 / static_cast<double>(per_entry.size(0)));
}

}  // namespace

Tensor safe_log(const Tensor& p) { return ag::log(ag::clamp_min(p, kLogEpsilon)); }

Prototypes class_prototypes(const Tensor& probs, const Tensor& labels) {
    require_rows(probs, labels);
    const std::int64_t b = probs.size(0), k = probs.size(1);
    std::vector<double> inv_count(static_cast<std::size_t>(k), 0.0);
    Prototypes out;
    out.present.assign(static_cast<std::size_t>(k), false);
    for (std::int64_t c = 0; c < k; ++c) {
        double n = 0.0;
        for (std::int64_t i = 0; i < b; ++i) n += labels.at(i * k + c);
        if (n > 0.0) {
            inv_count[static_cast<std::size_t>(c)] = 1.0 / n;
            out.present[static_cast<std::size_t>(c)] = true;
        }
    }
    Tensor sums = ag::matmul(ag::transpose(labels), probs);  // [K,K]
    out.values = ag::mul(sums, Tensor::from({k, 1}, std::move(inv_count)));
    return out;
}

Tensor prototype_loss(const Tensor& probs, const Tensor& labels, const Prototypes& prototypes, bool literal_sign) {
    require_rows(probs, labels);
    const std::int64_t b = probs.size(0), k = probs.size(1);
    // [B,1,K] - [1,K,K] -> squared distances [B,K]
    Tensor diff = ag::sub(ag::reshape(probs, {b, 1, k}), ag::reshape(prototypes.values, {1, k, k}));
    Tensor dist = ag::reshape(ag::sum_to(ag::mul(diff, diff), {b, k, 1}), {b, k});
    Tensor scores = literal_sign ? dist : ag::neg(dist);
    std::vector<double> mask(static_cast<std::size_t>(k));
    for (std::int64_t c = 0; c < k; ++c) mask[static_cast<std::size_t>(c)] = prototypes.present[static_cast<std::size_t>(c)] ? 0.0 : -1e9;
    scores = ag::add(scores, Tensor::from({1, k}, std::move(mask)));
    return ag::neg(batch_mean_of_row_sums(ag::mul(labels, ag::log_softmax(scores))));
}

Tensor cross_entropy(const Tensor& probs, const Tensor& targets) {
    require_rows(probs, targets);
    return ag::neg(batch_mean_of_row_sums(ag::mul(targets, safe_log(probs))));
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
    require_rows(p, q);
    return batch_mean_of_row_sums(ag::mul(p, ag::sub(safe_log(p), safe_log(q))));
}

Tensor mutual_learning_loss(std::span<const Tensor> probs, const Tensor& labels, double kl_weight) {
    require_models(probs);
    Tensor ce = cross_entropy(probs[0], labels);
    for (std::size_t m = 1; m < kModels; ++m) ce = ag::add(ce, cross_entropy(probs[m], labels));
    Tensor kl;
    for (std::size_t m = 0; m < kModels; ++m) {
        Tensor others = ag::scale(ag::add(probs[(m + 1) % kModels], probs[(m + 2) % kModels]), 0.5);
        Tensor term = kl_divergence(probs[m], others);
        kl = kl.defined() ? ag::add(kl, term) : term;
    }
    return ag::add(ce, ag::scale(kl, kl_weight));
}

Tensor entropy(const Tensor& probs) {
    if (probs.dim() != 2 || probs.size(0) == 0) throw std::invalid_argument("entropy expects [B,K] with B > 0");
    return ag::neg(batch_mean_of_row_sums(ag::mul(probs, safe_log(probs))));
}

Tensor entropy_loss(std::span<const Tensor> probs) {
    require_models(probs);
    Tensor total = entropy(probs[0]);
    for (std::size_t m = 1; m < kModels; ++m) total = ag::add(total, entropy(probs[m]));
    return total;
}

double sample_mix_lambda(double mix_alpha, std::mt19937_64& rng) {
    if (mix_alpha <= 0.0) throw std::invalid_argument("mixup alpha must be positive");
    std::gamma_distribution<double> gamma(mix_alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    if (a + b == 0.0) return 0.5;
    return a / (a + b);
}

std::pair<Tensor, Tensor> mixup_pair(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
                                     double lambda) {
    auto blend = [lambda](const Tensor& a, const Tensor& b) {
        return ag::add(ag::scale(a, lambda), ag::scale(b, 1.0 - lambda));
    };
    return {blend(x_i, x_j), blend(y_i, y_j)};
}

MixedBatch mixup_batch(const Tensor& images, const Tensor& labels, double mix_alpha, std::mt19937_64& rng) {
    const std::int64_t b = images.size(0);
    if (labels.size(0) != b) throw std::invalid_argument("mixup: images and labels differ in batch size");
    MixedBatch out;
    out.partner.resize(static_cast<std::size_t>(b));
    std::iota(out.partner.begin(), out.partner.end(), std::size_t{0});
    std::shuffle(out.partner.begin(), out.partner.end(), rng);
    for (std::int64_t i = 0; i < b; ++i) out.lambdas.push_back(sample_mix_lambda(mix_alpha, rng));

    auto mix_rows = [&](const Tensor& t) {
        const std::int64_t row = t.numel() / b;
        std::vector<double> v(static_cast<std::size_t>(t.numel()));
        for (std::int64_t i = 0; i < b; ++i) {
            const double lam = out.lambdas[static_cast<std::size_t>(i)];
            const auto j = static_cast<std::int64_t>(out.partner[static_cast<std::size_t>(i)]);
            for (std::int64_t e = 0; e < row; ++e) {
                v[static_cast<std::size_t>(i * row + e)] = lam * t.at(i * row + e) + (1.0 - lam) * t.at(j * row + e);
            }
        }
        return Tensor::from(t.shape(), std::move(v));
    };
    out.images = mix_rows(images);
    out.targets = mix_rows(labels);
    return out;
}

Tensor mixup_loss(std::span<const Tensor> probs, const Tensor& soft_targets) {
    require_models(probs);
    Tensor total = cross_entropy(probs[0], soft_targets);
    for (std::size_t m = 1; m < kModels; ++m) total = ag::add(total, cross_entropy(probs[m], soft_targets));
    return total;
}

SupervisedTerms supervised_total(std::span<const Tensor> clean_logits, std::span<const Tensor> mixed_logits,
                                 const Tensor& labels, const Tensor& mixed_targets, const LossWeights& w) {
    require_models(clean_logits);
    require_models(mixed_logits);
    std::array<Tensor, kModels> probs, mixed_probs;
    SupervisedTerms terms;
    for (std::size_t m = 0; m < kModels; ++m) {
        probs[m] = ag::softmax(clean_logits[m]);
        mixed_probs[m] = ag::softmax(mixed_logits[m]);
        Tensor tempered = ag::softmax(ag::scale(clean_logits[m], 1.0 / w.temperature));
        Tensor proto = prototype_loss(tempered, labels, class_prototypes(tempered, labels), w.literal_prototype_sign);
        terms.prototype = terms.prototype.defined() ? ag::add(terms.prototype, proto) : proto;
    }
    terms.mutual = mutual_learning_loss(probs, labels, w.kl);
    terms.entropy = entropy_loss(probs);
    terms.mixup = mixup_loss(mixed_probs, mixed_targets);
    terms.total = ag::add(ag::add(terms.prototype, ag::scale(terms.mutual, w.mutual)),
                          ag::add(ag::scale(terms.entropy, w.entropy), ag::scale(terms.mixup, w.mixup)));
    return terms;
}

}  // namespace sparse::sup
