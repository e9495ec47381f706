#pragma once

// Composite supervised objective shared by the generator's encoder head, the
// critic's class head and the classifier:
//   L = L_prototype + alpha * L_mutual + beta * L_entropy + gamma * L_mixup
// Every term is a batch mean, summed over the three models.

#include <array>
#include <random>
#include <span>
#include <vector>

#include "sparse/autograd.hpp"

namespace sparse::sup {

using ag::Tensor;

inline constexpr double kLogEpsilon = 1e-8;
inline constexpr std::size_t kModels = 3;  // generator encoder, critic, classifier

struct LossWeights {
    double mutual = 0.1;    // alpha
    double entropy = 0.01;  // beta
    double mixup = 0.5;     // gamma
    double kl = 0.5;        // lambda_kl
    double temperature = 2.0;
    double mix_alpha = 0.2;
    // Softmax over +squared distance instead of -squared distance.
    bool literal_prototype_sign = false;
};

// log(max(p, eps))
Tensor safe_log(const Tensor& p);

struct Prototypes {
    Tensor values;               // [K,K]; rows of absent classes are zero
    std::vector<bool> present;  // class has at least one sample in the batch
};

// Row k is the mean probability vector of the batch samples of class k.
Prototypes class_prototypes(const Tensor& probs, const Tensor& labels);

// Mean over samples of -log softmax_k(-||p_i - c_k||^2) at the true class;
// absent classes are left out of the normaliser.
Tensor prototype_loss(const Tensor& probs, const Tensor& labels, const Prototypes& prototypes,
                      bool literal_sign = false);

// Mean over samples of -sum_k y_k log p_k.
Tensor cross_entropy(const Tensor& probs, const Tensor& targets);
// Mean over samples of sum_k p_k (log p_k - log q_k).
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// sum_m CE(p_m, y) + kl_weight * sum_m KL(p_m || mean of the other two)
Tensor mutual_learning_loss(std::span<const Tensor> probs, const Tensor& labels, double kl_weight);

// Mean per-sample Shannon entropy of one model.
Tensor entropy(const Tensor& probs);
// Summed over models.
Tensor entropy_loss(std::span<const Tensor> probs);

struct MixedBatch {
    Tensor images;                // [B,C,H,W]
    Tensor targets;               // [B,K] soft labels
    std::vector<double> lambdas;  // one per pair
    std::vector<std::size_t> partner;
};

double sample_mix_lambda(double mix_alpha, std::mt19937_64& rng);
// Convex combination of two (image, label) pairs with weight `lambda` on the first.
std::pair<Tensor, Tensor> mixup_pair(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j, const Tensor& y_j,
                                     double lambda);
// Pairs each sample with a random permutation of the batch.
MixedBatch mixup_batch(const Tensor& images, const Tensor& labels, double mix_alpha, std::mt19937_64& rng);

// Soft-target cross entropy, summed over models.
Tensor mixup_loss(std::span<const Tensor> probs, const Tensor& soft_targets);

struct SupervisedTerms {
    Tensor prototype;
    Tensor mutual;
    Tensor entropy;
    Tensor mixup;
    Tensor total;
};

// `clean_logits` are the three models on the labelled batch, `mixed_logits`
// on its mixup counterpart.
SupervisedTerms supervised_total(std::span<const Tensor> clean_logits, std::span<const Tensor> mixed_logits,
                                 const Tensor& labels, const Tensor& mixed_targets, const LossWeights& weights);

}  // namespace sparse::sup
