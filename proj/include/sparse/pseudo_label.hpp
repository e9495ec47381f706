#pragma once

// Ensemble pseudo-labelling of unlabeled samples: temperature softmax of the
// critic and classifier logits, entropy-confidence weighted voting, temporal
// blending with a per-sample EMA, and a per-batch percentile threshold.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace sparse::pseudo {

using Prob = std::vector<double>;

struct EnsembleParams {
    double alpha = 0.6;   // weight of the current vote against history
    double beta = 0.99;   // EMA momentum
    double rho = 0.75;    // percentile of the threshold
    double temperature = 2.0;

    void validate() const;
};

// Per-sample EMA store keyed by stable sample id.
class EnsembleState {
public:
    explicit EnsembleState(EnsembleParams params = {});

    const EnsembleParams& params() const { return params_; }
    std::int64_t epoch() const { return epoch_; }
    void set_epoch(std::int64_t epoch) { epoch_ = epoch; }

    // nullptr when the sample has no history yet.
    const Prob* history(std::int64_t sample_id) const;
    // Throws std::invalid_argument unless `p` is a probability vector.
    void store(std::int64_t sample_id, Prob p);
    std::size_t size() const { return ema_.size(); }
    const std::map<std::int64_t, Prob>& entries() const { return ema_; }

private:
    EnsembleParams params_;
    std::int64_t epoch_ = 0;
    std::map<std::int64_t, Prob> ema_;
};

bool is_distribution(std::span<const double> p, double tol = 1e-5);
// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

Prob temperature_softmax(std::span<const double> logits, double temperature);
// 1 - H(p) / log K, in [0,1]; K = 1 gives 1.
double entropy_confidence(std::span<const double> p);
// (c_d p_d + c_c p_c) / (c_d + c_c); the plain mean when both weights are 0.
Prob confidence_weighted_vote(std::span<const double> p_d, double c_d, std::span<const double> p_c, double c_c);
// alpha * p_weighted + (1 - alpha) * ema; p_weighted itself without history.
Prob temporal_blend(std::span<const double> p_weighted, const EnsembleState& state, std::int64_t sample_id);
// ema <- beta * ema + (1 - beta) * p_ens; stores p_ens on first sight.
void ema_update(EnsembleState& state, std::int64_t sample_id, std::span<const double> p_ens);
// rho-quantile with linear interpolation between order statistics.
double adaptive_threshold(std::span<const double> max_probs, double rho);

struct PseudoBatch {
    std::vector<std::int64_t> selected_ids;
    std::vector<std::size_t> selected_positions;  // indices into the scored batch
    std::vector<int> labels;                      // argmax class of each selected sample
    std::vector<Prob> source_probs;               // p_ens of each selected sample
    double threshold = 0.0;
};

// Keeps samples with max_k p_ens > tau (strict).
PseudoBatch select_and_label(std::span<const std::int64_t> ids, std::span<const Prob> p_ens, double tau);

// Full batch pipeline. `critic_logits` and `classifier_logits` are row-major
// [B,K]. Updates the EMA store for every sample in the batch.
PseudoBatch pseudo_label_batch(std::span<const std::int64_t> ids, std::span<const double> critic_logits,
                               std::span<const double> classifier_logits, std::int64_t num_classes,
                               EnsembleState& state);

}  // namespace sparse::pseudo
