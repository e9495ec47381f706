#include "sparse/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sparse::pseudo {

void EnsembleParams::validate() const {
    for (double v : {alpha, beta, rho}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ensemble alpha, beta and rho must lie in [0,1]");
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("ensemble temperature must be positive");
}

EnsembleState::EnsembleState(EnsembleParams params) : params_(params) { params_.validate(); }

const Prob* EnsembleState::history(std::int64_t sample_id) const {
    auto it = ema_.find(sample_id);
    return it == ema_.end() ? nullptr : &it->second;
}

void EnsembleState::store(std::int64_t sample_id, Prob p) {
    if (!is_distribution(p)) throw std::invalid_argument("EMA entry for sample " + std::to_string(sample_id) +
                                                         " is not a probability vector");
    ema_[sample_id] = std::move(p);
}

bool is_distribution(std::span<const double> p, double tol) {
    if (p.empty()) return false;
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= tol;
}

int argmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax of empty vector");
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Prob temperature_softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax of empty vector");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    const double m = *std::max_element(logits.begin(), logits.end()) / temperature;
    Prob p(logits.size());
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        p[k] = std::exp(logits[k] / temperature - m);
        s += p[k];
    }
    for (double& v : p) v /= s;
    return p;
}

double entropy_confidence(std::span<const double> p) {
    if (p.size() <= 1) return 1.0;
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return std::clamp(1.0 - h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

Prob confidence_weighted_vote(std::span<const double> p_d, double c_d, std::span<const double> p_c, double c_c) {
    if (p_d.size() != p_c.size()) throw std::invalid_argument("vote: distributions differ in length");
    if (c_d + c_c <= 0.0) c_d = c_c = 1.0;
    Prob out(p_d.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (c_d * p_d[k] + c_c * p_c[k]) / (c_d + c_c);
    return out;
}

Prob temporal_blend(std::span<const double> p_weighted, const EnsembleState& state, std::int64_t sample_id) {
    const Prob* past = state.history(sample_id);
    if (!past) return Prob(p_weighted.begin(), p_weighted.end());
    if (past->size() != p_weighted.size()) throw std::invalid_argument("blend: history has a different class count");
    const double a = state.params().alpha;
    Prob out(p_weighted.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * p_weighted[k] + (1.0 - a) * (*past)[k];
    return out;
}

void ema_update(EnsembleState& state, std::int64_t sample_id, std::span<const double> p_ens) {
    const Prob* past = state.history(sample_id);
    if (!past) {
        state.store(sample_id, Prob(p_ens.begin(), p_ens.end()));
        return;
    }
    const double b = state.params().beta;
    Prob next(p_ens.size());
    for (std::size_t k = 0; k < next.size(); ++k) next[k] = b * (*past)[k] + (1.0 - b) * p_ens[k];
    state.store(sample_id, std::move(next));
}

double adaptive_threshold(std::span<const double> max_probs, double rho) {
    if (max_probs.empty()) throw std::invalid_argument("threshold of an empty batch");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("percentile must lie in [0,1]");
    std::vector<double> sorted(max_probs.begin(), max_probs.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = rho * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PseudoBatch select_and_label(std::span<const std::int64_t> ids, std::span<const Prob> p_ens, double tau) {
    if (ids.size() != p_ens.size()) throw std::invalid_argument("select: ids and probabilities differ in count");
    PseudoBatch out;
    out.threshold = tau;
    for (std::size_t i = 0; i < p_ens.size(); ++i) {
        const int k = argmax(p_ens[i]);
        if (p_ens[i][static_cast<std::size_t>(k)] > tau) {
            out.selected_ids.push_back(ids[i]);
            out.selected_positions.push_back(i);
            out.labels.push_back(k);
            out.source_probs.push_back(p_ens[i]);
        }
    }
    return out;
}

PseudoBatch pseudo_label_batch(std::span<const std::int64_t> ids, std::span<const double> critic_logits,
                               std::span<const double> classifier_logits, std::int64_t num_classes,
                               EnsembleState& state) {
    const auto k = static_cast<std::size_t>(num_classes);
    if (critic_logits.size() != ids.size() * k || classifier_logits.size() != ids.size() * k) {
        throw std::invalid_argument("pseudo_label_batch: logits do not match [B,K]");
    }
    const double t = state.params().temperature;
    std::vector<Prob> ensemble;
    std::vector<double> confidence;
    ensemble.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Prob p_d = temperature_softmax(critic_logits.subspan(i * k, k), t);
        const Prob p_c = temperature_softmax(classifier_logits.subspan(i * k, k), t);
        const Prob weighted = confidence_weighted_vote(p_d, entropy_confidence(p_d), p_c, entropy_confidence(p_c));
        Prob p_ens = temporal_blend(weighted, state, ids[i]);
        ema_update(state, ids[i], p_ens);
        confidence.push_back(*std::max_element(p_ens.begin(), p_ens.end()));
        ensemble.push_back(std::move(p_ens));
    }
    if (ensemble.empty()) return {};
    const double tau = adaptive_threshold(confidence, state.params().rho);
    return select_and_label(ids, ensemble, tau);
}

}  // namespace sparse::pseudo
