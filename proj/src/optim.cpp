#include "sparse/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace sparse::optim {

AdamW::AdamW(std::vector<ag::Tensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
        state_.first_moment.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        state_.second_moment.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        state_.steps.push_back(0);
    }
}

void AdamW::step(const std::vector<ag::Tensor>& grads) {
    if (grads.size() != params_.size()) throw std::invalid_argument("AdamW::step: gradient count mismatch");
    const double lr = options_.learning_rate;
    const double decay = 1.0 - lr * options_.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!grads[i].defined()) continue;
        const auto t = static_cast<double>(++state_.steps[i]);
        const double bias1 = 1.0 - std::pow(options_.beta1, t);
        const double bias2 = 1.0 - std::pow(options_.beta2, t);
        auto p = params_[i].mutable_data();
        const auto g = grads[i].data();
        if (g.size() != p.size()) throw std::invalid_argument("AdamW::step: gradient shape mismatch");
        auto& m = state_.first_moment[i];
        auto& v = state_.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
            p[j] *= decay;
            p[j] -= lr * (m[j] / bias1) / (std::sqrt(v[j] / bias2) + options_.eps);
        }
    }
}

void AdamW::load_state(State state) {
    if (state.first_moment.size() != params_.size() || state.second_moment.size() != params_.size() ||
        state.steps.size() != params_.size()) {
        throw std::runtime_error("AdamW state does not match parameter list");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto n = static_cast<std::size_t>(params_[i].numel());
        if (state.first_moment[i].size() != n || state.second_moment[i].size() != n) {
            throw std::runtime_error("AdamW state buffer size mismatch");
        }
    }
    state_ = std::move(state);
}

}  // namespace sparse::optim
