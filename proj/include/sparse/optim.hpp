#pragma once

#include <cstdint>
#include <vector>

#include "sparse/autograd.hpp"

namespace sparse::optim {

struct AdamWOptions {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. Owns its parameter list; step() expects
// gradients in the same order. An undefined gradient leaves that parameter
// (and its moments) untouched, so a subset of a network can be stepped.
class AdamW {
public:
    explicit AdamW(std::vector<ag::Tensor> params, AdamWOptions options = {});

    void step(const std::vector<ag::Tensor>& grads);

    const std::vector<ag::Tensor>& params() const { return params_; }
    const AdamWOptions& options() const { return options_; }

    // Moment buffers and step count, for exact resume.
    struct State {
        std::vector<std::int64_t> steps;  // per parameter
        std::vector<std::vector<double>> first_moment;
        std::vector<std::vector<double>> second_moment;
    };
    const State& state() const { return state_; }
    void load_state(State state);

private:
    std::vector<ag::Tensor> params_;
    AdamWOptions options_;
    State state_;
};

}  // namespace sparse::optim
