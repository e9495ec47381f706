#pragma once

// Macro per-class accuracy and the two inference configurations: classifier
// only, and late fusion of critic and classifier posteriors.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sparse/config.hpp"
#include "sparse/data.hpp"
#include "sparse/networks.hpp"

namespace sparse::eval {

struct EvalResult {
    std::vector<double> per_class;  // recall of each class; NaN for classes absent from the truths
    double macro = 0.0;             // mean over present classes
    InferenceMode mode = InferenceMode::late_fusion;
    std::string dataset;
    int shots = 0;
    std::uint64_t seed = 0;
};

// Throws std::invalid_argument on empty or mismatched input.
EvalResult per_class_accuracy(std::span<const int> predictions, std::span<const int> truths, int num_classes);

struct Fused {
    int label = 0;
    std::vector<double> posterior;
};
// (softmax(d) + softmax(c)) / 2, argmax with lowest-index ties.
Fused late_fusion_predict(std::span<const double> d_logits, std::span<const double> c_logits);

using ClassifyFn = std::function<ag::Tensor(const ag::Tensor&)>;

// Predictions over a whole split, in batches, with no augmentation and no
// graph recording.
std::vector<int> predict(const networks::Critic& critic, const ClassifyFn& classify, const data::ImageSet& images,
                         std::int64_t resolution, InferenceMode mode, int batch = 64);

EvalResult evaluate(const networks::Critic& critic, const ClassifyFn& classify, const data::LabeledImages& split,
                    int num_classes, std::int64_t resolution, InferenceMode mode, int batch = 64);
EvalResult evaluate(const networks::NetworkTriplet& nets, const data::LabeledImages& split, int num_classes,
                    InferenceMode mode);

}  // namespace sparse::eval
