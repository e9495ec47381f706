#include "sparse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sparse/pseudo_label.hpp"

namespace sparse::eval {

EvalResult per_class_accuracy(std::span<const int> predictions, std::span<const int> truths, int num_classes) {
    if (predictions.empty() || predictions.size() != truths.size()) {
        throw std::invalid_argument("per_class_accuracy needs equal, non-empty prediction and truth lists");
    }
    if (num_classes <= 0) throw std::invalid_argument("num_classes must be positive");
    std::vector<std::int64_t> hits(static_cast<std::size_t>(num_classes), 0), counts(hits);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const int t = truths[i];
        if (t < 0 || t >= num_classes) throw std::invalid_argument("truth label outside [0, K)");
        ++counts[static_cast<std::size_t>(t)];
        hits[static_cast<std::size_t>(t)] += predictions[i] == t;
    }
    EvalResult r;
    r.per_class.assign(static_cast<std::size_t>(num_classes), std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int present = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) continue;
        r.per_class[k] = static_cast<double>(hits[k]) / static_cast<double>(counts[k]);
        sum += r.per_class[k];
        ++present;
    }
    r.macro = sum / present;
    return r;
}

Fused late_fusion_predict(std::span<const double> d_logits, std::span<const double> c_logits) {
    if (d_logits.size() != c_logits.size()) throw std::invalid_argument("late fusion: logit lengths differ");
    const auto pd = pseudo::temperature_softmax(d_logits, 1.0);
    const auto pc = pseudo::temperature_softmax(c_logits, 1.0);
    Fused f;
    f.posterior.resize(pd.size());
    for (std::size_t k = 0; k < pd.size(); ++k) f.posterior[k] = 0.5 * (pd[k] + pc[k]);
    f.label = pseudo::argmax(f.posterior);
    return f;
}

std::vector<int> predict(const networks::Critic& critic, const ClassifyFn& classify, const data::ImageSet& images,
                         std::int64_t resolution, InferenceMode mode, int batch) {
    ag::NoGradGuard frozen;
    std::vector<int> out;
    const std::int64_t n = images.count();
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t start = 0; start < n; start += batch) {
        const std::int64_t end = std::min(n, start + batch);
        std::vector<data::Image> chunk;
        for (std::int64_t i = start; i < end; ++i) chunk.push_back(data::prepare_image(images, i, resolution));
        const ag::Tensor x = data::stack(chunk);
        const ag::Tensor c = classify(x);
        const std::int64_t k = c.size(1);
        if (mode == InferenceMode::classifier_only) {
            for (std::int64_t i = 0; i < c.size(0); ++i) out.push_back(pseudo::argmax(c.data().subspan(i * k, k)));
        } else {
            const ag::Tensor d = critic.discriminate(x).logits;
            for (std::int64_t i = 0; i < c.size(0); ++i) {
                out.push_back(late_fusion_predict(d.data().subspan(i * k, k), c.data().subspan(i * k, k)).label);
            }
        }
    }
    return out;
}

EvalResult evaluate(const networks::Critic& critic, const ClassifyFn& classify, const data::LabeledImages& split,
                    int num_classes, std::int64_t resolution, InferenceMode mode, int batch) {
    const auto preds = predict(critic, classify, split.images, resolution, mode, batch);
    EvalResult r = per_class_accuracy(preds, split.labels, num_classes);
    r.mode = mode;
    return r;
}

EvalResult evaluate(const networks::NetworkTriplet& nets, const data::LabeledImages& split, int num_classes,
                    InferenceMode mode) {
    const auto& c = *nets.classifier;
    return evaluate(*nets.discriminator, [&c](const ag::Tensor& x) { return c.classify(x); }, split, num_classes,
                    c.arch().resolution, mode);
}

}  // namespace sparse::eval
