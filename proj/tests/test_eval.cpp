#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sparse/eval.hpp"
#include "sparse/nn.hpp"

using namespace sparse;

namespace {

data::LabeledImages random_split(std::int64_t n, std::int64_t size, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, 255);
    data::LabeledImages s;
    s.images.height = s.images.width = size;
    s.images.channels = 1;
    for (std::int64_t i = 0; i < n * size * size; ++i) s.images.pixels.push_back(static_cast<std::uint8_t>(px(rng)));
    for (std::int64_t i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % k));
    return s;
}

}  // namespace

TEST(Eval, PerClassExamples) {
    const std::vector<int> truth{0, 0, 1, 1, 1};
    const auto r = eval::per_class_accuracy(std::vector<int>{0, 1, 1, 1, 0}, truth, 2);
    EXPECT_DOUBLE_EQ(r.per_class[0], 0.5);
    EXPECT_NEAR(r.per_class[1], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(r.macro, 0.5833, 1e-4);

    EXPECT_DOUBLE_EQ(eval::per_class_accuracy(truth, truth, 2).macro, 1.0);
    // class 0 right, class 1 wrong, sizes irrelevant
    const std::vector<int> t2{0, 1, 1, 1, 1, 1, 1};
    EXPECT_DOUBLE_EQ(eval::per_class_accuracy(std::vector<int>(7, 0), t2, 2).macro, 0.5);
}

TEST(Eval, AbsentClassExcludedAndEmptyRejected) {
    const auto r = eval::per_class_accuracy(std::vector<int>{0, 1}, std::vector<int>{0, 1}, 3);
    EXPECT_TRUE(std::isnan(r.per_class[2]));
    EXPECT_DOUBLE_EQ(r.macro, 1.0);
    EXPECT_THROW(eval::per_class_accuracy(std::vector<int>{}, std::vector<int>{}, 2), std::invalid_argument);
    EXPECT_THROW(eval::per_class_accuracy(std::vector<int>{0}, std::vector<int>{0, 1}, 2), std::invalid_argument);
}

TEST(Eval, PermutationInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> cls(0, 3);
    std::vector<int> p(200), t(200);
    for (int i = 0; i < 200; ++i) p[i] = cls(rng), t[i] = cls(rng);
    const double base = eval::per_class_accuracy(p, t, 4).macro;
    std::vector<int> idx(200);
    for (int i = 0; i < 200; ++i) idx[i] = i;
    for (int rep = 0; rep < 5; ++rep) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<int> pp, tt;
        for (int i : idx) pp.push_back(p[i]), tt.push_back(t[i]);
        EXPECT_DOUBLE_EQ(eval::per_class_accuracy(pp, tt, 4).macro, base);
    }
}

TEST(Eval, UniformRandomPredictorNearChance) {
    const int k = 4, n = 4000;
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> p(n), t(n);
    for (int i = 0; i < n; ++i) p[i] = cls(rng), t[i] = i % k;
    const double sigma = std::sqrt((1.0 / k) * (1 - 1.0 / k) / n);
    EXPECT_NEAR(eval::per_class_accuracy(p, t, k).macro, 1.0 / k, 3 * sigma);
}

TEST(Eval, LateFusionExamples) {
    // logits whose softmax is the stated posterior
    const auto f = eval::late_fusion_predict(std::vector<double>{std::log(0.6), std::log(0.4)},
                                             std::vector<double>{std::log(0.2), std::log(0.8)});
    EXPECT_NEAR(f.posterior[0], 0.4, 1e-12);
    EXPECT_NEAR(f.posterior[1], 0.6, 1e-12);
    EXPECT_EQ(f.label, 1);

    const auto tie = eval::late_fusion_predict(std::vector<double>{50.0, -50.0}, std::vector<double>{-50.0, 50.0});
    EXPECT_NEAR(tie.posterior[0], 0.5, 1e-12);
    EXPECT_EQ(tie.label, 0);

    const std::vector<double> z{0.3, -1.2, 2.0};
    const auto same = eval::late_fusion_predict(z, z);
    EXPECT_EQ(same.label, 2);
}

TEST(Eval, LateFusionShiftInvariant) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<double> d(5), c(5);
        for (auto& v : d) v = g(rng);
        for (auto& v : c) v = g(rng);
        const int base = eval::late_fusion_predict(d, c).label;
        const double s1 = g(rng) * 10, s2 = g(rng) * 10;
        auto d2 = d, c2 = c;
        for (auto& v : d2) v += s1;
        for (auto& v : c2) v += s2;
        EXPECT_EQ(eval::late_fusion_predict(d2, c2).label, base);
    }
}

TEST(Eval, ClassifierOnlyIgnoresCriticAndEvalIsPure) {
    const networks::ArchSpec arch{1, 8, 3, 2, 4};
    auto nets = networks::NetworkTriplet::create(arch, 9);
    const auto split = random_split(30, 8, 3, 1);
    const auto sums = std::array{nn::parameter_checksum(*nets.generator), nn::parameter_checksum(*nets.discriminator),
                                 nn::parameter_checksum(*nets.classifier)};

    const auto a = eval::evaluate(nets, split, 3, InferenceMode::classifier_only);
    const auto b = eval::evaluate(nets, split, 3, InferenceMode::classifier_only);
    EXPECT_EQ(a.per_class, b.per_class);
    const auto f1 = eval::evaluate(nets, split, 3, InferenceMode::late_fusion);
    const auto f2 = eval::evaluate(nets, split, 3, InferenceMode::late_fusion);
    EXPECT_EQ(f1.per_class, f2.per_class);
    EXPECT_EQ(f1.mode, InferenceMode::late_fusion);

    EXPECT_EQ(nn::parameter_checksum(*nets.generator), sums[0]);
    EXPECT_EQ(nn::parameter_checksum(*nets.discriminator), sums[1]);
    EXPECT_EQ(nn::parameter_checksum(*nets.classifier), sums[2]);

    for (auto& p : nets.discriminator->parameters()) {
        for (auto& v : p.mutable_data()) v += 0.5;
    }
    EXPECT_EQ(eval::evaluate(nets, split, 3, InferenceMode::classifier_only).per_class, a.per_class);
}

TEST(Eval, FusionWithIdenticalModelsMatchesClassifierOnly) {
    const networks::ArchSpec arch{1, 8, 2, 2, 4};
    auto nets = networks::NetworkTriplet::create(arch, 4);
    const auto split = random_split(40, 8, 2, 2);
    const networks::Classifier& c = *nets.classifier;
    struct SameAsClassifier : networks::Critic {
        const networks::Classifier* c;
        networks::CriticOutput discriminate(const ag::Tensor& x) const override {
            networks::CriticOutput out;
            out.logits = c->classify(x);
            out.realism = ag::Tensor::zeros({x.size(0)});
            return out;
        }
    } critic;
    critic.c = &c;
    auto classify = [&c](const ag::Tensor& x) { return c.classify(x); };
    const auto only = eval::evaluate(critic, classify, split, 2, 8, InferenceMode::classifier_only);
    const auto fused = eval::evaluate(critic, classify, split, 2, 8, InferenceMode::late_fusion);
    EXPECT_EQ(only.per_class, fused.per_class);
}
