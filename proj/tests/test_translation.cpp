#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sparse/networks.hpp"
#include "sparse/optim.hpp"
#include "sparse/sup_losses.hpp"
#include "sparse/translation.hpp"

using namespace sparse;
using ag::Tensor;
using networks::ArchSpec;
using networks::NetworkTriplet;
using translation::GanWeights;
using translation::TranslationBatch;

namespace {

Tensor images(std::int64_t b, std::int64_t c, std::int64_t side, std::uint64_t seed, double lo = -1, double hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(b * c * side * side));
    for (double& x : v) x = u(rng);
    return Tensor::from({b, c, side, side}, v);
}

// x -> scale * x, ignoring the condition.
struct ScaleTranslator : networks::ImageTranslator {
    double factor = 1.0;
    std::int64_t k = 4;
    Tensor translate(const Tensor& x, const Tensor&) const override { return ag::scale(x, factor); }
    Tensor encoder_logits(const Tensor& x) const override { return Tensor::zeros({x.size(0), k}); }
};

// Writes the one-hot condition into the image: [B,K,1,1].
struct ConditionTranslator : networks::ImageTranslator {
    Tensor translate(const Tensor& x, const Tensor& z) const override { return ag::reshape(z, x.shape()); }
    Tensor encoder_logits(const Tensor& x) const override { return Tensor::zeros({x.size(0), x.size(1)}); }
};

// Realism = c everywhere (still wired to the input so gradients are defined),
// class logits all zero.
struct ConstantCritic : networks::Critic {
    double c = 0.0;
    std::int64_t k = 4;
    networks::CriticOutput discriminate(const Tensor& x) const override {
        Tensor flat = ag::reshape(x, {x.size(0), -1});
        Tensor zero = ag::scale(ag::sum_to(flat, {x.size(0), 1}), 0.0);
        return {ag::add_scalar(ag::reshape(zero, {x.size(0)}), c),
                ag::add(ag::broadcast_to(zero, {x.size(0), k}), Tensor::zeros({x.size(0), k}))};
    }
};

// Realism = +1 for images with positive mean, -1 otherwise.
struct SignCritic : networks::Critic {
    networks::CriticOutput discriminate(const Tensor& x) const override {
        const std::int64_t b = x.size(0), per = x.numel() / b;
        std::vector<double> r(static_cast<std::size_t>(b));
        for (std::int64_t i = 0; i < b; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < per; ++j) s += x.at(i * per + j);
            r[static_cast<std::size_t>(i)] = s > 0 ? 1.0 : -1.0;
        }
        return {Tensor::from({b}, r), Tensor::zeros({b, 2})};
    }
};

Tensor linear_realism(const Tensor& x, const Tensor& w) {
    return ag::reshape(ag::matmul(ag::reshape(x, {x.size(0), -1}), w), {x.size(0)});
}

}  // namespace

TEST(Translation, TargetSampling) {
    std::mt19937_64 rng(1);
    for (int c : translation::sample_target_classes(50, 1, rng)) EXPECT_EQ(c, 0);
    const int draws = 100000;
    auto classes = translation::sample_target_classes(draws, 8, rng);
    std::vector<int> hist(8, 0);
    for (int c : classes) ++hist[c];
    for (int h : hist) EXPECT_NEAR(h / double(draws), 0.125, 0.005);
    Tensor z = networks::one_hot(std::vector<int>(classes.begin(), classes.begin() + 100), 8);
    EXPECT_NO_THROW(networks::require_one_hot(z, 8));
}

TEST(Translation, GradientPenaltyLinearCritic) {
    const ArchSpec shape{1, 4, 2, 1, 1};
    Tensor real = images(5, 1, 4, 1), fake = images(5, 1, 4, 2);
    std::mt19937_64 rng(3);
    for (double norm : {0.0, 1.0, 2.0}) {
        Tensor dir = testutil::random_tensor({16, 1}, rng).detach();
        double n = 0;
        for (double v : dir.values()) n += v * v;
        Tensor w = ag::scale(dir, norm / std::sqrt(n));
        std::mt19937_64 eps_rng(4);
        const double gp = translation::gradient_penalty([&](const Tensor& x) { return linear_realism(x, w); }, real,
                                                        fake, eps_rng)
                              .item();
        EXPECT_NEAR(gp, (norm - 1) * (norm - 1), 1e-5) << "norm " << norm;
    }
    ConstantCritic constant;
    std::vector<double> eps(5, 0.3);
    EXPECT_NEAR(translation::gradient_penalty([&](const Tensor& x) { return constant.discriminate(x).realism; }, real,
                                              fake, eps)
                    .item(),
                1.0, 1e-5);
}

TEST(Translation, GradientPenaltyReachesCriticWeights) {
    Tensor real = images(3, 1, 4, 5), fake = images(3, 1, 4, 6);
    std::mt19937_64 rng(7);
    Tensor w = testutil::random_tensor({16, 1}, rng);
    std::vector<double> eps{0.2, 0.5, 0.9};
    auto loss = [&] {
        return translation::gradient_penalty([&](const Tensor& x) { return ag::tanh(linear_realism(x, w)); }, real,
                                             fake, eps);
    };
    EXPECT_LT(testutil::relative_gradient_error(loss, {w}), 1e-6);
}

TEST(Translation, GradientPenaltyPairingInvariance) {
    ArchSpec a{1, 8, 2, 2, 4};
    auto nets = NetworkTriplet::create(a, 8);
    Tensor real = images(8, 1, 8, 9), fake = images(8, 1, 8, 10, -0.5, 0.5);
    std::vector<double> pf(fake.values());
    std::vector<double> permuted(pf.size());
    const std::int64_t per = 64;
    for (int i = 0; i < 8; ++i)
        std::copy(pf.begin() + ((i + 3) % 8) * per, pf.begin() + ((i + 3) % 8 + 1) * per, permuted.begin() + i * per);
    Tensor fake_perm = Tensor::from(fake.shape(), permuted);
    auto realism = [&](const Tensor& x) { return nets.discriminator->discriminate(x).realism; };
    std::mt19937_64 rng(11);
    std::vector<double> a_vals, b_vals;
    for (int i = 0; i < 100; ++i) {
        a_vals.push_back(translation::gradient_penalty(realism, real, fake, rng).item());
        b_vals.push_back(translation::gradient_penalty(realism, real, fake_perm, rng).item());
    }
    auto stats = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) s += (x - m) * (x - m);
        return std::pair{m, s / (v.size() - 1)};
    };
    auto [ma, va] = stats(a_vals);
    auto [mb, vb] = stats(b_vals);
    EXPECT_LE(std::abs(ma - mb), 2 * std::sqrt(va / 100 + vb / 100));
}

TEST(Translation, GeneratorLossExamples) {
    ScaleTranslator identity;
    ConstantCritic critic;
    critic.c = 0.7;
    Tensor x = images(3, 1, 4, 12);
    Tensor z = networks::one_hot({0, 3, 2}, 4);
    TranslationBatch batch{x, z, z};
    auto t = translation::generator_loss(identity, critic, batch, {});
    ASSERT_TRUE(t);
    EXPECT_NEAR(t->adversarial.item(), -0.7, 1e-12);
    EXPECT_NEAR(t->reconstruction.item(), 0.0, 1e-15);
    EXPECT_NEAR(t->critic_class.item(), std::log(4.0), 1e-12);
    EXPECT_NEAR(t->generator_class.item(), std::log(4.0), 1e-12);
    EXPECT_NEAR(t->total.item(), -0.7 + 2 * std::log(4.0), 1e-12);

    identity.factor = 0.5;
    auto scaled = translation::generator_loss(identity, critic, batch, {});
    double l1 = 0;
    for (double v : x.values()) l1 += std::abs(0.25 * v - v);
    EXPECT_NEAR(scaled->reconstruction.item(), l1 / x.numel(), 1e-12);

    EXPECT_FALSE(translation::generator_loss(identity, critic, TranslationBatch{}, {}));
}

TEST(Translation, DiscriminatorLossExamples) {
    ScaleTranslator g;
    ConstantCritic constant;
    constant.c = 2.5;
    Tensor x = images(4, 1, 4, 13);
    Tensor z = networks::one_hot({0, 1, 2, 3}, 4);
    TranslationBatch batch{x, z, networks::one_hot({1, 1, 0, 0}, 4)};
    std::mt19937_64 rng(14);
    auto t = translation::discriminator_loss(g, constant, batch, {}, rng);
    ASSERT_TRUE(t);
    EXPECT_NEAR(t->critic.item(), 0.0, 1e-12);
    EXPECT_NEAR(t->gradient_penalty.item(), 1.0, 1e-5);
    EXPECT_NEAR(t->classification.item(), std::log(4.0), 1e-12);

    GanWeights zero;
    zero.classification = zero.gradient_penalty = 0;
    t = translation::discriminator_loss(g, constant, batch, zero, rng);
    EXPECT_NEAR(t->total.item(), t->critic.item(), 1e-15);

    // Real images have positive mean, the negating generator produces negative ones.
    g.factor = -1;
    Tensor pos = images(4, 1, 4, 15, 0.1, 1.0);
    SignCritic sign;
    TranslationBatch sb{pos, networks::one_hot({0, 1, 0, 1}, 2), networks::one_hot({1, 0, 1, 0}, 2)};
    t = translation::discriminator_loss(g, sign, sb, zero, rng);
    EXPECT_NEAR(t->critic.item(), -2.0, 1e-12);
    EXPECT_FALSE(translation::discriminator_loss(g, sign, TranslationBatch{}, {}, rng));
}

TEST(Translation, BreakdownsMatchOracle) {
    ArchSpec a{1, 8, 3, 2, 4};
    auto nets = NetworkTriplet::create(a, 16);
    auto& G = *nets.generator;
    auto& D = *nets.discriminator;
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = images(4, 1, 8, 100 + trial);
        auto src = translation::sample_target_classes(4, 3, rng);
        auto tgt = translation::sample_target_classes(4, 3, rng);
        TranslationBatch b{x, networks::one_hot(src, 3), networks::one_hot(tgt, 3)};
        GanWeights w;
        auto gt = translation::generator_loss(G, D, b, w);

        // reference from raw network outputs
        Tensor fake = G.translate(x, b.target);
        auto judged = D.discriminate(fake);
        auto rows = [](const Tensor& t) {
            oracle::Mat m(t.size(0), oracle::Row(t.size(1)));
            for (std::int64_t i = 0; i < t.size(0); ++i)
                for (std::int64_t j = 0; j < t.size(1); ++j) m[i][j] = t.at(i * t.size(1) + j);
            return m;
        };
        double adv = 0;
        for (double v : judged.realism.values()) adv -= v / 4;
        const double ccls = oracle::soft_ce(oracle::softmax_rows(rows(judged.logits)), oracle::one_hot(tgt, 3));
        const double gcls =
            oracle::soft_ce(oracle::softmax_rows(rows(G.encoder_logits(fake))), oracle::one_hot(tgt, 3));
        Tensor cyc = G.translate(fake, b.source);
        double rec = 0;
        for (std::int64_t i = 0; i < x.numel(); ++i) rec += std::abs(cyc.at(i) - x.at(i));
        rec /= x.numel();
        auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
        EXPECT_LT(rel(gt->adversarial.item(), adv), 1e-6);
        EXPECT_LT(rel(gt->critic_class.item(), ccls), 1e-6);
        EXPECT_LT(rel(gt->generator_class.item(), gcls), 1e-6);
        EXPECT_LT(rel(gt->reconstruction.item(), rec), 1e-6);
        EXPECT_LT(rel(gt->total.item(), adv + ccls + gcls + w.reconstruction * rec), 1e-6);

        std::mt19937_64 r1(trial);
        auto dt = translation::discriminator_loss(G, D, b, w, r1);
        double crit = 0;
        const Tensor real_scores = D.discriminate(x).realism;
        for (double v : real_scores.values()) crit -= v / 4;
        for (double v : judged.realism.values()) crit += v / 4;
        const double dcls =
            oracle::soft_ce(oracle::softmax_rows(rows(D.discriminate(x).logits)), oracle::one_hot(src, 3));
        EXPECT_LT(rel(dt->critic.item(), crit), 1e-6);
        EXPECT_LT(rel(dt->classification.item(), dcls), 1e-6);
        EXPECT_LT(rel(dt->total.item(), crit + w.classification * dcls + w.gradient_penalty * dt->gradient_penalty.item()),
                  1e-6);
    }
}

TEST(Translation, FreezeDiscipline) {
    ArchSpec a{1, 8, 2, 2, 4};
    auto nets = NetworkTriplet::create(a, 18);
    auto& G = *nets.generator;
    auto& D = *nets.discriminator;
    auto& C = *nets.classifier;
    optim::AdamW g_opt(G.parameters()), d_opt(D.parameters()), c_opt(C.parameters());
    std::mt19937_64 rng(19);
    Tensor x = images(4, 1, 8, 20);
    TranslationBatch b{x, networks::one_hot({0, 1, 0, 1}, 2), networks::one_hot({1, 1, 0, 0}, 2)};
    auto sums = [&] {
        return std::array{nn::parameter_checksum(G), nn::parameter_checksum(D), nn::parameter_checksum(C)};
    };

    auto before = sums();
    auto dt = translation::discriminator_loss(G, D, b, {}, rng);
    // The generated images are constants: no gradient path reaches G at all.
    for (const Tensor& g : ag::grad(dt->total, G.parameters()))
        for (double v : g.values()) ASSERT_EQ(v, 0.0);
    d_opt.step(ag::grad(dt->total, d_opt.params()));
    auto after = sums();
    EXPECT_EQ(after[0], before[0]);
    EXPECT_NE(after[1], before[1]);
    EXPECT_EQ(after[2], before[2]);

    before = after;
    auto gt = translation::generator_loss(G, D, b, {});
    g_opt.step(ag::grad(gt->total, g_opt.params()));
    after = sums();
    EXPECT_NE(after[0], before[0]);
    EXPECT_EQ(after[1], before[1]);
    EXPECT_EQ(after[2], before[2]);

    before = after;
    translation::synthetic_classifier_step(G, [&](const Tensor& t) { return C.classify(t); }, c_opt, x, b.target);
    after = sums();
    EXPECT_EQ(after[0], before[0]);
    EXPECT_EQ(after[1], before[1]);
    EXPECT_NE(after[2], before[2]);
}

TEST(Translation, SyntheticStepExamples) {
    ConditionTranslator g;
    Tensor x = Tensor::zeros({6, 8, 1, 1});
    Tensor z = networks::one_hot({0, 1, 2, 3, 7, 5}, 8);

    Tensor w_zero = Tensor::zeros({8, 8});
    w_zero.set_requires_grad(true);
    optim::AdamW opt_zero(std::vector<Tensor>{w_zero});
    auto linear = [](const Tensor& w) {
        return [w](const Tensor& t) { return ag::matmul(ag::reshape(t, {t.size(0), -1}), w); };
    };
    EXPECT_NEAR(translation::synthetic_classifier_step(g, linear(w_zero), opt_zero, x, z), std::log(8.0), 1e-12);
    EXPECT_NEAR(std::log(8.0), 2.0794, 1e-4);

    std::vector<double> eye(64, 0.0);
    for (int i = 0; i < 8; ++i) eye[i * 9] = 50.0;
    Tensor w_perfect = Tensor::from({8, 8}, eye);
    w_perfect.set_requires_grad(true);
    optim::AdamW opt_perfect(std::vector<Tensor>{w_perfect});
    EXPECT_LT(translation::synthetic_classifier_step(g, linear(w_perfect), opt_perfect, x, z), 1e-12);
}

TEST(Translation, PenaltyDrivesInterpolateNormTowardOne) {
    ArchSpec a{1, 8, 2, 2, 4};
    auto nets = NetworkTriplet::create(a, 21);
    auto& G = *nets.generator;
    auto& D = *nets.discriminator;
    optim::AdamW d_opt(D.parameters(), {1e-3});
    std::mt19937_64 rng(22);
    const int steps = 200;
    auto norm_of_interpolates = [&](const Tensor& real, const Tensor& fake) {
        std::uniform_real_distribution<double> u(0, 1);
        const std::int64_t b = real.size(0), per = real.numel() / b;
        std::vector<double> mixed(real.numel());
        for (std::int64_t i = 0; i < b; ++i) {
            const double e = u(rng);
            for (std::int64_t j = 0; j < per; ++j)
                mixed[i * per + j] = e * real.at(i * per + j) + (1 - e) * fake.at(i * per + j);
        }
        Tensor xi = Tensor::from(real.shape(), mixed);
        xi.set_requires_grad(true);
        Tensor g = ag::grad(ag::sum(D.discriminate(xi).realism), {xi})[0];
        double total = 0;
        for (std::int64_t i = 0; i < b; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < per; ++j) s += g.at(i * per + j) * g.at(i * per + j);
            total += std::sqrt(s);
        }
        return total / b;
    };
    double mean_norm = 0;
    int counted = 0;
    for (int step = 0; step < steps; ++step) {
        Tensor x = images(8, 1, 8, 1000 + step, -1, 0.2);
        auto src = translation::sample_target_classes(8, 2, rng);
        auto tgt = translation::sample_target_classes(8, 2, rng);
        TranslationBatch b{x, networks::one_hot(src, 2), networks::one_hot(tgt, 2)};
        auto dt = translation::discriminator_loss(G, D, b, {}, rng);
        d_opt.step(ag::grad(dt->total, d_opt.params()));
        if (step >= steps - 20) {
            Tensor fake;
            {
                ag::NoGradGuard ng;
                fake = G.translate(x, b.target);
            }
            mean_norm += norm_of_interpolates(x, fake);
            ++counted;
        }
    }
    mean_norm /= counted;
    EXPECT_GE(mean_norm, 0.5);
    EXPECT_LE(mean_norm, 1.5);
}
