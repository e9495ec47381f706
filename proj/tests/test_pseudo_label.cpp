#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sparse/pseudo_label.hpp"

using namespace sparse::pseudo;

namespace {

void expect_prob(const Prob& got, std::initializer_list<double> want, double tol = 1e-4) {
    ASSERT_EQ(got.size(), want.size());
    std::size_t i = 0;
    for (double w : want) EXPECT_NEAR(got[i++], w, tol);
}

}  // namespace

TEST(PseudoLabel, TemperatureSoftmaxExamples) {
    for (double t : {0.5, 1.0, 2.0}) expect_prob(temperature_softmax(std::vector<double>{0, 0}, t), {0.5, 0.5}, 1e-15);
    expect_prob(temperature_softmax(std::vector<double>{2, 0}, 2.0), {0.7311, 0.2689});
    expect_prob(temperature_softmax(std::vector<double>{std::log(2.0), 0}, 1.0), {2.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(PseudoLabel, EntropyConfidenceExamples) {
    EXPECT_DOUBLE_EQ(entropy_confidence(std::vector<double>{0, 1, 0}), 1.0);
    EXPECT_NEAR(entropy_confidence(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 0.0, 1e-15);
    EXPECT_NEAR(entropy_confidence(std::vector<double>{0.8, 0.2}), 0.278, 1e-3);
    const double h = -(0.8 * std::log(0.8) + 0.2 * std::log(0.2));
    EXPECT_NEAR(h, 0.5004, 1e-4);
}

TEST(PseudoLabel, VoteExamples) {
    std::vector<double> pd{0.9, 0.1}, pc{0.5, 0.5};
    expect_prob(confidence_weighted_vote(pd, 0.3, pc, 0.3), {0.7, 0.3}, 1e-15);
    expect_prob(confidence_weighted_vote(pd, 0.4, pc, 0.0), {0.9, 0.1}, 1e-15);
    expect_prob(confidence_weighted_vote(pd, 0.6, pc, 0.2), {0.8, 0.2}, 1e-12);
    expect_prob(confidence_weighted_vote(pd, 0.0, pc, 0.0), {0.7, 0.3}, 1e-15);
}

TEST(PseudoLabel, BlendAndEmaExamples) {
    EnsembleState s;
    std::vector<double> pw{1, 0};
    expect_prob(temporal_blend(pw, s, 7), {1, 0}, 0);
    s.store(7, {0.5, 0.5});
    expect_prob(temporal_blend(pw, s, 7), {0.8, 0.2}, 1e-15);
    s.store(8, {0.3, 0.7});
    expect_prob(temporal_blend(std::vector<double>{0.3, 0.7}, s, 8), {0.3, 0.7}, 1e-15);

    EnsembleState e;
    ema_update(e, 1, std::vector<double>{1, 0});
    expect_prob(*e.history(1), {1, 0}, 0);
    ema_update(e, 1, std::vector<double>{0, 1});
    expect_prob(*e.history(1), {0.99, 0.01}, 1e-15);
    ema_update(e, 2, std::vector<double>{0.4, 0.6});
    ema_update(e, 2, std::vector<double>{0.4, 0.6});
    expect_prob(*e.history(2), {0.4, 0.6}, 1e-15);

    // geometric decay of the L1 gap
    double gap = std::abs(e.history(1)->at(0) - 0.0) + std::abs(e.history(1)->at(1) - 1.0);
    for (int n = 0; n < 20; ++n) {
        ema_update(e, 1, std::vector<double>{0, 1});
        const double next = std::abs(e.history(1)->at(0)) + std::abs(e.history(1)->at(1) - 1.0);
        EXPECT_NEAR(next, 0.99 * gap, 1e-12);
        gap = next;
    }
}

TEST(PseudoLabel, StoreRejectsNonDistributions) {
    EnsembleState s;
    EXPECT_THROW(s.store(0, {0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(s.store(0, {1.5, -0.5}), std::invalid_argument);
    EXPECT_THROW(EnsembleState({1.2, 0.99, 0.75, 2.0}), std::invalid_argument);
}

TEST(PseudoLabel, ThresholdExamples) {
    std::vector<double> grid;
    for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
    const double tau = adaptive_threshold(grid, 0.75);
    EXPECT_NEAR(tau, 0.775, 1e-12);

    std::vector<std::int64_t> ids;
    std::vector<Prob> probs;
    // Ten-class rows whose largest entry is the grid value.
    for (int i = 0; i < 10; ++i) {
        ids.push_back(i);
        Prob row(10, (1 - grid[i]) / 9);
        row[0] = grid[i];
        probs.push_back(row);
    }
    std::vector<double> maxes;
    for (auto& p : probs) maxes.push_back(*std::max_element(p.begin(), p.end()));
    auto sel = select_and_label(ids, probs, adaptive_threshold(maxes, 0.75));
    EXPECT_EQ(sel.selected_ids, (std::vector<std::int64_t>{7, 8, 9}));

    std::vector<double> flat(6, 0.4);
    EXPECT_DOUBLE_EQ(adaptive_threshold(flat, 0.75), 0.4);
    EXPECT_DOUBLE_EQ(adaptive_threshold(grid, 0.0), 0.1);
    EXPECT_THROW(adaptive_threshold(std::vector<double>{}, 0.5), std::invalid_argument);
}

TEST(PseudoLabel, SelectionExamples) {
    std::vector<std::int64_t> ids{3, 4};
    std::vector<Prob> p{{0.9, 0.1}, {0.5, 0.5}};
    auto sel = select_and_label(ids, p, 0.775);
    EXPECT_EQ(sel.selected_ids, (std::vector<std::int64_t>{3}));
    EXPECT_EQ(sel.labels, (std::vector<int>{0}));
    EXPECT_TRUE(select_and_label(std::vector<std::int64_t>{4}, std::vector<Prob>{{0.5, 0.5}}, 0.5).selected_ids.empty());
    EXPECT_EQ(argmax(std::vector<double>{0.4, 0.4, 0.2}), 0);

    std::vector<Prob> equal(5, Prob{0.7, 0.3});
    std::vector<std::int64_t> five{0, 1, 2, 3, 4};
    std::vector<double> maxes(5, 0.7);
    EXPECT_TRUE(select_and_label(five, equal, adaptive_threshold(maxes, 0.75)).selected_ids.empty());
}

TEST(PseudoLabel, SelectionFractionAndMonotonicity) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const int b = 32, k = 4;
        std::vector<std::int64_t> ids(b);
        std::vector<double> d(b * k), c(b * k);
        for (int i = 0; i < b; ++i) ids[i] = i;
        for (double& v : d) v = z(rng);
        for (double& v : c) v = z(rng);
        std::size_t prev = b + 1;
        for (double rho : {0.0, 0.25, 0.5, 0.75, 0.9}) {
            EnsembleState s({0.6, 0.99, rho, 2.0});
            auto sel = pseudo_label_batch(ids, d, c, k, s);
            const double frac = sel.selected_ids.size() / double(b);
            EXPECT_GE(frac, (1 - rho) - 1.0 / b);
            EXPECT_LE(frac, (1 - rho) + 1.0 / b);
            EXPECT_LE(sel.selected_ids.size(), prev);
            prev = sel.selected_ids.size();
            for (const auto& [id, p] : s.entries()) EXPECT_TRUE(is_distribution(p));
        }
    }
}

TEST(PseudoLabel, ArgmaxStability) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> d(3), c(3);
        for (double& v : d) v = z(rng);
        for (double& v : c) v = z(rng);
        auto pd = temperature_softmax(d, 2.0), pc = temperature_softmax(c, 2.0);
        if (argmax(pd) != argmax(pc)) continue;
        auto pw = confidence_weighted_vote(pd, entropy_confidence(pd), pc, entropy_confidence(pc));
        EXPECT_EQ(argmax(pw), argmax(pd));
        EnsembleState s;
        EXPECT_EQ(argmax(temporal_blend(pw, s, 0)), argmax(pd));
    }
}

TEST(PseudoLabel, PipelineOracle) {
    std::mt19937_64 rng(1234);
    std::normal_distribution<double> z(0, 2);
    std::uniform_int_distribution<int> kdist(2, 6);
    std::bernoulli_distribution has_history(0.5);
    std::uniform_real_distribution<double> u(0, 1);
    const double alpha = 0.6, beta = 0.99, t = 2.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = kdist(rng);
        oracle::Row d(k), c(k);
        for (double& v : d) v = z(rng);
        for (double& v : c) v = z(rng);
        EnsembleState state;
        oracle::Row hist;
        if (has_history(rng)) {
            hist.resize(k);
            double s = 0;
            for (double& v : hist) s += v = u(rng);
            for (double& v : hist) v /= s;
            state.store(trial, hist);
        }
        std::vector<std::int64_t> id{trial};
        auto sel = pseudo_label_batch(id, d, c, k, state);

        // reference
        auto pd = oracle::softmax(d, t), pc = oracle::softmax(c, t);
        double cd = oracle::confidence(pd), cc = oracle::confidence(pc);
        if (cd + cc == 0) cd = cc = 1;
        oracle::Row ens(k), ema(k);
        for (int j = 0; j < k; ++j) {
            const double w = (cd * pd[j] + cc * pc[j]) / (cd + cc);
            ens[j] = hist.empty() ? w : alpha * w + (1 - alpha) * hist[j];
            ema[j] = hist.empty() ? ens[j] : beta * hist[j] + (1 - beta) * ens[j];
        }
        const Prob& stored = *state.history(trial);
        for (int j = 0; j < k; ++j) EXPECT_NEAR(stored[j], ema[j], 1e-9);
        // a single-sample batch has tau = its own max, so nothing passes
        EXPECT_NEAR(sel.threshold, *std::max_element(ens.begin(), ens.end()), 1e-9);
        EXPECT_TRUE(sel.selected_ids.empty());
    }
}

TEST(PseudoLabel, BatchOracleSelection) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const int b = 16, k = 3;
        std::vector<std::int64_t> ids(b);
        std::vector<double> d(b * k), c(b * k);
        for (int i = 0; i < b; ++i) ids[i] = 100 + i;
        for (double& v : d) v = z(rng);
        for (double& v : c) v = z(rng);
        EnsembleState state;
        auto sel = pseudo_label_batch(ids, d, c, k, state);

        std::vector<oracle::Row> ens;
        oracle::Row maxes;
        for (int i = 0; i < b; ++i) {
            oracle::Row di(d.begin() + i * k, d.begin() + (i + 1) * k), ci(c.begin() + i * k, c.begin() + (i + 1) * k);
            auto pd = oracle::softmax(di, 2.0), pc = oracle::softmax(ci, 2.0);
            const double cd = oracle::confidence(pd), cc = oracle::confidence(pc);
            oracle::Row p(k);
            for (int j = 0; j < k; ++j) p[j] = (cd * pd[j] + cc * pc[j]) / (cd + cc);
            maxes.push_back(*std::max_element(p.begin(), p.end()));
            ens.push_back(p);
        }
        const double tau = oracle::percentile(maxes, 0.75);
        EXPECT_NEAR(sel.threshold, tau, 1e-9);
        std::vector<std::int64_t> want_ids;
        std::vector<int> want_labels;
        for (int i = 0; i < b; ++i) {
            if (maxes[i] > tau) {
                want_ids.push_back(ids[i]);
                want_labels.push_back(static_cast<int>(std::max_element(ens[i].begin(), ens[i].end()) - ens[i].begin()));
            }
        }
        EXPECT_EQ(sel.selected_ids, want_ids);
        EXPECT_EQ(sel.labels, want_labels);
    }
}
