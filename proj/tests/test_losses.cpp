#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "w2vbert/gradcheck.hpp"
#include "w2vbert/losses.hpp"

using namespace w2v;
using Catch::Approx;

namespace {
MaskSpec all_masked(int t) {
    MaskSpec m;
    m.masked.assign((size_t)t, true);
    return m;
}
} // namespace

TEST_CASE("equal similarities give L_w = ln(K+1) for K in {1, 10, 100}") {
    for (int k : {1, 10, 100}) {
        ContrastiveLossConfig cfg;
        cfg.n_distractors = k;
        // identical rows: every candidate has the same cosine to the anchor
        const int t = 8, d = 6;
        Tensor<double> context = Tensor<double>::full(Shape{t, d}, 1.0);
        Tensor<double> quantized = Tensor<double>::full(Shape{t, d}, 0.5);
        auto [loss, n] = contrastive_loss_w(context, quantized, all_masked(t), cfg, 3);
        CHECK(n == t);
        INFO("K = " << k);
        CHECK(loss.item() == Approx(std::log((double)k + 1.0)).margin(1e-6));
    }
}

TEST_CASE("orthogonal distractors give the closed-form loss ln(1 + K e^{-1/kappa})") {
    // quantized rows are distinct one-hot axes; context equals quantized, so
    // the positive cosine is 1 and every distractor cosine is 0
    const int t = 12, d = 12;
    std::vector<double> eye((size_t)t * d, 0.0);
    for (int i = 0; i < t; ++i) eye[(size_t)(i * d + i)] = 1.0;
    Tensor<double> q(Shape{t, d}, std::move(eye));
    ContrastiveLossConfig cfg; // K=10, kappa=0.1
    auto [loss, n] = contrastive_loss_w(q, q, all_masked(t), cfg, 5);
    CHECK(n == t);
    double expect = std::log(1.0 + 10.0 * std::exp(-1.0 / 0.1));
    CHECK(loss.item() == Approx(expect).margin(1e-6));
}

TEST_CASE("fewer than two masked steps contribute nothing") {
    ContrastiveLossConfig cfg;
    Tensor<double> x = Tensor<double>::full(Shape{5, 3}, 1.0);
    MaskSpec one;
    one.masked = {false, true, false, false, false};
    auto [loss, n] = contrastive_loss_w(x, x, one, cfg, 1);
    CHECK(n == 0);
    CHECK(loss.item() == 0.0);
    MaskSpec none;
    none.masked.assign(5, false);
    auto [loss2, n2] = contrastive_loss_w(x, x, none, cfg, 1);
    CHECK(n2 == 0);
}

TEST_CASE("distractors come from masked steps of the same utterance only") {
    // unmasked rows carry a poison value; if any is ever selected, the
    // resulting cosine would differ from the all-equal closed form
    const int t = 10, d = 4;
    std::vector<double> vals((size_t)t * d, 1.0);
    MaskSpec m;
    m.masked.assign((size_t)t, true);
    for (int i : {0, 3, 7}) {
        m.masked[(size_t)i] = false;
        for (int j = 0; j < d; ++j) vals[(size_t)(i * d + j)] = (j % 2 == 0) ? 50.0 : -50.0;
    }
    Tensor<double> x(Shape{t, d}, std::move(vals));
    ContrastiveLossConfig cfg;
    cfg.n_distractors = 4;
    auto [loss, n] = contrastive_loss_w(x, x, m, cfg, 9);
    CHECK(n == 7);
    CHECK(loss.item() == Approx(std::log(5.0)).margin(1e-6));
}

TEST_CASE("MLM loss equals hand-computed cross-entropy and accuracy") {
    // 3 frames, vocab 4, all masked
    Tensor<double> logits(Shape{3, 4}, {1.0, 2.0, 0.5, -1.0, //
                                        0.0, 0.0, 0.0, 0.0,  //
                                        3.0, -2.0, 1.0, 0.2});
    std::vector<int> ids{1, 2, 0};
    auto [loss, acc] = mlm_loss(logits, ids, all_masked(3));
    auto row_ce = [&](int r, int target) {
        double mx = -1e300, z = 0;
        for (int j = 0; j < 4; ++j) mx = std::max(mx, logits.at(r, j));
        for (int j = 0; j < 4; ++j) z += std::exp(logits.at(r, j) - mx);
        return -(logits.at(r, target) - mx - std::log(z));
    };
    double expect = (row_ce(0, 1) + row_ce(1, 2) + row_ce(2, 0)) / 3.0;
    CHECK(loss.item() == Approx(expect).epsilon(1e-10));
    // row 0 argmax = 1 (hit), row 1 argmax = 0 (miss vs 2), row 2 argmax = 0 (hit)
    CHECK(acc == Approx(2.0 / 3.0));
}

TEST_CASE("uniform logits give CE = ln(vocab)") {
    const int v = 64;
    Tensor<double> logits = Tensor<double>::zeros(Shape{5, v});
    std::vector<int> ids{0, 13, 63, 7, 31};
    auto [loss, acc] = mlm_loss(logits, ids, all_masked(5));
    CHECK(loss.item() == Approx(std::log((double)v)).epsilon(1e-10));
}

TEST_CASE("MLM scores masked positions only") {
    Tensor<double> a(Shape{4, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 1, 1});
    Tensor<double> b(Shape{4, 3}, {9, 9, 9, 4, 5, 6, 7, 8, 9, 0, 0, 0}); // rows 0,3 differ
    std::vector<int> ids{0, 1, 2, 0};
    MaskSpec m;
    m.masked = {false, true, true, false};
    auto [la, acca] = mlm_loss(a, ids, m);
    auto [lb, accb] = mlm_loss(b, ids, m);
    CHECK(la.item() == lb.item());
    CHECK(acca == accb);

    MaskSpec empty;
    empty.masked.assign(4, false);
    CHECK_THROWS_WITH(mlm_loss(a, ids, empty), Catch::Matchers::ContainsSubstring("MLM undefined"));
}

TEST_CASE("grouped MLM averages per-group cross-entropies") {
    // 2 groups, vocab 3 each; combined id = id0 + 3*id1
    Tensor<double> logits(Shape{2, 6}, {5.0, 0.0, 0.0, 0.0, 5.0, 0.0, //
                                        0.0, 0.0, 5.0, 5.0, 0.0, 0.0});
    std::vector<int> ids{0 + 3 * 1, 2 + 3 * 0};
    auto [loss, acc] = mlm_loss(logits, ids, all_masked(2), 2);
    CHECK(acc == 1.0); // every group argmax matches its target
    double ce = -std::log(std::exp(5.0) / (std::exp(5.0) + 2.0));
    CHECK(loss.item() == Approx(ce).epsilon(1e-9));
}

TEST_CASE("loss composition: L_c = L_w + alpha L_d and L_p = beta L_w + alpha L_d + gamma L_m") {
    Tensor<double> l_w = Tensor<double>::scalar(1.7);
    Tensor<double> l_d = Tensor<double>::scalar(0.3);
    Tensor<double> l_m = Tensor<double>::scalar(2.9);
    LossWeights w; // alpha 0.1, beta 1, gamma 1
    double l_c = contrastive_total(l_w, l_d, w.alpha).item();
    CHECK(l_c == Approx(1.7 + 0.1 * 0.3).margin(1e-12));
    double l_p = pretrain_loss(l_w, l_d, l_m, w).item();
    CHECK(l_p == Approx(l_c + 2.9).margin(1e-6));

    // beta = 0 removes the identification term but keeps diversity pressure
    w.beta = 0.0;
    w.alpha = 0.5;
    CHECK(pretrain_loss(l_w, l_d, l_m, w).item() == Approx(0.5 * 0.3 + 2.9).margin(1e-12));
    w.gamma = 2.0;
    CHECK(pretrain_loss(l_w, l_d, l_m, w).item() == Approx(0.5 * 0.3 + 2.0 * 2.9).margin(1e-12));
}

TEST_CASE("contrastive and MLM losses pass finite-difference checks") {
    Rng rng{21};
    Tensor<double> context = Tensor<double>::randn(Shape{7, 5}, rng);
    Tensor<double> quantized = Tensor<double>::randn(Shape{7, 5}, rng);
    MaskSpec m = all_masked(7);
    ContrastiveLossConfig cfg;
    cfg.n_distractors = 3;
    auto f = [&]() { return contrastive_loss_w(context, quantized, m, cfg, 77).first; };
    CHECK(finite_diff_check(f, {context, quantized}) < 1e-4);

    Tensor<double> logits = Tensor<double>::randn(Shape{6, 4}, rng);
    std::vector<int> ids{0, 3, 1, 1, 2, 0};
    MaskSpec partial;
    partial.masked = {true, false, true, true, false, true};
    auto g = [&]() { return mlm_loss(logits, ids, partial).first; };
    CHECK(finite_diff_check(g, {logits}) < 1e-4);
}
