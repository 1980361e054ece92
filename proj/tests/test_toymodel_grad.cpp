#include <doctest.h>

#include <cmath>
#include <random>

#include "steerbench/toymodel.hpp"

using namespace steerbench;

// Central finite differences against the analytic gradients on a tiny model.
// This is the independent oracle for the hand-written backward pass.
TEST_CASE("toy model gradients match finite differences") {
    ToyConfig cfg;
    cfg.n_layers = 2;
    cfg.hidden_dim = 8;
    cfg.mlp_dim = 12;
    cfg.n_heads = 2;
    cfg.max_seq = 8;
    cfg.vocab_size = 11;
    cfg.seed = 12345;
    ToyTransformer model(cfg);

    const std::vector<std::vector<TokenId>> seqs = {{1, 4, 7, 2, 9, 3}, {5, 5, 8, 1}};
    std::vector<float> grads;
    model.accumulate_grads(seqs, grads);
    REQUIRE(grads.size() == model.params().size());

    std::mt19937 rng(99);
    std::uniform_int_distribution<std::size_t> pick(0, model.params().size() - 1);
    const float h = 1e-3f;
    std::size_t checked = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 250; ++trial) {
        const std::size_t i = pick(rng);
        const float saved = model.params()[i];
        model.params()[i] = saved + h;
        const double lp = model.batch_loss(seqs);
        model.params()[i] = saved - h;
        const double lm = model.batch_loss(seqs);
        model.params()[i] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = grads[i];
        const double scale = std::max(std::fabs(fd), std::fabs(an));
        if (scale < 2e-3) continue;  // below the float32 fd noise floor
        // 3% relative plus an absolute guard; a broken backward is off by O(1)
        const double err = std::fabs(fd - an);
        worst = std::max(worst, err / scale);
        CHECK(err <= 0.03 * scale + 2e-4);
        ++checked;
    }
    REQUIRE(checked > 40);  // enough informative coordinates sampled
    CHECK(worst < 0.05);
}

TEST_CASE("batch loss decreases over a few hand-rolled update steps") {
    ToyConfig cfg;
    cfg.n_layers = 2;
    cfg.hidden_dim = 8;
    cfg.mlp_dim = 12;
    cfg.n_heads = 1;
    cfg.max_seq = 8;
    cfg.vocab_size = 9;
    cfg.seed = 4;
    ToyTransformer model(cfg);
    const std::vector<std::vector<TokenId>> seqs = {{1, 2, 3, 4, 5}, {2, 3, 4, 5, 6}};
    const double before = model.batch_loss(seqs);
    std::vector<float> grads;
    for (int step = 0; step < 40; ++step) {
        model.accumulate_grads(seqs, grads);
        for (std::size_t i = 0; i < grads.size(); ++i) model.params()[i] -= 0.05f * grads[i];
    }
    CHECK(model.batch_loss(seqs) < before);
}
