#include <benchmark/benchmark.h>

#include <random>

#include "steerbench/analysiskit.hpp"
#include "steerbench/evalbench.hpp"
#include "steerbench/saecore.hpp"
#include "steerbench/toymodel.hpp"

using namespace steerbench;

namespace {

std::unique_ptr<ToyTransformer> bench_model() {
    static std::unique_ptr<ToyTransformer> model = [] {
        auto fam = generate_synthetic_family(2, 3, 64, 60);
        ToyConfig cfg;
        cfg.vocab_size = fam.vocab_size();
        cfg.steps = 0;  // weights do not matter for throughput
        TrainReport rep;
        return ToyTransformer::train(fam.corpora, cfg, &rep);
    }();
    return std::unique_ptr<ToyTransformer>(
        static_cast<ToyTransformer*>(model->clone().release()));
}

void BM_generate(benchmark::State& state) {
    auto model = bench_model();
    const std::vector<TokenId> prompt = {1, 2, 3, 4, 5, 6, 7, 8};
    DecodingSpec dec;
    dec.max_new_tokens = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(model->generate(prompt, {}, dec));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_generate)->Arg(16)->Arg(64);

void BM_forward_capture(benchmark::State& state) {
    auto model = bench_model();
    std::vector<TokenId> tokens(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<TokenId>(1 + i % 60);
    std::vector<HookPoint> capture;
    for (int l = 0; l < model->n_layers(); ++l) capture.push_back({l, HookSite::residual_post});
    for (auto _ : state) {
        benchmark::DoNotOptimize(model->forward_capture(tokens, capture));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward_capture)->Arg(32)->Arg(128);

void BM_apply_additive(benchmark::State& state) {
    std::mt19937 rng(3);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> h(static_cast<std::size_t>(state.range(0)));
    SteeringDirection dir;
    dir.vector.resize(h.size());
    for (auto& x : h) x = dist(rng);
    for (auto& x : dir.vector) x = dist(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_additive(h, dir, 4.0f));
    }
}
BENCHMARK(BM_apply_additive)->Arg(64)->Arg(4096);

void BM_sae_roundtrip(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const int ds = 4 * d;
    std::mt19937 rng(5);
    std::normal_distribution<float> dist(0.0f, 0.3f);
    SAEParams p;
    p.layer = 0;
    p.input_dim = d;
    p.latent_dim = ds;
    p.w_enc.resize(static_cast<std::size_t>(ds) * d);
    p.w_dec.resize(static_cast<std::size_t>(d) * ds);
    for (auto& w : p.w_enc) w = dist(rng);
    for (auto& w : p.w_dec) w = dist(rng);
    p.b_enc.assign(static_cast<std::size_t>(ds), 0.0f);
    p.b_dec.assign(static_cast<std::size_t>(d), 0.0f);
    p.theta.assign(static_cast<std::size_t>(ds), 0.05f);
    std::vector<float> h(static_cast<std::size_t>(d));
    for (auto& x : h) x = dist(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sae_decode(p, sae_encode(p, h)));
    }
}
BENCHMARK(BM_sae_roundtrip)->Arg(64)->Arg(256);

void BM_cosine_matrix(benchmark::State& state) {
    std::mt19937 rng(7);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::map<LanguageId, std::vector<float>> vecs;
    for (int i = 0; i < state.range(0); ++i) {
        std::vector<float> v(512);
        for (auto& x : v) x = dist(rng);
        vecs["lang" + std::to_string(i)] = std::move(v);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(cosine_matrix(vecs));
    }
}
BENCHMARK(BM_cosine_matrix)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
