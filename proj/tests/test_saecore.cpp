#include <doctest.h>

#include <cmath>
#include <random>

#include "steerbench/saecore.hpp"
#include "testutil.hpp"

using namespace steerbench;

namespace {

SAEParams hand_params_2x2() {
    // encode: f = jumprelu(W_enc h + b_enc), W_enc = [[1,2],[3,4]] (row per latent)
    SAEParams p;
    p.layer = 0;
    p.input_dim = 2;
    p.latent_dim = 2;
    p.w_enc = {1, 2, 3, 4};
    p.b_enc = {0.5f, -0.5f};
    p.w_dec = {2, 0, 1, 1};  // rows per input dim
    p.b_dec = {0.25f, -0.25f};
    p.theta = {0.0f, 0.0f};
    return p;
}

SAEParams random_params(int d, int ds, std::uint64_t seed) {
    SAEParams p;
    p.layer = 1;
    p.input_dim = d;
    p.latent_dim = ds;
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::normal_distribution<float> dist(0.0f, 0.4f);
    p.w_enc.resize(static_cast<std::size_t>(ds) * d);
    p.w_dec.resize(static_cast<std::size_t>(d) * ds);
    for (auto& w : p.w_enc) w = dist(rng);
    for (auto& w : p.w_dec) w = dist(rng);
    p.b_enc.assign(static_cast<std::size_t>(ds), 0.1f);
    p.b_dec.assign(static_cast<std::size_t>(d), -0.2f);
    p.theta.assign(static_cast<std::size_t>(ds), 0.05f);
    return p;
}

}  // namespace

TEST_CASE("jumprelu: definition, strict inequality, pass-through") {
    const std::vector<float> z = {0.5f, -0.2f, 1.5f};
    const std::vector<float> theta = {1.0f, 1.0f, 1.0f};
    CHECK(jumprelu(z, theta) == std::vector<float>{0.0f, 0.0f, 1.5f});

    const std::vector<float> z_eq = {1.0f, 1.0f, 1.0f};
    CHECK(jumprelu(z_eq, theta) == std::vector<float>{0.0f, 0.0f, 0.0f});

    const std::vector<float> zeros(3, 0.0f);
    const std::vector<float> pos = {0.3f, 0.0f, 2.0f};
    CHECK(jumprelu(pos, zeros) == std::vector<float>{0.3f, 0.0f, 2.0f});

    const std::vector<float> short_theta = {1.0f};
    CHECK_THROWS_AS(jumprelu(z, short_theta), DataError);
}

TEST_CASE("sae_encode / sae_decode: zero cases and hand-set oracle") {
    auto p = hand_params_2x2();

    SUBCASE("zero input with zero biases encodes to zero") {
        auto q = p;
        q.b_enc = {0.0f, 0.0f};
        const auto f = sae_encode(q, std::vector<float>{0.0f, 0.0f});
        CHECK(f == std::vector<float>{0.0f, 0.0f});
    }
    SUBCASE("hand computation matches") {
        // z = [1*1+2*2+0.5, 3*1+4*2-0.5] = [5.5, 10.5]; theta 0 -> f = z
        const auto f = sae_encode(p, std::vector<float>{1.0f, 2.0f});
        CHECK(f[0] == doctest::Approx(5.5).epsilon(1e-6));
        CHECK(f[1] == doctest::Approx(10.5).epsilon(1e-6));
        // decode: [2*5.5 + 0*10.5 + 0.25, 1*5.5 + 1*10.5 - 0.25] = [11.25, 15.75]
        const auto x = sae_decode(p, f);
        CHECK(x[0] == doctest::Approx(11.25).epsilon(1e-6));
        CHECK(x[1] == doctest::Approx(15.75).epsilon(1e-6));
    }
    SUBCASE("f = 0 decodes to the decoder bias") {
        const auto x = sae_decode(p, std::vector<float>{0.0f, 0.0f});
        CHECK(x[0] == 0.25f);
        CHECK(x[1] == -0.25f);
    }
    SUBCASE("sparsity is reported") {
        auto q = p;
        q.theta = {100.0f, 0.0f};
        float sparsity = -1.0f;
        sae_encode(q, std::vector<float>{1.0f, 2.0f}, &sparsity);
        CHECK(sparsity == doctest::Approx(0.5));
    }
    SUBCASE("dim mismatches throw") {
        CHECK_THROWS_AS(sae_encode(p, std::vector<float>{1.0f}), DataError);
        CHECK_THROWS_AS(sae_decode(p, std::vector<float>{1.0f, 2.0f, 3.0f}), DataError);
    }
}

TEST_CASE("sae_diffmean_direction subtracts latent means") {
    const std::vector<float> t = {1.0f, 0.0f, 2.0f};
    const std::vector<float> s = {0.5f, 0.0f, 2.0f};
    const auto dir = sae_diffmean_direction(t, s, 2, "de", "en");
    CHECK(dir.vector == std::vector<float>{0.5f, 0.0f, 0.0f});
    CHECK(dir.method == VectorMethod::sae_diffmean);
    CHECK_FALSE(dir.degenerate);
    CHECK(sae_diffmean_direction(t, t, 2, "de", "en").degenerate);
}

TEST_CASE("sae_intervene: epsilon correction makes alpha=0 the identity") {
    const auto p = random_params(6, 12, 9);
    std::mt19937 rng(4);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> delta(12);
    for (auto& x : delta) x = dist(rng);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> h(6);
        for (auto& x : h) x = dist(rng);
        const auto out = sae_intervene(p, h, delta, 0.0f);
        for (std::size_t i = 0; i < h.size(); ++i)
            CHECK(out[i] == doctest::Approx(h[i]).epsilon(1e-6));
    }
}

TEST_CASE("sae_intervene: perfect-reconstruction closed form") {
    // W_dec = W_enc^-1 on a square 4x4 autoencoder, biases and thresholds zero:
    // epsilon = 0 and the output is h + alpha * W_dec (delta / ||delta||)
    SAEParams p;
    p.layer = 0;
    p.input_dim = 4;
    p.latent_dim = 4;
    // orthogonal-ish invertible matrix and its inverse (hand-set)
    p.w_enc = {1, 0, 0, 0,
               0, 2, 0, 0,
               0, 0, 1, 1,
               0, 0, 0, 1};
    // inverse of [[1,0,0,0],[0,2,0,0],[0,0,1,1],[0,0,0,1]] as the decode matrix
    // decode rows are input dims: x = W_dec f
    p.w_dec = {1, 0,    0, 0,
               0, 0.5f, 0, 0,
               0, 0,    1, -1,
               0, 0,    0, 1};
    p.b_enc.assign(4, 0.0f);
    p.b_dec.assign(4, 0.0f);
    p.theta.assign(4, 0.0f);

    const std::vector<float> h = {0.5f, 1.5f, 2.0f, 1.0f};
    // check the inverse relationship holds for positive latents
    const auto f = sae_encode(p, h);
    const auto recon = sae_decode(p, f);
    for (std::size_t i = 0; i < 4; ++i) CHECK(recon[i] == doctest::Approx(h[i]).epsilon(1e-6));

    const std::vector<float> delta = {2.0f, 0.0f, 0.0f, 0.0f};
    const float alpha = 3.0f;
    const auto out = sae_intervene(p, h, delta, alpha);
    // unit delta = [1,0,0,0]; W_dec * unit = first column of W_dec = [1,0,0,0]
    CHECK(out[0] == doctest::Approx(h[0] + alpha).epsilon(1e-5));
    for (std::size_t i = 1; i < 4; ++i) CHECK(out[i] == doctest::Approx(h[i]).epsilon(1e-5));
}

TEST_CASE("sae_intervene: latent step is alpha-normalized") {
    const auto p = random_params(6, 12, 10);
    std::mt19937 rng(11);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> delta(12), h(6);
    for (auto& x : delta) x = dist(rng);
    for (auto& x : h) x = dist(rng);
    const float alpha = 4.0f;
    auto f = sae_encode(p, h);
    double norm = 0.0;
    for (float v : delta) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    // displacement in latent space
    double step = 0.0;
    for (std::size_t j = 0; j < delta.size(); ++j) {
        const double dj = alpha * delta[j] / norm;
        step += dj * dj;
    }
    CHECK(std::sqrt(step) == doctest::Approx(alpha).epsilon(1e-4));

    const std::vector<float> zero(12, 0.0f);
    CHECK_THROWS_AS(sae_intervene(p, h, zero, 1.0f), DataError);
    (void)f;
}

TEST_CASE("sparsity monotonicity: raising theta never adds active latents") {
    const auto p = random_params(8, 16, 13);
    std::mt19937 rng(14);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> h(8);
        for (auto& x : h) x = dist(rng);
        auto hi = p;
        for (auto& t : hi.theta) t += 0.3f;
        const auto f_lo = sae_encode(p, h);
        const auto f_hi = sae_encode(hi, h);
        std::size_t n_lo = 0, n_hi = 0;
        for (float v : f_lo)
            if (v != 0.0f) ++n_lo;
        for (float v : f_hi)
            if (v != 0.0f) ++n_hi;
        CHECK(n_hi <= n_lo);
    }
}

TEST_CASE("train_sae: beats the constant-mean baseline on structured data") {
    // activations concentrated on a few directions, like residual streams
    std::mt19937 rng(21);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    const int d = 8;
    const int ds = 16;
    std::vector<std::vector<float>> basis(3, std::vector<float>(d));
    for (auto& b : basis)
        for (auto& x : b) x = dist(rng);
    ActivationBatch batch;
    batch.layer = 2;
    batch.site = HookSite::residual_post;
    batch.dim = d;
    std::vector<float> row(d);
    for (int i = 0; i < 400; ++i) {
        std::fill(row.begin(), row.end(), 0.0f);
        for (const auto& b : basis) {
            const float c = dist(rng);
            for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] += c * b[static_cast<std::size_t>(j)];
        }
        batch.push_row(row);
    }
    SaeTrainConfig cfg;
    cfg.latent_dim = ds;
    cfg.epochs = 12;
    cfg.seed = 5;
    SaeTrainReport report;
    const auto p = train_sae({batch}, cfg, &report);
    CHECK_FALSE(report.untrained);
    CHECK(report.mse < report.baseline_mse);
    p.validate();
}

TEST_CASE("train_sae: epochs=0 returns identity-initialized params with warning") {
    const auto batch = testutil::gaussian_batch(1, 200, 4, {0, 0, 0, 0}, 1.0f, 31);
    SaeTrainConfig cfg;
    cfg.latent_dim = 8;
    cfg.epochs = 0;
    cfg.seed = 1;
    SaeTrainReport report;
    const auto p = train_sae({batch}, cfg, &report);
    CHECK(report.untrained);
    CHECK(p.untrained);
    // identity init: first d latents mirror the input, so non-negative inputs
    // reconstruct exactly (JumpReLU at theta=0 clips negatives)
    const std::vector<float> h = {0.4f, 0.7f, 0.1f, 0.9f};
    const auto recon = sae_decode(p, sae_encode(p, h));
    for (std::size_t i = 0; i < 4; ++i) CHECK(recon[i] == doctest::Approx(h[i]).epsilon(1e-6));
    // the epsilon-corrected intervention is an exact identity regardless
    std::vector<float> delta(8, 0.0f);
    delta[0] = 1.0f;
    const std::vector<float> signed_h = {0.4f, -0.7f, 0.1f, -0.9f};
    const auto out = sae_intervene(p, signed_h, delta, 0.0f);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(out[i] == doctest::Approx(signed_h[i]).epsilon(1e-6));
}

TEST_CASE("train_sae: deterministic given the seed; pool-size precondition") {
    const auto batch = testutil::gaussian_batch(1, 300, 4, {0, 0, 0, 0}, 1.0f, 41);
    SaeTrainConfig cfg;
    cfg.latent_dim = 8;
    cfg.epochs = 2;
    cfg.seed = 3;
    const auto a = train_sae({batch}, cfg);
    const auto b = train_sae({batch}, cfg);
    CHECK(checksum_floats(a.w_enc) == checksum_floats(b.w_enc));
    CHECK(checksum_floats(a.theta) == checksum_floats(b.theta));

    const auto tiny = testutil::gaussian_batch(1, 10, 4, {0, 0, 0, 0}, 1.0f, 42);
    CHECK_THROWS_AS(train_sae({tiny}, cfg), DataError);
}

TEST_CASE("sae checkpoint round-trips") {
    const auto p = random_params(4, 8, 77);
    const auto dir = testutil::fresh_tmpdir("sae");
    save_sae(dir, p);
    CHECK(sae_exists(dir, 1));
    CHECK_FALSE(sae_exists(dir, 3));
    const auto back = load_sae(dir, 1);
    CHECK(back.w_enc == p.w_enc);
    CHECK(back.w_dec == p.w_dec);
    CHECK(back.theta == p.theta);
    CHECK_THROWS_AS(load_sae(dir, 3), MissingArtifactError);
}

TEST_CASE("latent means agree between streaming and post-hoc encoding") {
    using testutil::StubModel;
    StubModel model(2, 4, 4, 32, [](int layer, HookSite site, int pos, TokenId tok, std::span<float> row) {
        if (site == HookSite::residual_post)
            for (std::size_t i = 0; i < row.size(); ++i)
                row[i] = 0.1f * static_cast<float>((layer + 1) * (1 + (pos + tok) % 5)) +
                         0.01f * static_cast<float>(i);
    });
    TokenCorpus corpus;
    corpus.language = "xx";
    for (int dnum = 0; dnum < 6; ++dnum) {
        std::vector<TokenId> doc;
        for (int i = 0; i < 12; ++i) doc.push_back(1 + (dnum + i) % 9);
        for (TokenId t : doc) corpus.vocab_slice.insert(t);
        corpus.documents.push_back(doc);
    }
    const auto p = random_params(4, 8, 55);
    auto q = p;
    q.layer = 1;

    const auto streaming = mean_latent_streaming(model, corpus, q, 1000);

    // post-hoc route: materialize every row, then encode the stored batch
    ActivationBatch all;
    all.layer = 1;
    all.site = HookSite::residual_post;
    all.dim = 4;
    for (const auto& doc : corpus.documents) {
        const auto cap = model.forward_capture(doc, {{1, HookSite::residual_post}});
        const auto& b = cap.at({1, HookSite::residual_post});
        for (std::size_t r = 0; r < b.n_rows(); ++r) all.push_row(b.row(r));
    }
    const auto posthoc = mean_latent_of_batch(q, all);
    REQUIRE(streaming.size() == posthoc.size());
    for (std::size_t i = 0; i < streaming.size(); ++i)
        CHECK(streaming[i] == doctest::Approx(posthoc[i]).epsilon(1e-4));
}
