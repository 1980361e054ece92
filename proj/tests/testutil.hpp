#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <unistd.h>

#include "steerbench/extraction.hpp"
#include "steerbench/hookedmodel.hpp"

namespace steerbench::testutil {

// Hooked model with injectable activations, for driving extraction and metric
// code with known values. The activation rule fills each captured row; the
// generate rule decides continuations.
class StubModel final : public HookedModel {
public:
    using ActivationRule =
        std::function<void(int layer, HookSite site, int pos, TokenId token, std::span<float> row)>;
    using GenerateRule = std::function<std::vector<TokenId>(
        std::span<const TokenId> prompt, const std::vector<Intervention>& interventions)>;

    StubModel(int n_layers, int hidden_dim, int mlp_dim, std::int32_t vocab, ActivationRule rule)
        : rule_(std::move(rule)) {
        model_id_ = "stub";
        n_layers_ = n_layers;
        hidden_dim_ = hidden_dim;
        mlp_dim_ = mlp_dim;
        vocab_size_ = vocab;
    }

    void set_generate_rule(GenerateRule g) { gen_ = std::move(g); }
    void drop_capability(HookSite s) { capabilities_.erase(s); }

    std::map<HookPoint, ActivationBatch> forward_capture(
        std::span<const TokenId> tokens, const std::vector<HookPoint>& capture,
        const std::vector<Intervention>& interventions = {}) const override {
        validate_tokens(tokens);
        for (const auto& p : capture) validate_hook(p);
        std::map<HookPoint, ActivationBatch> out;
        for (const auto& p : capture) {
            ActivationBatch b;
            b.layer = p.layer;
            b.site = p.site;
            b.dim = site_dim(p.site);
            out.emplace(p, std::move(b));
        }
        std::vector<float> row;
        for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
            for (auto& [point, batch] : out) {
                row.assign(static_cast<std::size_t>(batch.dim), 0.0f);
                rule_(point.layer, point.site, static_cast<int>(pos), tokens[pos], row);
                for (const auto& iv : interventions)
                    if (iv.point == point) iv.fn(point, row);
                batch.push_row(row);
            }
        }
        return out;
    }

    std::vector<TokenId> generate(std::span<const TokenId> prompt,
                                  const std::vector<Intervention>& interventions,
                                  const DecodingSpec& decoding) const override {
        if (prompt.empty()) throw DataError("empty prompt");
        if (gen_) return gen_(prompt, interventions);
        return std::vector<TokenId>(static_cast<std::size_t>(decoding.max_new_tokens),
                                    prompt.back());
    }

    std::unique_ptr<HookedModel> clone() const override {
        return std::make_unique<StubModel>(*this);
    }

private:
    ActivationRule rule_;
    GenerateRule gen_;
};

inline ActivationBatch make_batch(int layer, const std::vector<std::vector<float>>& rows,
                                  const LanguageId& lang = "x",
                                  HookSite site = HookSite::residual_post) {
    ActivationBatch b;
    b.layer = layer;
    b.site = site;
    b.dim = static_cast<int>(rows.at(0).size());
    b.language = lang;
    for (const auto& r : rows) b.push_row(r);
    return b;
}

inline ActivationBatch gaussian_batch(int layer, std::size_t n, std::size_t dim,
                                      const std::vector<float>& mean, float std_dev,
                                      std::uint64_t seed, const LanguageId& lang = "x") {
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::normal_distribution<float> dist(0.0f, std_dev);
    ActivationBatch b;
    b.layer = layer;
    b.site = HookSite::residual_post;
    b.dim = static_cast<int>(dim);
    b.language = lang;
    std::vector<float> row(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) row[j] = mean.at(j) + dist(rng);
        b.push_row(row);
    }
    return b;
}

// Independent logistic-regression oracle: full-batch gradient descent, no
// bias, plain SGD. Used only to cross-check probe directions.
inline std::vector<double> logistic_oracle(const ActivationBatch& pos, const ActivationBatch& neg,
                                           int iters = 2000, double lr = 0.5) {
    const auto d = static_cast<std::size_t>(pos.dim);
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    const double n = static_cast<double>(pos.n_rows() + neg.n_rows());
    for (int it = 0; it < iters; ++it) {
        std::vector<double> g(d, 0.0);
        double gb = 0.0;
        auto accum = [&](const ActivationBatch& batch, double y) {
            for (std::size_t i = 0; i < batch.n_rows(); ++i) {
                const auto row = batch.row(i);
                double z = b;
                for (std::size_t j = 0; j < d; ++j) z += w[j] * row[j];
                const double p = 1.0 / (1.0 + std::exp(-z));
                for (std::size_t j = 0; j < d; ++j) g[j] += (p - y) * row[j];
                gb += (p - y);
            }
        };
        accum(pos, 1.0);
        accum(neg, 0.0);
        for (std::size_t j = 0; j < d; ++j) w[j] -= lr * g[j] / n;
        b -= lr * gb / n;
    }
    return w;
}

inline double angle_between(std::span<const float> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += b[i] * b[i];
    }
    const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return std::acos(std::fabs(c));  // directions compared up to sign
}

inline std::filesystem::path fresh_tmpdir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("steerbench_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace steerbench::testutil
