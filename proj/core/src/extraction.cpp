#include "steerbench/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

namespace steerbench {

void LanguageStats::validate() const {
    if (token_count == 0) throw DataError("stats for " + language + " cover zero tokens");
    auto check_finite = [this](const std::vector<std::vector<float>>& arr, const char* what) {
        for (const auto& layer : arr)
            for (float v : layer)
                if (!std::isfinite(v)) throw DataError(std::string(what) + " has non-finite entry for " + language);
    };
    check_finite(residual_mean, "residual_mean");
    check_finite(neuron_mean, "neuron_mean");
    for (const auto& layer : neuron_prob)
        for (float v : layer)
            if (!(v >= 0.0f && v <= 1.0f))
                throw DataError("neuron_prob outside [0,1] for " + language);
}

LanguageStats collect_stats(const HookedModel& model, const TokenCorpus& corpus,
                            std::size_t max_tokens) {
    const auto d = static_cast<std::size_t>(model.hidden_dim());
    const auto m = static_cast<std::size_t>(model.mlp_dim());
    const auto L = static_cast<std::size_t>(model.n_layers());
    if (max_tokens < d)
        throw ConfigError("collect_stats: max_tokens must be >= hidden_dim (" + std::to_string(d) + ")");

    const bool neuron = model.supports(HookSite::mlp_activation);
    std::vector<HookPoint> capture;
    for (std::size_t l = 0; l < L; ++l) {
        capture.push_back({static_cast<int>(l), HookSite::residual_post});
        if (neuron) capture.push_back({static_cast<int>(l), HookSite::mlp_activation});
    }

    std::vector<std::vector<KahanSum>> res_sum(L, std::vector<KahanSum>(d));
    std::vector<std::vector<KahanSum>> act_sum;
    std::vector<std::vector<std::size_t>> act_pos_count;
    if (neuron) {
        act_sum.assign(L, std::vector<KahanSum>(m));
        act_pos_count.assign(L, std::vector<std::size_t>(m, 0));
    }

    std::size_t seen = 0;
    for (const auto& doc : corpus.documents) {
        if (seen >= max_tokens) break;
        const std::size_t take = std::min(doc.size(), max_tokens - seen);
        if (take == 0) break;
        std::span<const TokenId> tokens(doc.data(), take);
        auto batches = model.forward_capture(tokens, capture);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& rb = batches.at({static_cast<int>(l), HookSite::residual_post});
            for (std::size_t r = 0; r < rb.n_rows(); ++r) {
                const auto row = rb.row(r);
                for (std::size_t i = 0; i < d; ++i) res_sum[l][i].add(row[i]);
            }
            if (neuron) {
                const auto& ab = batches.at({static_cast<int>(l), HookSite::mlp_activation});
                for (std::size_t r = 0; r < ab.n_rows(); ++r) {
                    const auto row = ab.row(r);
                    for (std::size_t i = 0; i < m; ++i) {
                        act_sum[l][i].add(row[i]);
                        if (row[i] > 0.0f) ++act_pos_count[l][i];
                    }
                }
            }
        }
        seen += take;
    }
    if (seen < d)
        throw DataError("insufficient data: corpus " + corpus.language + " yielded " +
                        std::to_string(seen) + " tokens, need at least " + std::to_string(d));

    LanguageStats stats;
    stats.language = corpus.language;
    stats.model_id = model.model_id();
    stats.token_count = seen;
    stats.n_layers = static_cast<int>(L);
    stats.hidden_dim = static_cast<int>(d);
    stats.mlp_dim = static_cast<int>(m);
    const double inv = 1.0 / static_cast<double>(seen);
    stats.residual_mean.assign(L, std::vector<float>(d));
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t i = 0; i < d; ++i)
            stats.residual_mean[l][i] = static_cast<float>(res_sum[l][i].value() * inv);
    if (neuron) {
        stats.neuron_prob.assign(L, std::vector<float>(m));
        stats.neuron_mean.assign(L, std::vector<float>(m));
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t i = 0; i < m; ++i) {
                stats.neuron_prob[l][i] = static_cast<float>(static_cast<double>(act_pos_count[l][i]) * inv);
                stats.neuron_mean[l][i] = static_cast<float>(act_sum[l][i].value() * inv);
            }
    }
    stats.validate();
    return stats;
}

LanguageStats merge_stats(const LanguageStats& a, const LanguageStats& b) {
    if (a.language != b.language || a.model_id != b.model_id)
        throw DataError("cannot merge stats from different languages or models");
    if (a.n_layers != b.n_layers || a.hidden_dim != b.hidden_dim || a.mlp_dim != b.mlp_dim ||
        a.has_neuron_stats() != b.has_neuron_stats())
        throw DataError("cannot merge stats with mismatched shapes");

    LanguageStats out = a;
    out.token_count = a.token_count + b.token_count;
    const double wa = static_cast<double>(a.token_count) / static_cast<double>(out.token_count);
    const double wb = 1.0 - wa;
    auto blend = [wa, wb](std::vector<std::vector<float>>& dst, const std::vector<std::vector<float>>& src) {
        for (std::size_t l = 0; l < dst.size(); ++l)
            for (std::size_t i = 0; i < dst[l].size(); ++i)
                dst[l][i] = static_cast<float>(wa * dst[l][i] + wb * src[l][i]);
    };
    blend(out.residual_mean, b.residual_mean);
    if (out.has_neuron_stats()) {
        blend(out.neuron_prob, b.neuron_prob);
        blend(out.neuron_mean, b.neuron_mean);
    }
    return out;
}

std::vector<LanguageStats> collect_stats_all(const HookedModel& model,
                                             const std::vector<TokenCorpus>& corpora,
                                             std::size_t max_tokens) {
    std::vector<LanguageStats> out(corpora.size());
    std::vector<std::exception_ptr> errors(corpora.size());
    parallel_for(corpora.size(), [&](std::size_t i) {
        try {
            out[i] = collect_stats(model, corpora[i], max_tokens);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

DatasetSample collect_dataset(const HookedModel& model, const TokenCorpus& corpus, int layer,
                              std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 2) throw ConfigError("collect_dataset: n_samples must be >= 2");
    const std::size_t total = corpus.token_count();
    if (total == 0) throw DataError("empty corpus: " + corpus.language);
    model.validate_hook({layer, HookSite::residual_post});

    DatasetSample out;
    out.saturated = n_samples >= total;
    const std::size_t n = std::min(n_samples, total);

    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    if (out.saturated) {
        for (std::size_t i = 0; i < total; ++i) chosen.push_back(i);
    } else {
        std::vector<std::size_t> all(total);
        for (std::size_t i = 0; i < total; ++i) all[i] = i;
        std::mt19937 rng(static_cast<std::uint32_t>(seed ^ 0xda7a5e7ull));
        std::sample(all.begin(), all.end(), std::back_inserter(chosen), n, rng);
    }

    auto& batch = out.batch;
    batch.layer = layer;
    batch.site = HookSite::residual_post;
    batch.dim = model.hidden_dim();
    batch.language = corpus.language;
    batch.rows.reserve(chosen.size() * static_cast<std::size_t>(batch.dim));

    const std::vector<HookPoint> capture = {{layer, HookSite::residual_post}};
    std::size_t base = 0;      // global position of the current document start
    std::size_t next = 0;      // index into chosen (sorted ascending)
    for (const auto& doc : corpus.documents) {
        if (next >= chosen.size()) break;
        const std::size_t end = base + doc.size();
        if (chosen[next] < end) {
            auto captured = model.forward_capture(doc, capture);
            const auto& rb = captured.at(capture[0]);
            while (next < chosen.size() && chosen[next] < end)
                batch.push_row(rb.row(chosen[next++] - base));
        }
        base = end;
    }
    return out;
}

void save_stats(const std::filesystem::path& root, const LanguageStats& stats) {
    const auto dir = root / stats.model_id / stats.language;
    std::filesystem::create_directories(dir);
    auto flat = [](const std::vector<std::vector<float>>& arr) {
        std::vector<float> out;
        for (const auto& l : arr) out.insert(out.end(), l.begin(), l.end());
        return out;
    };
    nlohmann::json man;
    man["language"] = stats.language;
    man["model_id"] = stats.model_id;
    man["token_count"] = stats.token_count;
    man["n_layers"] = stats.n_layers;
    man["hidden_dim"] = stats.hidden_dim;
    man["mlp_dim"] = stats.mlp_dim;
    man["has_neuron_stats"] = stats.has_neuron_stats();
    atomic_write_text(dir / "manifest.json", man.dump(2) + "\n");
    write_f32(dir / "residual_mean.f32", flat(stats.residual_mean));
    if (stats.has_neuron_stats()) {
        write_f32(dir / "neuron_prob.f32", flat(stats.neuron_prob));
        write_f32(dir / "neuron_mean.f32", flat(stats.neuron_mean));
    }
}

LanguageStats load_stats(const std::filesystem::path& root, const std::string& model_id,
                         const LanguageId& language) {
    const auto dir = root / model_id / language;
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw MissingArtifactError("no statistics at " + dir.string());
    const auto man = nlohmann::json::parse(read_text(dir / "manifest.json"));

    LanguageStats stats;
    stats.language = man.at("language").get<std::string>();
    stats.model_id = man.at("model_id").get<std::string>();
    stats.token_count = man.at("token_count").get<std::size_t>();
    stats.n_layers = man.at("n_layers").get<int>();
    stats.hidden_dim = man.at("hidden_dim").get<int>();
    stats.mlp_dim = man.at("mlp_dim").get<int>();

    auto unflat = [](const std::vector<float>& flat, std::size_t n_layers, std::size_t dim) {
        if (flat.size() != n_layers * dim) throw DataError("stats array has unexpected size");
        std::vector<std::vector<float>> out(n_layers, std::vector<float>(dim));
        for (std::size_t l = 0; l < n_layers; ++l)
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(l * dim), dim, out[l].begin());
        return out;
    };
    const auto L = static_cast<std::size_t>(stats.n_layers);
    stats.residual_mean = unflat(read_f32(dir / "residual_mean.f32"), L,
                                 static_cast<std::size_t>(stats.hidden_dim));
    if (man.at("has_neuron_stats").get<bool>()) {
        stats.neuron_prob = unflat(read_f32(dir / "neuron_prob.f32"), L,
                                   static_cast<std::size_t>(stats.mlp_dim));
        stats.neuron_mean = unflat(read_f32(dir / "neuron_mean.f32"), L,
                                   static_cast<std::size_t>(stats.mlp_dim));
    }
    stats.validate();
    return stats;
}

}  // namespace steerbench
