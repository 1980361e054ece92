#pragma once

#include <filesystem>

#include "steerbench/hookedmodel.hpp"

namespace steerbench {

// Per-language, per-layer running statistics: residual-stream means plus, when
// the model exposes MLP activations, each neuron's exceed-zero frequency and
// mean activation.
struct LanguageStats {
    LanguageId language;
    std::string model_id;
    std::size_t token_count = 0;
    int n_layers = 0;
    int hidden_dim = 0;
    int mlp_dim = 0;
    std::vector<std::vector<float>> residual_mean;  // [L][d]
    std::vector<std::vector<float>> neuron_prob;    // [L][m], empty without mlp hooks
    std::vector<std::vector<float>> neuron_mean;    // [L][m]

    bool has_neuron_stats() const { return !neuron_prob.empty(); }
    void validate() const;
};

// Single pass over the first max_tokens token positions of the corpus,
// compensated summation throughout.
LanguageStats collect_stats(const HookedModel& model, const TokenCorpus& corpus,
                            std::size_t max_tokens);

// Count-weighted merge for split collection jobs; associative.
LanguageStats merge_stats(const LanguageStats& a, const LanguageStats& b);

// One stats job per language, fanned out over worker threads; results are in
// corpus order regardless of scheduling.
std::vector<LanguageStats> collect_stats_all(const HookedModel& model,
                                             const std::vector<TokenCorpus>& corpora,
                                             std::size_t max_tokens);

struct DatasetSample {
    ActivationBatch batch;
    bool saturated = false;  // fewer positions than requested; all were taken
};

// Residual rows at one layer, sampled uniformly without replacement from token
// positions.
DatasetSample collect_dataset(const HookedModel& model, const TokenCorpus& corpus, int layer,
                              std::size_t n_samples, std::uint64_t seed);

// On-disk stats store: <root>/<model_id>/<language>/ holding a manifest and one
// float32 array per statistic.
void save_stats(const std::filesystem::path& root, const LanguageStats& stats);
LanguageStats load_stats(const std::filesystem::path& root, const std::string& model_id,
                         const LanguageId& language);

}  // namespace steerbench
