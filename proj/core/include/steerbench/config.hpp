#pragma once

#include <filesystem>
#include <optional>

#include "steerbench/evalbench.hpp"

namespace steerbench {

struct MethodConfig {
    std::vector<int> layers;
    float alpha = 0.0f;
    bool from_sweep = false;  // resolve (layer, alpha) from the sweep's selected cell
    // probe
    int epochs = 10;
    int batch_size = 256;
    float learning_rate = 1e-2f;
    // pca
    int k = 8;
    // lape
    double top_fraction = 0.01;
    double entropy_quantile = 0.05;
    LapeMode mode = LapeMode::additive;
    bool deactivate_others = true;
    // sae
    int latent_dim = 0;
    int sae_epochs = 4;
    float sae_learning_rate = 1e-3f;
    float sparsity_weight = 1e-3f;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";

    // model
    std::string model_kind = "toy";  // toy | adapter
    ToyConfig toy;
    AdapterDescriptor adapter;

    // languages
    std::string language_kind = "synthetic";  // synthetic | files
    int n_languages = 4;
    int vocab_per_lang = 64;
    int docs_per_lang = 300;
    std::map<LanguageId, std::filesystem::path> corpus_files;
    std::size_t max_tokens_per_language = 500000;  // sampling cap for file corpora

    // questions
    std::string question_kind = "synthetic";  // synthetic | file
    int question_count = 12;
    std::filesystem::path question_path;

    // extraction
    std::size_t stats_max_tokens = 200000;
    std::size_t dataset_samples = 20000;

    // methods
    std::vector<std::string> bench_methods = {"none", "diffmean"};
    std::map<std::string, MethodConfig> methods;

    // sweep
    std::string sweep_method = "diffmean";
    std::vector<int> sweep_layers;
    std::vector<float> sweep_alphas;

    // backends
    std::string lid_backend = "synthetic";
    std::string judge_backend = "synthetic";
    JudgeClientConfig judge_endpoint;

    DecodingSpec decoding;

    // Collects every violation before throwing, so a bad config reports all of
    // its problems at once.
    void validate() const;

    const MethodConfig& method(const std::string& name) const;
};

RunConfig default_toy_config();

// JSON file + dotted-path overrides ("methods.diffmean.alpha=4.0").
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {},
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);
RunConfig config_from_json(const std::string& json_text,
                           const std::vector<std::string>& overrides = {},
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string config_to_json(const RunConfig& config);

}  // namespace steerbench
