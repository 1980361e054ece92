#pragma once

#include <filesystem>

#include "steerbench/steering.hpp"

namespace steerbench {

// JumpReLU sparse autoencoder for one layer's residual stream.
struct SAEParams {
    int layer = 0;
    int input_dim = 0;   // d
    int latent_dim = 0;  // d_SAE >= d
    std::vector<float> w_enc;  // latent_dim x input_dim, row-major
    std::vector<float> b_enc;  // latent_dim
    std::vector<float> w_dec;  // input_dim x latent_dim, row-major
    std::vector<float> b_dec;  // input_dim
    std::vector<float> theta;  // latent_dim, per-latent thresholds >= 0
    std::uint64_t seed = 0;
    bool untrained = false;

    void validate() const;
};

// z * 1[z > theta], strict inequality.
std::vector<float> jumprelu(std::span<const float> z, std::span<const float> theta);

// f = jumprelu(W_enc h + b_enc, theta). Optionally reports the fraction of
// zero latents.
std::vector<float> sae_encode(const SAEParams& params, std::span<const float> h,
                              float* sparsity = nullptr);

// W_dec f + b_dec
std::vector<float> sae_decode(const SAEParams& params, std::span<const float> f);

// Latent-space mean difference, target minus source.
SteeringDirection sae_diffmean_direction(std::span<const float> mean_f_target,
                                         std::span<const float> mean_f_source, int layer,
                                         const LanguageId& target, const LanguageId& source);

// decode(encode(h) + alpha * unit(delta)) + (h - decode(encode(h)));
// the correction term makes alpha = 0 an exact identity.
std::vector<float> sae_intervene(const SAEParams& params, std::span<const float> h,
                                 std::span<const float> delta, float alpha);

Intervention make_sae_intervention(std::shared_ptr<const SAEParams> params,
                                   std::shared_ptr<const SteeringDirection> direction, float alpha);

struct SaeTrainConfig {
    int latent_dim = 0;  // 0: 4 * input_dim
    int epochs = 4;
    int batch_size = 64;
    float learning_rate = 1e-3f;
    float sparsity_weight = 1e-3f;     // L0 surrogate weight
    float threshold_bandwidth = 0.05f; // straight-through kernel width for theta
    std::uint64_t seed = 0;
};

struct SaeTrainReport {
    float mse = 0.0f;           // per-dim reconstruction error on the pool
    float baseline_mse = 0.0f;  // constant-mean predictor on the same pool
    float mean_sparsity = 0.0f; // fraction of zero latents
    bool untrained = false;
};

// Reconstruction + L0-surrogate training with straight-through threshold
// gradients. epochs = 0 returns identity-initialized params with the
// untrained flag set.
SAEParams train_sae(const std::vector<ActivationBatch>& batches, const SaeTrainConfig& config,
                    SaeTrainReport* report = nullptr);

// Latent means via the two routes the tests cross-check: streaming
// encode-as-you-extract, and post-hoc encode of a stored batch.
std::vector<float> mean_latent_streaming(const HookedModel& model, const TokenCorpus& corpus,
                                         const SAEParams& params, std::size_t max_tokens);
std::vector<float> mean_latent_of_batch(const SAEParams& params, const ActivationBatch& batch);

// Checkpoint: manifest + five float32 arrays under <root>/layer<k>/.
void save_sae(const std::filesystem::path& root, const SAEParams& params);
SAEParams load_sae(const std::filesystem::path& root, int layer);
bool sae_exists(const std::filesystem::path& root, int layer);

}  // namespace steerbench
