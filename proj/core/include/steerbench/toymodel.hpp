#pragma once

#include <filesystem>
#include <memory>

#include "steerbench/hookedmodel.hpp"

namespace steerbench {

struct ToyConfig {
    int n_layers = 4;
    int hidden_dim = 64;
    int mlp_dim = 256;
    int n_heads = 2;
    int max_seq = 128;
    std::int32_t vocab_size = 0;  // set from corpora when 0
    int steps = 400;
    int batch_size = 16;
    float learning_rate = 3e-3f;
    float grad_clip = 1.0f;
    float heldout_fraction = 0.1f;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainReport {
    float final_loss = 0.0f;
    float heldout_loss = 0.0f;
    float heldout_accuracy = 0.0f;
    float heldout_perplexity = 0.0f;
    int steps_run = 0;
    bool untrained = false;  // set when steps == 0
};

// Decoder-only transformer: learned token + position embeddings, pre-LN blocks
// (causal multi-head attention, ReLU MLP), final LN, linear head. Small enough
// to train on a CPU in seconds, hooked per the HookedModel contract.
class ToyTransformer final : public HookedModel {
public:
    explicit ToyTransformer(const ToyConfig& cfg);  // random init, untrained

    static std::unique_ptr<ToyTransformer> train(const std::vector<TokenCorpus>& corpora,
                                                 ToyConfig cfg, TrainReport* report = nullptr);

    std::map<HookPoint, ActivationBatch> forward_capture(
        std::span<const TokenId> tokens, const std::vector<HookPoint>& capture,
        const std::vector<Intervention>& interventions = {}) const override;

    std::vector<TokenId> generate(std::span<const TokenId> prompt,
                                  const std::vector<Intervention>& interventions,
                                  const DecodingSpec& decoding) const override;

    std::unique_ptr<HookedModel> clone() const override;

    void save(const std::filesystem::path& base) const;  // base.bin + base.manifest
    static std::unique_ptr<ToyTransformer> load(const std::filesystem::path& base);

    std::uint64_t weights_checksum() const { return checksum_floats(params_); }
    bool untrained() const { return untrained_; }
    int trained_steps() const { return trained_steps_; }
    const ToyConfig& config() const { return cfg_; }

    // Trainer internals, also used by the finite-difference gradient tests.
    double batch_loss(std::span<const std::vector<TokenId>> seqs) const;
    void accumulate_grads(std::span<const std::vector<TokenId>> seqs,
                          std::vector<float>& grads) const;
    void heldout_metrics(std::span<const std::vector<TokenId>> seqs, double* loss,
                         double* accuracy) const;
    std::vector<float>& params() { return params_; }
    const std::vector<float>& params() const { return params_; }

private:
    struct Block {
        std::size_t ln1_g, ln1_b, wq, wk, wv, wo;
        std::size_t ln2_g, ln2_b, w_in, b_in, w_out, b_out;
    };
    struct Layout {
        std::size_t tok_emb = 0, pos_emb = 0;
        std::vector<Block> blocks;
        std::size_t lnf_g = 0, lnf_b = 0, unemb = 0;
        std::size_t total = 0;
    };

    void build_layout();
    void init_params(std::uint64_t seed);

    // Streaming inference over one token; appends to the per-layer KV cache.
    struct StreamState;
    void step_token(StreamState& st, TokenId token, int pos,
                    const std::vector<Intervention>& interventions,
                    std::map<HookPoint, ActivationBatch>* capture) const;

    // Full-sequence forward with caches kept for backprop.
    struct SeqCache;
    double forward_seq(std::span<const TokenId> seq, SeqCache& cache,
                       std::size_t* correct = nullptr) const;
    void backward_seq(std::span<const TokenId> seq, const SeqCache& cache,
                      std::vector<float>& grads) const;

    ToyConfig cfg_;
    Layout layout_;
    std::vector<float> params_;
    bool untrained_ = true;
    int trained_steps_ = 0;
};

std::unique_ptr<ToyTransformer> train_toy_model(const std::vector<TokenCorpus>& corpora,
                                                const ToyConfig& cfg,
                                                TrainReport* report = nullptr);

}  // namespace steerbench
