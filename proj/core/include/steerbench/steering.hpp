#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>

#include "steerbench/extraction.hpp"

namespace steerbench {

enum class VectorMethod { diffmean, probe, pca, lda, sae_diffmean };

std::string method_name(VectorMethod m);
VectorMethod parse_method(const std::string& s);

// A named steering vector. Stored raw; the apply-time formulas unit-normalize.
struct SteeringDirection {
    VectorMethod method = VectorMethod::diffmean;
    int layer = 0;
    LanguageId target;
    std::optional<LanguageId> source;   // set for diffmean / sae_diffmean
    std::vector<float> vector;          // R^d, or R^{d_SAE} for sae_diffmean
    std::vector<float> components;      // PCA only: U, row-major k x d
    int component_rows = 0;
    bool degenerate = false;            // zero vector; apply refuses
    bool low_confidence = false;        // LDA: classes barely separated

    double norm() const;
};

struct NeuronEntry {
    int layer = 0;
    int index = 0;
    float target_mean = 0.0f;  // mean activation of this neuron on the target language
};

struct NeuronRef {
    int layer = 0;
    int index = 0;
};

struct NeuronSet {
    LanguageId target;
    std::vector<NeuronEntry> entries;
    std::vector<NeuronRef> other_entries;  // selected neurons of the other languages
};

enum class LapeMode { additive, replacement };

// What to modify during generation, resolved against a direction store at run
// time. method names: none, baseline_english, baseline_target, diffmean, probe,
// pca, lda, sae_diffmean, lape.
struct InterventionSpec {
    std::string method = "none";
    std::vector<int> layers;
    float alpha = 0.0f;
    LapeMode mode = LapeMode::additive;
    bool deactivate_others = false;
};

// --- direction construction -------------------------------------------------

SteeringDirection diffmean_direction(const LanguageStats& stats_target,
                                     const LanguageStats& stats_source, int layer);

// delta = h + alpha * direction / ||direction||_2
std::vector<float> apply_additive(std::span<const float> h, const SteeringDirection& direction,
                                  float alpha);

struct ProbeConfig {
    int epochs = 10;
    int batch_size = 256;
    float learning_rate = 1e-2f;
    float holdout_fraction = 0.1f;
    std::uint64_t seed = 0;
};

struct ProbeReport {
    float heldout_accuracy = 0.0f;
    float final_loss = 0.0f;
    std::size_t n_train = 0;
    std::size_t n_heldout = 0;
};

// Binary logistic probe, target language vs pooled negatives (balanced by
// downsampling, equal shares per negative language). Direction = weight vector.
SteeringDirection train_probe(const ActivationBatch& positive,
                              const std::vector<ActivationBatch>& negatives,
                              const ProbeConfig& config, ProbeReport* report = nullptr);

// Top-k principal components of the centered batch; rows of the stored
// component matrix are orthonormal, ordered by descending explained variance.
SteeringDirection pca_components(const ActivationBatch& batch, int k);

// Project h onto the component subspace, reconstruct, take a unit step along
// the reconstruction. Near-zero projections skip the intervention.
std::vector<float> apply_pca(std::span<const float> h, const SteeringDirection& direction,
                             float alpha, std::atomic<std::size_t>* skip_counter = nullptr);

// v = (Sigma_w + lambda I)^-1 (mu_target - mu_other), lambda = 1e-4 tr(Sigma_w)/d.
SteeringDirection lda_direction(const ActivationBatch& target_batch,
                                const std::vector<ActivationBatch>& other_batches,
                                std::uint64_t seed = 0);

// Entropy filtering over cross-language activation probabilities, argmax
// assignment, then a per-(language, layer) budget of top_fraction * mlp_dim
// neurons ranked by probability mass. Ties break toward lower neuron index.
std::map<LanguageId, NeuronSet> lape_select(const std::map<LanguageId, LanguageStats>& stats,
                                            double top_fraction, double entropy_quantile);

// Neuron-level edit at one layer's MLP activation vector: listed entries are
// set per mode, other languages' neurons optionally zeroed, everything else
// untouched.
std::vector<float> lape_intervene(std::span<const float> h, const NeuronSet& set, int layer,
                                  float alpha, LapeMode mode, bool deactivate_others);

// --- prompting baselines ------------------------------------------------------

enum class PromptVariant { english_instruction, target_instruction };

struct InstructionTable {
    std::map<LanguageId, std::string> display_name;        // "de" -> "German"
    std::map<LanguageId, std::string> target_instruction;  // "de" -> "Antworte auf Deutsch."
};

const InstructionTable& default_instruction_table();

std::string prompt_baseline(const std::string& question, const LanguageId& target,
                            PromptVariant variant, const InstructionTable& templates);

// --- intervention packaging ---------------------------------------------------

Intervention make_additive_intervention(std::shared_ptr<const SteeringDirection> direction,
                                        float alpha);
Intervention make_pca_intervention(std::shared_ptr<const SteeringDirection> direction, float alpha,
                                   std::shared_ptr<std::atomic<std::size_t>> skip_counter = {});
std::vector<Intervention> make_lape_interventions(std::shared_ptr<const NeuronSet> set, float alpha,
                                                  LapeMode mode, bool deactivate_others,
                                                  int n_layers);

// --- vector store ---------------------------------------------------------------

void save_direction(const std::filesystem::path& root, const std::string& model_id,
                    const SteeringDirection& direction, const std::string& created_from);
SteeringDirection load_direction(const std::filesystem::path& root, const std::string& model_id,
                                 VectorMethod method, int layer, const LanguageId& target,
                                 const std::optional<LanguageId>& source);
bool direction_exists(const std::filesystem::path& root, const std::string& model_id,
                      VectorMethod method, int layer, const LanguageId& target,
                      const std::optional<LanguageId>& source);

void save_neuron_sets(const std::filesystem::path& root, const std::string& model_id,
                      const std::map<LanguageId, NeuronSet>& sets);
std::map<LanguageId, NeuronSet> load_neuron_sets(const std::filesystem::path& root,
                                                 const std::string& model_id);

}  // namespace steerbench
