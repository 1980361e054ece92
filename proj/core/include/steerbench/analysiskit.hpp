#pragma once

#include <filesystem>

#include "steerbench/steering.hpp"

namespace steerbench {

// Pairwise cosine similarities over a set of per-language vectors. Degenerate
// (zero) vectors get NaN rows/columns rather than fake values.
struct SimilarityMatrix {
    std::vector<LanguageId> labels;
    std::vector<double> values;  // n x n
    std::string layer_scope;     // "layer k" or "averaged over all layers"

    double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
    void validate() const;  // symmetry + unit diagonal for non-degenerate entries
};

SimilarityMatrix cosine_matrix(const std::map<LanguageId, std::vector<float>>& vectors);
SimilarityMatrix average_matrices(const std::vector<SimilarityMatrix>& matrices);

// One scalar per layer (neuron counts, probe accuracy, Fisher ratio, ...).
struct LayerProfile {
    std::string name;
    std::vector<double> values;
};

struct NeuronDistribution {
    std::map<LanguageId, LayerProfile> per_language;
    LayerProfile pooled;
};

NeuronDistribution neuron_layer_distribution(const std::map<LanguageId, NeuronSet>& sets,
                                             int n_layers);

struct ProbeCurve {
    LayerProfile accuracy;  // mean one-vs-rest heldout accuracy per layer
    LayerProfile loss;      // mean final training loss per layer
};

// per_layer_batches[l] holds one batch per language at layer l.
ProbeCurve probe_layer_curve(const std::vector<std::vector<ActivationBatch>>& per_layer_batches,
                             const ProbeConfig& config);

// (mu1 - mu2)^2 / (var1 + var2) of the projections onto v, population variances.
// Zero pooled variance returns +inf and sets the flag.
double fisher_ratio(const ActivationBatch& target_batch, const ActivationBatch& other_batch,
                    std::span<const float> v, bool* degenerate = nullptr);

// Mean within-family vs cross-family cosine, per a language -> family map.
struct FamilyClusteringReport {
    double within_mean = 0.0;
    double cross_mean = 0.0;
    std::size_t within_pairs = 0;
    std::size_t cross_pairs = 0;
};

FamilyClusteringReport family_clustering(const SimilarityMatrix& matrix,
                                         const std::map<LanguageId, std::string>& family_map);

// Exports: labeled CSV and plot-data JSON (series name -> values).
void write_matrix_csv(const std::filesystem::path& path, const SimilarityMatrix& m);
void write_profiles_csv(const std::filesystem::path& path,
                        const std::vector<LayerProfile>& profiles);
void write_profiles_json(const std::filesystem::path& path,
                         const std::vector<LayerProfile>& profiles);

}  // namespace steerbench
