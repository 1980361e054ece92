#pragma once

#include "steerbench/analysiskit.hpp"
#include "steerbench/config.hpp"

namespace steerbench {

// Command bodies behind the CLI. Each is idempotent for a fixed config + seed
// (outputs are rewritten atomically) and throws MissingArtifactError naming the
// producing command when an upstream artifact is absent.
void cmd_corpus(const RunConfig& config);
void cmd_train(const RunConfig& config);
void cmd_extract(const RunConfig& config);
void cmd_vectors(const RunConfig& config);
void cmd_bench(const RunConfig& config);
void cmd_sweep(const RunConfig& config);
void cmd_analyze(const RunConfig& config);

// Shared artifact paths under config.out_dir.
struct ArtifactPaths {
    std::filesystem::path family_json;
    std::filesystem::path corpus_dir;
    std::filesystem::path questions_csv;
    std::filesystem::path model_base;  // + .bin / .manifest
    std::filesystem::path train_report;
    std::filesystem::path stats_root;
    std::filesystem::path vectors_root;
    std::filesystem::path sae_root;
    std::filesystem::path bench_dir;
    std::filesystem::path sweep_dir;
    std::filesystem::path analysis_dir;
};
ArtifactPaths artifact_paths(const RunConfig& config);

// Rebuilds the synthetic family + questions recorded by cmd_corpus.
struct LoadedWorkspace {
    SyntheticFamily family;
    SyntheticQuestions questions;
};
LoadedWorkspace load_workspace(const RunConfig& config);

// Reads the sweep's selected cell (layer, alpha) for a method.
std::pair<int, float> load_sweep_selection(const RunConfig& config, const std::string& method);

}  // namespace steerbench
