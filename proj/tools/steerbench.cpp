#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "steerbench/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitMissingArtifact = 3;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--set", opts.overrides, "override a leaf key, e.g. --set methods.diffmean.alpha=4.0");
    cmd->add_option("--out", opts.out_dir, "output directory (overrides config out_dir)");
}

int run(const CommonOpts& opts, const std::function<void(const steerbench::RunConfig&)>& body) {
    try {
        std::optional<std::filesystem::path> out;
        if (!opts.out_dir.empty()) out = opts.out_dir;
        const auto config = steerbench::load_config(opts.config_path, opts.overrides, out);
        body(config);
        return kExitOk;
    } catch (const steerbench::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const steerbench::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-lingual language-steering toolkit"};
    app.require_subcommand(1);

    std::map<std::string, std::pair<CommonOpts, std::function<void(const steerbench::RunConfig&)>>>
        commands;
    commands["corpus"] = {{}, steerbench::cmd_corpus};
    commands["train"] = {{}, steerbench::cmd_train};
    commands["extract"] = {{}, steerbench::cmd_extract};
    commands["vectors"] = {{}, steerbench::cmd_vectors};
    commands["bench"] = {{}, steerbench::cmd_bench};
    commands["sweep"] = {{}, steerbench::cmd_sweep};
    commands["analyze"] = {{}, steerbench::cmd_analyze};

    const std::map<std::string, std::string> help = {
        {"corpus", "materialize corpora and the parallel question set"},
        {"train", "train the toy model on the materialized corpora"},
        {"extract", "stream corpora through the model and store per-language statistics"},
        {"vectors", "build steering directions, neuron sets and sparse autoencoders"},
        {"bench", "run the benchmark over all ordered language pairs"},
        {"sweep", "evaluate the layer x strength grid and select the best cell"},
        {"analyze", "emit cosine matrices, probe curves and layer profiles"},
    };

    for (auto& [name, entry] : commands) {
        auto* cmd = app.add_subcommand(name, help.at(name));
        add_common(cmd, entry.first);
    }

    CLI11_PARSE(app, argc, argv);

    for (auto& [name, entry] : commands)
        if (app.get_subcommand(name)->parsed()) return run(entry.first, entry.second);
    return kExitValidation;
}
