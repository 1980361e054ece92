#include "steerbench/config.hpp"

#include <set>

#include <json.hpp>

namespace steerbench {

using nlohmann::json;

namespace {

const std::set<std::string>& known_methods() {
    static const std::set<std::string> k = {"none",  "baseline_english", "baseline_target",
                                            "diffmean", "probe",          "pca",
                                            "lda",      "lape",           "sae_diffmean"};
    return k;
}

MethodConfig parse_method_config(const json& j, const MethodConfig& base) {
    MethodConfig m = base;
    if (j.contains("layers")) m.layers = j.at("layers").get<std::vector<int>>();
    if (j.contains("alpha")) m.alpha = j.at("alpha").get<float>();
    if (j.contains("from_sweep")) m.from_sweep = j.at("from_sweep").get<bool>();
    if (j.contains("epochs")) m.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) m.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) m.learning_rate = j.at("learning_rate").get<float>();
    if (j.contains("k")) m.k = j.at("k").get<int>();
    if (j.contains("top_fraction")) m.top_fraction = j.at("top_fraction").get<double>();
    if (j.contains("entropy_quantile")) m.entropy_quantile = j.at("entropy_quantile").get<double>();
    if (j.contains("mode")) {
        const auto s = j.at("mode").get<std::string>();
        if (s == "additive") m.mode = LapeMode::additive;
        else if (s == "replacement") m.mode = LapeMode::replacement;
        else throw ConfigError("lape mode must be additive or replacement, got " + s);
    }
    if (j.contains("deactivate_others")) m.deactivate_others = j.at("deactivate_others").get<bool>();
    if (j.contains("latent_dim")) m.latent_dim = j.at("latent_dim").get<int>();
    if (j.contains("sae_epochs")) m.sae_epochs = j.at("sae_epochs").get<int>();
    if (j.contains("sae_learning_rate")) m.sae_learning_rate = j.at("sae_learning_rate").get<float>();
    if (j.contains("sparsity_weight")) m.sparsity_weight = j.at("sparsity_weight").get<float>();
    return m;
}

json method_config_json(const MethodConfig& m) {
    json j;
    j["layers"] = m.layers;
    j["alpha"] = m.alpha;
    j["from_sweep"] = m.from_sweep;
    j["epochs"] = m.epochs;
    j["batch_size"] = m.batch_size;
    j["learning_rate"] = m.learning_rate;
    j["k"] = m.k;
    j["top_fraction"] = m.top_fraction;
    j["entropy_quantile"] = m.entropy_quantile;
    j["mode"] = m.mode == LapeMode::additive ? "additive" : "replacement";
    j["deactivate_others"] = m.deactivate_others;
    j["latent_dim"] = m.latent_dim;
    j["sae_epochs"] = m.sae_epochs;
    j["sae_learning_rate"] = m.sae_learning_rate;
    j["sparsity_weight"] = m.sparsity_weight;
    return j;
}

void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key.path=value: " + assignment);
    const auto path = split(assignment.substr(0, eq), '.');
    const auto value_str = assignment.substr(eq + 1);
    json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
    json value;
    try {
        value = json::parse(value_str);
    } catch (const json::exception&) {
        value = value_str;  // plain string
    }
    (*node)[path.back()] = value;
}

}  // namespace

const MethodConfig& RunConfig::method(const std::string& name) const {
    auto it = methods.find(name);
    if (it == methods.end()) throw ConfigError("no configuration for method " + name);
    return it->second;
}

void RunConfig::validate() const {
    std::vector<std::string> problems;
    if (model_kind != "toy" && model_kind != "adapter")
        problems.push_back("model.kind must be toy or adapter");
    if (model_kind == "adapter" && adapter.name.empty())
        problems.push_back("model.adapter.name is required for adapter models");
    if (language_kind != "synthetic" && language_kind != "files")
        problems.push_back("languages.kind must be synthetic or files");
    if (language_kind == "synthetic") {
        if (n_languages < 2) problems.push_back("languages.n_languages must be >= 2");
        if (vocab_per_lang < kNumSlotCategories)
            problems.push_back("languages.vocab_per_lang must be >= " + std::to_string(kNumSlotCategories));
        if (docs_per_lang < 1) problems.push_back("languages.docs_per_lang must be >= 1");
    } else {
        if (corpus_files.size() < 2) problems.push_back("languages.files must map >= 2 languages");
        for (const auto& [lang, path] : corpus_files)
            if (lang.empty()) problems.push_back("languages.files contains an empty language id");
        if (lid_backend == "synthetic")
            problems.push_back("backends.lid=synthetic requires synthetic languages");
        if (judge_backend == "synthetic")
            problems.push_back("backends.judge=synthetic requires synthetic languages");
    }
    if (question_kind != "synthetic" && question_kind != "file")
        problems.push_back("questions.kind must be synthetic or file");
    if (question_kind == "synthetic" && question_count < 1)
        problems.push_back("questions.count must be >= 1");
    if (question_kind == "file" && question_path.empty())
        problems.push_back("questions.path is required when questions.kind=file");
    if (stats_max_tokens < static_cast<std::size_t>(toy.hidden_dim))
        problems.push_back("extraction.stats_max_tokens must be >= the hidden dimension");
    if (dataset_samples < 2) problems.push_back("extraction.dataset_samples must be >= 2");

    for (const auto& name : bench_methods) {
        if (!known_methods().count(name)) {
            problems.push_back("unknown bench method: " + name);
            continue;
        }
        const bool needs_cfg = name != "none" && name != "baseline_english" && name != "baseline_target";
        if (needs_cfg) {
            auto it = methods.find(name);
            if (it == methods.end()) {
                problems.push_back("bench method " + name + " has no methods." + name + " section");
            } else if (name != "lape" && it->second.layers.empty() && !it->second.from_sweep) {
                problems.push_back("methods." + name + ".layers must be non-empty (or from_sweep)");
            }
        }
    }
    if (!sweep_method.empty()) {
        if (!known_methods().count(sweep_method) || sweep_method == "none")
            problems.push_back("sweep.method is not a steerable method: " + sweep_method);
    }
    if (judge_backend != "synthetic" && judge_backend != "external")
        problems.push_back("backends.judge must be synthetic or external");
    if (judge_backend == "external" && judge_endpoint.base_url.empty())
        problems.push_back("backends.judge_endpoint.base_url required for the external judge");
    if (decoding.max_new_tokens < 1) problems.push_back("decoding.max_new_tokens must be >= 1");

    try {
        toy.validate();
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }

    if (!problems.empty()) {
        std::string msg = "configuration invalid (" + std::to_string(problems.size()) + " problems):";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ConfigError(msg);
    }
}

RunConfig default_toy_config() {
    RunConfig c;
    c.seed = 7;
    c.toy.steps = 500;
    c.toy.batch_size = 16;
    c.sweep_layers = {0, 1, 2, 3};
    c.sweep_alphas = {0.0f, 2.0f, 4.0f, 8.0f, 16.0f, 32.0f};

    // The toy model's residual norms grow to ~50 by the last layer, so useful
    // strengths sit well above the single digits.
    MethodConfig diffmean;
    diffmean.layers = {3};
    diffmean.alpha = 32.0f;
    c.methods["diffmean"] = diffmean;

    MethodConfig probe;
    probe.layers = {3};
    probe.alpha = 32.0f;
    c.methods["probe"] = probe;

    MethodConfig pca;
    pca.layers = {0};
    pca.alpha = 16.0f;
    pca.k = 8;
    c.methods["pca"] = pca;

    MethodConfig lda;
    lda.layers = {3};
    lda.alpha = 32.0f;
    c.methods["lda"] = lda;

    MethodConfig lape;
    lape.alpha = 1.0f;
    c.methods["lape"] = lape;

    MethodConfig sae;
    sae.layers = {2};
    sae.alpha = 32.0f;
    c.methods["sae_diffmean"] = sae;
    return c;
}

RunConfig config_from_json(const std::string& json_text, const std::vector<std::string>& overrides,
                           const std::optional<std::filesystem::path>& out_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);

    RunConfig c = default_toy_config();
    try {
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.contains("kind")) c.model_kind = m.at("kind").get<std::string>();
            if (m.contains("n_layers")) c.toy.n_layers = m.at("n_layers").get<int>();
            if (m.contains("hidden_dim")) c.toy.hidden_dim = m.at("hidden_dim").get<int>();
            if (m.contains("mlp_dim")) c.toy.mlp_dim = m.at("mlp_dim").get<int>();
            if (m.contains("n_heads")) c.toy.n_heads = m.at("n_heads").get<int>();
            if (m.contains("max_seq")) c.toy.max_seq = m.at("max_seq").get<int>();
            if (m.contains("steps")) c.toy.steps = m.at("steps").get<int>();
            if (m.contains("batch_size")) c.toy.batch_size = m.at("batch_size").get<int>();
            if (m.contains("learning_rate")) c.toy.learning_rate = m.at("learning_rate").get<float>();
            if (m.contains("adapter")) {
                const auto& a = m.at("adapter");
                if (a.contains("name")) c.adapter.name = a.at("name").get<std::string>();
                if (a.contains("params"))
                    for (const auto& [k, v] : a.at("params").items())
                        c.adapter.params[k] = v.is_string() ? v.get<std::string>() : v.dump();
            }
        }
        if (j.contains("languages")) {
            const auto& l = j.at("languages");
            if (l.contains("kind")) c.language_kind = l.at("kind").get<std::string>();
            if (l.contains("n_languages")) c.n_languages = l.at("n_languages").get<int>();
            if (l.contains("vocab_per_lang")) c.vocab_per_lang = l.at("vocab_per_lang").get<int>();
            if (l.contains("docs_per_lang")) c.docs_per_lang = l.at("docs_per_lang").get<int>();
            if (l.contains("max_tokens_per_language"))
                c.max_tokens_per_language = l.at("max_tokens_per_language").get<std::size_t>();
            if (l.contains("files"))
                for (const auto& [k, v] : l.at("files").items())
                    c.corpus_files[k] = std::filesystem::path(v.get<std::string>());
        }
        if (j.contains("questions")) {
            const auto& q = j.at("questions");
            if (q.contains("kind")) c.question_kind = q.at("kind").get<std::string>();
            if (q.contains("count")) c.question_count = q.at("count").get<int>();
            if (q.contains("path")) c.question_path = q.at("path").get<std::string>();
        }
        if (j.contains("extraction")) {
            const auto& e = j.at("extraction");
            if (e.contains("stats_max_tokens"))
                c.stats_max_tokens = e.at("stats_max_tokens").get<std::size_t>();
            if (e.contains("dataset_samples"))
                c.dataset_samples = e.at("dataset_samples").get<std::size_t>();
        }
        if (j.contains("methods")) {
            for (const auto& [name, mj] : j.at("methods").items()) {
                if (name == "bench") {
                    c.bench_methods = mj.get<std::vector<std::string>>();
                    continue;
                }
                const MethodConfig base =
                    c.methods.count(name) ? c.methods.at(name) : MethodConfig{};
                c.methods[name] = parse_method_config(mj, base);
            }
        }
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            if (s.contains("method")) c.sweep_method = s.at("method").get<std::string>();
            if (s.contains("layers")) c.sweep_layers = s.at("layers").get<std::vector<int>>();
            if (s.contains("alphas")) c.sweep_alphas = s.at("alphas").get<std::vector<float>>();
        }
        if (j.contains("backends")) {
            const auto& b = j.at("backends");
            if (b.contains("lid")) c.lid_backend = b.at("lid").get<std::string>();
            if (b.contains("judge")) c.judge_backend = b.at("judge").get<std::string>();
            if (b.contains("judge_endpoint")) {
                const auto& e = b.at("judge_endpoint");
                if (e.contains("base_url")) c.judge_endpoint.base_url = e.at("base_url").get<std::string>();
                if (e.contains("endpoint")) c.judge_endpoint.endpoint = e.at("endpoint").get<std::string>();
                if (e.contains("model")) c.judge_endpoint.model = e.at("model").get<std::string>();
                if (e.contains("auth_env_var"))
                    c.judge_endpoint.auth_env_var = e.at("auth_env_var").get<std::string>();
                if (e.contains("timeout_seconds"))
                    c.judge_endpoint.timeout_seconds = e.at("timeout_seconds").get<int>();
                if (e.contains("max_in_flight"))
                    c.judge_endpoint.max_in_flight = e.at("max_in_flight").get<int>();
            }
        }
        if (j.contains("decoding")) {
            const auto& d = j.at("decoding");
            if (d.contains("max_new_tokens")) c.decoding.max_new_tokens = d.at("max_new_tokens").get<int>();
            if (d.contains("greedy")) c.decoding.greedy = d.at("greedy").get<bool>();
            if (d.contains("temperature")) c.decoding.temperature = d.at("temperature").get<double>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
    c.toy.seed = c.seed;
    if (out_dir) c.out_dir = *out_dir;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      const std::optional<std::filesystem::path>& out_dir) {
    return config_from_json(read_text(path), overrides, out_dir);
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir.string();
    j["model"] = {{"kind", c.model_kind},
                  {"n_layers", c.toy.n_layers},
                  {"hidden_dim", c.toy.hidden_dim},
                  {"mlp_dim", c.toy.mlp_dim},
                  {"n_heads", c.toy.n_heads},
                  {"max_seq", c.toy.max_seq},
                  {"steps", c.toy.steps},
                  {"batch_size", c.toy.batch_size},
                  {"learning_rate", c.toy.learning_rate}};
    j["languages"] = {{"kind", c.language_kind},
                      {"n_languages", c.n_languages},
                      {"vocab_per_lang", c.vocab_per_lang},
                      {"docs_per_lang", c.docs_per_lang},
                      {"max_tokens_per_language", c.max_tokens_per_language}};
    if (!c.corpus_files.empty()) {
        json files;
        for (const auto& [k, v] : c.corpus_files) files[k] = v.string();
        j["languages"]["files"] = files;
    }
    j["questions"] = {{"kind", c.question_kind}, {"count", c.question_count}};
    if (!c.question_path.empty()) j["questions"]["path"] = c.question_path.string();
    j["extraction"] = {{"stats_max_tokens", c.stats_max_tokens},
                       {"dataset_samples", c.dataset_samples}};
    json methods;
    methods["bench"] = c.bench_methods;
    for (const auto& [name, m] : c.methods) methods[name] = method_config_json(m);
    j["methods"] = methods;
    j["sweep"] = {{"method", c.sweep_method}, {"layers", c.sweep_layers}, {"alphas", c.sweep_alphas}};
    j["backends"] = {{"lid", c.lid_backend}, {"judge", c.judge_backend}};
    j["decoding"] = {{"max_new_tokens", c.decoding.max_new_tokens},
                     {"greedy", c.decoding.greedy},
                     {"temperature", c.decoding.temperature}};
    return j.dump(2) + "\n";
}

}  // namespace steerbench
