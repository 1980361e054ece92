#include "steerbench/pipeline.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace steerbench {

using nlohmann::json;

ArtifactPaths artifact_paths(const RunConfig& config) {
    ArtifactPaths p;
    const auto& out = config.out_dir;
    p.family_json = out / "family.json";
    p.corpus_dir = out / "corpus";
    p.questions_csv = out / "questions.csv";
    p.model_base = out / "model" / "toy";
    p.train_report = out / "model" / "train_report.json";
    p.stats_root = out / "stats";
    p.vectors_root = out / "vectors";
    p.sae_root = out / "sae";
    p.bench_dir = out / "bench";
    p.sweep_dir = out / "sweep";
    p.analysis_dir = out / "analysis";
    return p;
}

namespace {

void require_artifact(const std::filesystem::path& path, const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw MissingArtifactError("missing artifact " + path.string() + "; run `steerbench " +
                                   producer + "` first");
}

std::vector<std::pair<LanguageId, LanguageId>> ordered_pairs(const std::vector<LanguageId>& langs) {
    std::vector<std::pair<LanguageId, LanguageId>> out;
    for (const auto& s : langs)
        for (const auto& t : langs)
            if (s != t) out.emplace_back(s, t);
    return out;
}

std::unique_ptr<HookedModel> load_model(const RunConfig& config, const ArtifactPaths& paths) {
    if (config.model_kind == "adapter") return attach_external_adapter(config.adapter);
    require_artifact(std::filesystem::path(paths.model_base.string() + ".manifest"), "train");
    return ToyTransformer::load(paths.model_base);
}

InterventionSpec spec_for(const RunConfig& config, const std::string& name) {
    InterventionSpec spec;
    spec.method = name;
    if (name == "none" || name == "baseline_english" || name == "baseline_target") return spec;
    const auto& m = config.method(name);
    spec.alpha = m.alpha;
    spec.layers = m.layers;
    spec.mode = m.mode;
    spec.deactivate_others = m.deactivate_others;
    if (m.from_sweep) {
        const auto [layer, alpha] = load_sweep_selection(config, name);
        spec.layers = {layer};
        spec.alpha = alpha;
    }
    return spec;
}

// Loads every direction the configured bench methods could ask for.
InMemoryDirectionStore load_store(const RunConfig& config, const ArtifactPaths& paths,
                                  const HookedModel& model,
                                  const std::vector<LanguageId>& langs,
                                  const std::vector<std::string>& method_names,
                                  const std::vector<int>& extra_layers) {
    InMemoryDirectionStore store;
    auto layers_for = [&](const std::string& name) {
        std::vector<int> layers;
        if (config.methods.count(name)) layers = config.methods.at(name).layers;
        if (config.sweep_method == name)
            layers.insert(layers.end(), config.sweep_layers.begin(), config.sweep_layers.end());
        layers.insert(layers.end(), extra_layers.begin(), extra_layers.end());
        std::sort(layers.begin(), layers.end());
        layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
        return layers;
    };
    for (const auto& name : method_names) {
        if (name == "none" || name == "baseline_english" || name == "baseline_target") continue;
        if (name == "lape") {
            for (auto& [lang, set] : load_neuron_sets(paths.vectors_root, model.model_id()))
                store.add_neurons(std::move(set));
            continue;
        }
        const VectorMethod vm = parse_method(name);
        const bool pair_specific = vm == VectorMethod::diffmean || vm == VectorMethod::sae_diffmean;
        for (int layer : layers_for(name)) {
            if (vm == VectorMethod::sae_diffmean && sae_exists(paths.sae_root, layer))
                store.add_sae(load_sae(paths.sae_root, layer));
            for (const auto& target : langs) {
                if (pair_specific) {
                    for (const auto& source : langs) {
                        if (source == target) continue;
                        if (direction_exists(paths.vectors_root, model.model_id(), vm, layer, target, source))
                            store.add(load_direction(paths.vectors_root, model.model_id(), vm, layer,
                                                     target, source));
                    }
                } else if (direction_exists(paths.vectors_root, model.model_id(), vm, layer, target,
                                            std::nullopt)) {
                    store.add(load_direction(paths.vectors_root, model.model_id(), vm, layer, target,
                                             std::nullopt));
                }
            }
        }
    }
    return store;
}

}  // namespace

LoadedWorkspace load_workspace(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    require_artifact(paths.family_json, "corpus");
    const auto j = json::parse(read_text(paths.family_json));
    LoadedWorkspace ws;
    ws.family = generate_synthetic_family(j.at("n_languages").get<int>(),
                                          j.at("seed").get<std::uint64_t>(),
                                          j.at("vocab_per_lang").get<int>(),
                                          j.at("docs_per_lang").get<int>());
    ws.questions = make_synthetic_questions(ws.family, j.at("question_count").get<int>(),
                                            j.at("question_seed").get<std::uint64_t>());
    return ws;
}

std::pair<int, float> load_sweep_selection(const RunConfig& config, const std::string& method) {
    const auto paths = artifact_paths(config);
    const auto sel_path = paths.sweep_dir / "selected.json";
    require_artifact(sel_path, "sweep");
    const auto j = json::parse(read_text(sel_path));
    if (j.at("method").get<std::string>() != method)
        throw MissingArtifactError("sweep selection is for method " +
                                   j.at("method").get<std::string>() + ", not " + method +
                                   "; run `steerbench sweep` first");
    return {j.at("layer").get<int>(), j.at("alpha").get<float>()};
}

void cmd_corpus(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    if (config.language_kind != "synthetic")
        throw ConfigError("cmd_corpus currently materializes synthetic families; file corpora are "
                          "read in place by later commands");
    auto family = generate_synthetic_family(config.n_languages, config.seed, config.vocab_per_lang,
                                            config.docs_per_lang);
    auto questions = make_synthetic_questions(family, config.question_count, config.seed + 1);

    std::filesystem::create_directories(paths.corpus_dir);
    for (std::size_t i = 0; i < family.corpora.size(); ++i)
        write_corpus(paths.corpus_dir / (family.languages[i] + ".txt"), family.corpora[i],
                     family.vocab);
    write_question_set(paths.questions_csv, questions.set);

    json j;
    j["n_languages"] = config.n_languages;
    j["vocab_per_lang"] = config.vocab_per_lang;
    j["docs_per_lang"] = config.docs_per_lang;
    j["seed"] = config.seed;
    j["question_count"] = config.question_count;
    j["question_seed"] = config.seed + 1;
    atomic_write_text(paths.family_json, j.dump(2) + "\n");
}

void cmd_train(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    ToyConfig toy = config.toy;
    toy.vocab_size = ws.family.vocab_size();
    TrainReport report;
    auto model = ToyTransformer::train(ws.family.corpora, toy, &report);
    std::filesystem::create_directories(paths.model_base.parent_path());
    model->save(paths.model_base);

    json j;
    j["final_loss"] = report.final_loss;
    j["heldout_loss"] = report.heldout_loss;
    j["heldout_accuracy"] = report.heldout_accuracy;
    j["heldout_perplexity"] = report.heldout_perplexity;
    j["steps_run"] = report.steps_run;
    j["untrained"] = report.untrained;
    j["weights_checksum"] = model->weights_checksum();
    atomic_write_text(paths.train_report, j.dump(2) + "\n");
    if (report.untrained)
        std::cerr << "warning: steps=0, model saved untrained\n";
}

void cmd_extract(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    auto model = load_model(config, paths);
    auto stats = collect_stats_all(*model, ws.family.corpora, config.stats_max_tokens);
    for (const auto& s : stats) save_stats(paths.stats_root, s);
}

void cmd_vectors(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    auto model = load_model(config, paths);
    const auto& langs = ws.family.languages;

    // Which vector methods are needed: everything configured for bench plus the
    // sweep method.
    std::set<std::string> wanted(config.bench_methods.begin(), config.bench_methods.end());
    if (!config.sweep_method.empty()) wanted.insert(config.sweep_method);

    std::map<LanguageId, LanguageStats> stats;
    auto need_stats = [&]() -> std::map<LanguageId, LanguageStats>& {
        if (stats.empty())
            for (const auto& lang : langs) {
                try {
                    stats[lang] = load_stats(paths.stats_root, model->model_id(), lang);
                } catch (const MissingArtifactError&) {
                    throw MissingArtifactError("missing statistics for " + lang +
                                               "; run `steerbench extract` first");
                }
            }
        return stats;
    };

    auto layers_for = [&](const std::string& name) {
        std::vector<int> layers = config.methods.count(name) ? config.methods.at(name).layers
                                                             : std::vector<int>{};
        if (config.sweep_method == name)
            layers.insert(layers.end(), config.sweep_layers.begin(), config.sweep_layers.end());
        std::sort(layers.begin(), layers.end());
        layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
        return layers;
    };

    if (wanted.count("diffmean")) {
        auto& st = need_stats();
        for (int layer : layers_for("diffmean"))
            for (const auto& target : langs)
                for (const auto& source : langs) {
                    if (source == target) continue;
                    save_direction(paths.vectors_root, model->model_id(),
                                   diffmean_direction(st.at(target), st.at(source), layer),
                                   "stats:" + std::to_string(config.stats_max_tokens));
                }
    }

    // Residual datasets per (layer, language), shared by probe / pca / lda.
    const bool need_datasets = wanted.count("probe") || wanted.count("pca") || wanted.count("lda");
    std::map<int, std::vector<ActivationBatch>> datasets;
    if (need_datasets) {
        std::set<int> layers;
        for (const auto& name : {"probe", "pca", "lda"})
            if (wanted.count(name))
                for (int l : layers_for(name)) layers.insert(l);
        for (int layer : layers) {
            auto& per_lang = datasets[layer];
            per_lang.resize(langs.size());
            parallel_for(langs.size(), [&](std::size_t i) {
                per_lang[i] = collect_dataset(*model, ws.family.corpora[i], layer,
                                              config.dataset_samples, config.seed + 13 * i)
                                  .batch;
            });
        }
    }
    auto negatives_of = [&](int layer, std::size_t t) {
        std::vector<ActivationBatch> out;
        for (std::size_t o = 0; o < langs.size(); ++o)
            if (o != t) out.push_back(datasets.at(layer)[o]);
        return out;
    };

    if (wanted.count("probe")) {
        const auto& mc = config.method("probe");
        ProbeConfig pc;
        pc.epochs = mc.epochs;
        pc.batch_size = mc.batch_size;
        pc.learning_rate = mc.learning_rate;
        for (int layer : layers_for("probe"))
            for (std::size_t t = 0; t < langs.size(); ++t) {
                ProbeConfig seeded = pc;
                seeded.seed = config.seed + 997 * static_cast<std::uint64_t>(layer) + t;
                ProbeReport rep;
                auto dir = train_probe(datasets.at(layer)[t], negatives_of(layer, t), seeded, &rep);
                save_direction(paths.vectors_root, model->model_id(), dir,
                               "dataset:" + std::to_string(config.dataset_samples) +
                                   " acc:" + format_fixed(rep.heldout_accuracy, 4));
            }
    }
    if (wanted.count("pca")) {
        const auto& mc = config.method("pca");
        for (int layer : layers_for("pca"))
            for (std::size_t t = 0; t < langs.size(); ++t)
                save_direction(paths.vectors_root, model->model_id(),
                               pca_components(datasets.at(layer)[t], mc.k),
                               "dataset:" + std::to_string(config.dataset_samples));
    }
    if (wanted.count("lda")) {
        for (int layer : layers_for("lda"))
            for (std::size_t t = 0; t < langs.size(); ++t)
                save_direction(paths.vectors_root, model->model_id(),
                               lda_direction(datasets.at(layer)[t], negatives_of(layer, t),
                                             config.seed + 31 * static_cast<std::uint64_t>(layer) + t),
                               "dataset:" + std::to_string(config.dataset_samples));
    }
    if (wanted.count("lape")) {
        const auto& mc = config.method("lape");
        auto sets = lape_select(need_stats(), mc.top_fraction, mc.entropy_quantile);
        save_neuron_sets(paths.vectors_root, model->model_id(), sets);
    }
    if (wanted.count("sae_diffmean")) {
        const auto& mc = config.method("sae_diffmean");
        for (int layer : layers_for("sae_diffmean")) {
            std::vector<ActivationBatch> pool(langs.size());
            parallel_for(langs.size(), [&](std::size_t i) {
                pool[i] = collect_dataset(*model, ws.family.corpora[i], layer,
                                          config.dataset_samples, config.seed + 57 * i)
                              .batch;
            });
            SaeTrainConfig sc;
            sc.latent_dim = mc.latent_dim;
            sc.epochs = mc.sae_epochs;
            sc.learning_rate = mc.sae_learning_rate;
            sc.sparsity_weight = mc.sparsity_weight;
            sc.seed = config.seed + 7 * static_cast<std::uint64_t>(layer);
            SaeTrainReport rep;
            auto sae = train_sae(pool, sc, &rep);
            save_sae(paths.sae_root, sae);

            std::vector<std::vector<float>> latent_means(langs.size());
            parallel_for(langs.size(), [&](std::size_t i) {
                latent_means[i] = mean_latent_streaming(*model, ws.family.corpora[i], sae,
                                                        config.stats_max_tokens);
            });
            for (std::size_t t = 0; t < langs.size(); ++t)
                for (std::size_t s = 0; s < langs.size(); ++s) {
                    if (s == t) continue;
                    save_direction(paths.vectors_root, model->model_id(),
                                   sae_diffmean_direction(latent_means[t], latent_means[s], layer,
                                                          langs[t], langs[s]),
                                   "sae mse:" + format_fixed(rep.mse, 6));
                }
        }
    }
}

void cmd_bench(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    auto model = load_model(config, paths);
    const auto& langs = ws.family.languages;
    const auto pairs = ordered_pairs(langs);

    std::vector<InterventionSpec> specs;
    std::vector<int> extra_layers;
    for (const auto& name : config.bench_methods) {
        auto spec = spec_for(config, name);
        if (!spec.layers.empty())
            extra_layers.insert(extra_layers.end(), spec.layers.begin(), spec.layers.end());
        specs.push_back(std::move(spec));
    }
    auto store = load_store(config, paths, *model, langs, config.bench_methods, extra_layers);

    // Surface missing artifacts for configured vector methods eagerly, pointing
    // at the producing command.
    for (const auto& spec : specs) {
        if (spec.method == "none" || spec.method == "baseline_english" ||
            spec.method == "baseline_target" || spec.method == "lape")
            continue;
        const VectorMethod vm = parse_method(spec.method);
        const bool pair_specific = vm == VectorMethod::diffmean || vm == VectorMethod::sae_diffmean;
        for (int layer : spec.layers)
            for (const auto& [source, target] : pairs) {
                const std::optional<LanguageId> src =
                    pair_specific ? std::optional<LanguageId>(source) : std::nullopt;
                if (!store.find(vm, layer, target, src))
                    throw MissingArtifactError("no " + spec.method + " direction for target " +
                                               target + " at layer " + std::to_string(layer) +
                                               "; run `steerbench vectors` first");
            }
    }

    FamilyCodec codec(ws.family);
    SyntheticVocabLid lid(ws.family);
    RuleBasedJudge rule_judge(ws.family);
    std::unique_ptr<ExternalJudgeClient> external_judge;
    BenchBackends backends;
    backends.lid = &lid;
    if (config.judge_backend == "external") {
        external_judge = std::make_unique<ExternalJudgeClient>(config.judge_endpoint);
        backends.judge = external_judge.get();
    } else {
        backends.judge = &rule_judge;
    }

    auto result = run_benchmark(*model, ws.questions.set, specs, store, pairs, codec, backends,
                                config.decoding);

    std::filesystem::create_directories(paths.bench_dir);
    atomic_write_text(paths.bench_dir / "results.csv", eval_table_csv(result.table));
    atomic_write_text(paths.bench_dir / "records.json", records_json(result.records));
    if (!result.skipped.empty()) {
        json sk = json::array();
        for (const auto& s : result.skipped)
            sk.push_back({{"source", s.key.source},
                          {"target", s.key.target},
                          {"method", s.key.method},
                          {"layer", s.key.layer},
                          {"alpha", s.key.alpha},
                          {"reason", s.reason}});
        atomic_write_text(paths.bench_dir / "skipped.json", sk.dump(2) + "\n");
    }
    for (const auto& spec : specs) {
        const int key_layer = spec.layers.size() == 1 ? spec.layers[0] : -1;
        const auto m = lfs_matrix_from_table(result.table, spec.method,
                                             (spec.method == "lape" || spec.method == "none" ||
                                              spec.method == "baseline_english" ||
                                              spec.method == "baseline_target")
                                                 ? -1
                                                 : key_layer,
                                             spec.alpha, langs);
        atomic_write_text(paths.bench_dir / ("matrix_" + spec.method + ".csv"), matrix_csv(m));
    }
}

void cmd_sweep(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    auto model = load_model(config, paths);
    const auto& langs = ws.family.languages;
    const auto pairs = ordered_pairs(langs);

    auto store = load_store(config, paths, *model, langs, {config.sweep_method},
                            config.sweep_layers);
    // missing directions are detected per cell, but give an actionable error if
    // nothing exists at all
    bool any = false;
    for (int layer : config.sweep_layers)
        for (const auto& [s, t] : pairs) {
            const VectorMethod vm = parse_method(config.sweep_method);
            const bool pair_specific = vm == VectorMethod::diffmean || vm == VectorMethod::sae_diffmean;
            if (store.find(vm, layer, t, pair_specific ? std::optional<LanguageId>(s) : std::nullopt))
                any = true;
        }
    if (!any && config.sweep_method != "lape")
        throw MissingArtifactError("no stored directions for sweep method " + config.sweep_method +
                                   "; run `steerbench vectors` first");

    FamilyCodec codec(ws.family);
    SyntheticVocabLid lid(ws.family);
    RuleBasedJudge judge(ws.family);
    BenchBackends backends{&lid, &judge};

    auto result = sweep(*model, config.sweep_method, config.sweep_layers, config.sweep_alphas,
                        pairs, ws.questions.set, store, codec, backends, config.decoding);

    std::filesystem::create_directories(paths.sweep_dir);
    atomic_write_text(paths.sweep_dir / ("sweep_" + config.sweep_method + ".csv"),
                      sweep_csv(result));
    const auto& sel = result.selected_cell();
    json j;
    j["method"] = config.sweep_method;
    j["layer"] = sel.layer;
    j["alpha"] = sel.alpha;
    j["lfs"] = sel.lfs;
    j["or"] = sel.or_score;
    j["lss"] = sel.lss;
    atomic_write_text(paths.sweep_dir / "selected.json", j.dump(2) + "\n");
}

void cmd_analyze(const RunConfig& config) {
    const auto paths = artifact_paths(config);
    auto ws = load_workspace(config);
    auto model = load_model(config, paths);
    const auto& langs = ws.family.languages;
    const int L = model->n_layers();

    std::map<LanguageId, LanguageStats> stats;
    for (const auto& lang : langs) {
        try {
            stats[lang] = load_stats(paths.stats_root, model->model_id(), lang);
        } catch (const MissingArtifactError&) {
            throw MissingArtifactError("missing statistics for " + lang +
                                       "; run `steerbench extract` first");
        }
    }
    std::filesystem::create_directories(paths.analysis_dir);

    // Cosine matrices over per-language residual means, one per layer + average.
    std::vector<SimilarityMatrix> per_layer;
    for (int l = 0; l < L; ++l) {
        std::map<LanguageId, std::vector<float>> vecs;
        for (const auto& lang : langs)
            vecs[lang] = stats.at(lang).residual_mean[static_cast<std::size_t>(l)];
        auto m = cosine_matrix(vecs);
        m.layer_scope = "layer " + std::to_string(l);
        write_matrix_csv(paths.analysis_dir / ("cosine_layer" + std::to_string(l) + ".csv"), m);
        per_layer.push_back(std::move(m));
    }
    write_matrix_csv(paths.analysis_dir / "cosine_avg.csv", average_matrices(per_layer));

    // Family clustering at the final layer.
    std::map<LanguageId, std::string> family_map;
    for (std::size_t i = 0; i < langs.size(); ++i)
        family_map[langs[i]] =
            ws.family.family_of_language[i] == 0 ? "family_a" : "family_b";
    const auto fam_report = family_clustering(per_layer.back(), family_map);
    json fj;
    fj["within_mean"] = fam_report.within_mean;
    fj["cross_mean"] = fam_report.cross_mean;
    fj["within_pairs"] = fam_report.within_pairs;
    fj["cross_pairs"] = fam_report.cross_pairs;
    fj["layer_scope"] = per_layer.back().layer_scope;
    atomic_write_text(paths.analysis_dir / "family_report.json", fj.dump(2) + "\n");

    // Residual datasets per layer, reused by the probe curve and Fisher profile.
    std::vector<std::vector<ActivationBatch>> per_layer_batches(static_cast<std::size_t>(L));
    const std::size_t analysis_samples = std::min<std::size_t>(config.dataset_samples, 4000);
    for (int l = 0; l < L; ++l) {
        auto& batches = per_layer_batches[static_cast<std::size_t>(l)];
        batches.resize(langs.size());
        parallel_for(langs.size(), [&](std::size_t i) {
            batches[i] = collect_dataset(*model, ws.family.corpora[i], l, analysis_samples,
                                         config.seed + 77 * i)
                             .batch;
        });
    }
    ProbeConfig pc;
    pc.seed = config.seed;
    const auto curve = probe_layer_curve(per_layer_batches, pc);

    // Fisher ratio per layer, averaged over ordered language pairs projected on
    // their mean-difference direction.
    LayerProfile fisher;
    fisher.name = "fisher_ratio";
    for (int l = 0; l < L; ++l) {
        double acc = 0.0;
        std::size_t n = 0;
        const auto& batches = per_layer_batches[static_cast<std::size_t>(l)];
        for (std::size_t a = 0; a < langs.size(); ++a)
            for (std::size_t b = 0; b < langs.size(); ++b) {
                if (a == b) continue;
                const auto& ta = stats.at(langs[a]).residual_mean[static_cast<std::size_t>(l)];
                const auto& tb = stats.at(langs[b]).residual_mean[static_cast<std::size_t>(l)];
                std::vector<float> v(ta.size());
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = ta[i] - tb[i];
                double norm = 0.0;
                for (float x : v) norm += static_cast<double>(x) * x;
                if (!(norm > 0.0)) continue;
                acc += fisher_ratio(batches[a], batches[b], v);
                ++n;
            }
        fisher.values.push_back(n ? acc / static_cast<double>(n) : 0.0);
    }

    // Mean pairwise cosine per layer.
    LayerProfile mean_cos;
    mean_cos.name = "mean_pairwise_cosine";
    for (const auto& m : per_layer) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < m.labels.size(); ++i)
            for (std::size_t j = i + 1; j < m.labels.size(); ++j) {
                if (std::isnan(m.at(i, j))) continue;
                acc += m.at(i, j);
                ++n;
            }
        mean_cos.values.push_back(n ? acc / static_cast<double>(n) : 0.0);
    }

    std::vector<LayerProfile> profiles = {curve.accuracy, curve.loss, fisher, mean_cos};

    // Neuron distribution when LAPE artifacts exist.
    try {
        auto sets = load_neuron_sets(paths.vectors_root, model->model_id());
        auto dist = neuron_layer_distribution(sets, L);
        profiles.push_back(dist.pooled);
        std::vector<LayerProfile> neuron_profiles;
        neuron_profiles.push_back(dist.pooled);
        for (auto& [lang, p] : dist.per_language) neuron_profiles.push_back(p);
        write_profiles_csv(paths.analysis_dir / "neuron_layers.csv", neuron_profiles);
    } catch (const MissingArtifactError&) {
        // LAPE not configured for this run
    }

    write_profiles_csv(paths.analysis_dir / "profiles.csv", profiles);
    write_profiles_json(paths.analysis_dir / "profiles.json", profiles);
}

}  // namespace steerbench
