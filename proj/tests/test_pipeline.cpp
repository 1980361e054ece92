#include <doctest.h>

#include "steerbench/pipeline.hpp"
#include "testutil.hpp"

using namespace steerbench;

namespace {

RunConfig tiny_run(const std::filesystem::path& out) {
    const std::string json = R"({
      "seed": 11,
      "model": {"kind": "toy", "n_layers": 2, "hidden_dim": 16, "mlp_dim": 32,
                "n_heads": 2, "steps": 60, "batch_size": 8},
      "languages": {"kind": "synthetic", "n_languages": 2, "vocab_per_lang": 16,
                    "docs_per_lang": 80},
      "questions": {"kind": "synthetic", "count": 4},
      "extraction": {"stats_max_tokens": 1500, "dataset_samples": 400},
      "methods": {
        "bench": ["none", "diffmean", "pca", "probe", "lape", "sae_diffmean"],
        "diffmean": {"layers": [1], "alpha": 3.0},
        "pca": {"layers": [0], "alpha": 2.0, "k": 4},
        "probe": {"layers": [1], "alpha": 3.0, "epochs": 4},
        "lape": {"alpha": 1.0, "top_fraction": 0.02, "entropy_quantile": 0.2},
        "sae_diffmean": {"layers": [1], "alpha": 4.0, "latent_dim": 32, "sae_epochs": 2}
      },
      "sweep": {"method": "diffmean", "layers": [0, 1], "alphas": [0.0, 3.0]},
      "decoding": {"max_new_tokens": 10}
    })";
    return config_from_json(json, {}, out);
}

}  // namespace

TEST_CASE("config validation reports every violation at once") {
    const std::string bad = R"({
      "languages": {"kind": "synthetic", "n_languages": 1, "vocab_per_lang": 2},
      "questions": {"kind": "synthetic", "count": 0},
      "methods": {"bench": ["nonsense", "diffmean"], "diffmean": {"layers": []}},
      "decoding": {"max_new_tokens": 0}
    })";
    try {
        config_from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("n_languages") != std::string::npos);
        CHECK(msg.find("vocab_per_lang") != std::string::npos);
        CHECK(msg.find("questions.count") != std::string::npos);
        CHECK(msg.find("nonsense") != std::string::npos);
        CHECK(msg.find("diffmean.layers") != std::string::npos);
        CHECK(msg.find("max_new_tokens") != std::string::npos);
    }
}

TEST_CASE("config overrides hit leaf keys and round-trip through json") {
    const auto cfg = config_from_json(R"({"seed": 3})",
                                      {"methods.diffmean.alpha=9.5", "model.steps=7",
                                       "languages.n_languages=3"});
    CHECK(cfg.method("diffmean").alpha == 9.5f);
    CHECK(cfg.toy.steps == 7);
    CHECK(cfg.n_languages == 3);
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(back.method("diffmean").alpha == 9.5f);
    CHECK(back.seed == 3);
}

TEST_CASE("pipeline: dependency ordering errors name the producing command") {
    const auto out = testutil::fresh_tmpdir("pipe_deps");
    const auto cfg = tiny_run(out);

    // nothing exists yet: train requires corpus
    CHECK_THROWS_WITH_AS(cmd_train(cfg), doctest::Contains("steerbench corpus"),
                         MissingArtifactError);
    cmd_corpus(cfg);
    // bench requires the model
    CHECK_THROWS_WITH_AS(cmd_bench(cfg), doctest::Contains("steerbench train"),
                         MissingArtifactError);
    cmd_train(cfg);
    // bench requires vectors
    CHECK_THROWS_WITH_AS(cmd_bench(cfg), doctest::Contains("steerbench vectors"),
                         MissingArtifactError);
    // vectors requires stats
    CHECK_THROWS_WITH_AS(cmd_vectors(cfg), doctest::Contains("steerbench extract"),
                         MissingArtifactError);
}

TEST_CASE("pipeline: full synthetic run produces every artifact and is idempotent") {
    const auto out = testutil::fresh_tmpdir("pipe_full");
    const auto cfg = tiny_run(out);
    const auto paths = artifact_paths(cfg);

    cmd_corpus(cfg);
    CHECK(std::filesystem::exists(paths.family_json));
    CHECK(std::filesystem::exists(paths.corpus_dir / "syn0.txt"));
    CHECK(std::filesystem::exists(paths.questions_csv));
    // the emitted question set is loadable and parallel
    const auto qs = load_question_set(paths.questions_csv);
    CHECK(qs.languages().size() == 2);

    cmd_train(cfg);
    CHECK(std::filesystem::exists(std::filesystem::path(paths.model_base.string() + ".bin")));
    CHECK(std::filesystem::exists(paths.train_report));

    cmd_extract(cfg);
    CHECK(std::filesystem::exists(paths.stats_root));

    cmd_vectors(cfg);
    auto model = ToyTransformer::load(paths.model_base);
    CHECK(direction_exists(paths.vectors_root, model->model_id(), VectorMethod::diffmean, 1,
                           "syn0", LanguageId("syn1")));
    CHECK(direction_exists(paths.vectors_root, model->model_id(), VectorMethod::pca, 0, "syn1",
                           std::nullopt));
    CHECK(direction_exists(paths.vectors_root, model->model_id(), VectorMethod::probe, 1, "syn0",
                           std::nullopt));
    CHECK(direction_exists(paths.vectors_root, model->model_id(), VectorMethod::sae_diffmean, 1,
                           "syn0", LanguageId("syn1")));
    CHECK(sae_exists(paths.sae_root, 1));
    CHECK_NOTHROW(load_neuron_sets(paths.vectors_root, model->model_id()));

    cmd_sweep(cfg);
    CHECK(std::filesystem::exists(paths.sweep_dir / "sweep_diffmean.csv"));
    CHECK(std::filesystem::exists(paths.sweep_dir / "selected.json"));
    const auto [sel_layer, sel_alpha] = load_sweep_selection(cfg, "diffmean");
    CHECK(sel_layer >= 0);
    CHECK(sel_layer <= 1);

    cmd_bench(cfg);
    CHECK(std::filesystem::exists(paths.bench_dir / "results.csv"));
    CHECK(std::filesystem::exists(paths.bench_dir / "records.json"));
    CHECK(std::filesystem::exists(paths.bench_dir / "matrix_diffmean.csv"));
    const auto table = parse_eval_table_csv(read_text(paths.bench_dir / "results.csv"));
    CHECK_NOTHROW(table.validate());
    // every configured method produced rows for both ordered pairs
    std::set<std::string> methods_seen;
    for (const auto& [key, row] : table.rows) methods_seen.insert(key.method);
    for (const auto& name : cfg.bench_methods) CHECK(methods_seen.count(name));

    cmd_analyze(cfg);
    CHECK(std::filesystem::exists(paths.analysis_dir / "cosine_avg.csv"));
    CHECK(std::filesystem::exists(paths.analysis_dir / "profiles.csv"));
    CHECK(std::filesystem::exists(paths.analysis_dir / "profiles.json"));
    CHECK(std::filesystem::exists(paths.analysis_dir / "family_report.json"));
    CHECK(std::filesystem::exists(paths.analysis_dir / "neuron_layers.csv"));

    // idempotence: rerunning bench yields byte-identical results
    const auto first = read_text(paths.bench_dir / "results.csv");
    const auto first_records = read_text(paths.bench_dir / "records.json");
    cmd_bench(cfg);
    CHECK(read_text(paths.bench_dir / "results.csv") == first);
    CHECK(read_text(paths.bench_dir / "records.json") == first_records);

    // idempotence across the producing command too: vectors rewrite identically
    const auto dm_payload = read_f32(paths.vectors_root / "diffmean" / "syn0__syn1__L1.f32");
    cmd_vectors(cfg);
    CHECK(read_f32(paths.vectors_root / "diffmean" / "syn0__syn1__L1.f32") == dm_payload);
}

TEST_CASE("question file round-trips through the config question path") {
    // cmd_corpus writes questions.csv; a file-based run can read it back
    const auto out = testutil::fresh_tmpdir("pipe_qfile");
    auto cfg = tiny_run(out);
    cmd_corpus(cfg);
    const auto qs = load_question_set(artifact_paths(cfg).questions_csv);
    qs.validate();
    CHECK(qs.question_ids().size() == 4);
}
