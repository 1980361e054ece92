#include <doctest.h>

#include <algorithm>
#include <random>
#include <thread>

#include <httplib.h>

#include "steerbench/evalbench.hpp"
#include "testutil.hpp"

using namespace steerbench;
using testutil::StubModel;

namespace {

SyntheticFamily test_family() { return generate_synthetic_family(2, 3, 32, 30); }

std::string tokens_of(const SyntheticFamily& fam, int lang, std::initializer_list<int> words) {
    std::vector<TokenId> ids;
    for (int w : words) ids.push_back(fam.token_id(lang, w));
    return fam.detokenize(ids);
}

}  // namespace

TEST_CASE("detect_language over disjoint synthetic vocabularies") {
    const auto fam = test_family();
    SyntheticVocabLid lid(fam);

    SUBCASE("pure syn1 text is (syn1, 1.0)") {
        const auto [lang, conf] = detect_language(tokens_of(fam, 1, {0, 5, 9, 12}), lid);
        CHECK(lang == "syn1");
        CHECK(conf == doctest::Approx(1.0));
    }
    SUBCASE("60/40 mix is majority with fraction confidence") {
        const std::string text = tokens_of(fam, 1, {0, 1, 2}) + " " + tokens_of(fam, 0, {3, 4});
        const auto [lang, conf] = detect_language(text, lid);
        CHECK(lang == "syn1");
        CHECK(conf == doctest::Approx(0.6));
    }
    SUBCASE("empty and unrecognizable text fail without crashing") {
        CHECK(detect_language("", lid).first.empty());
        CHECK(detect_language("   ", lid).second == 0.0f);
        CHECK(detect_language("unknown words only", lid).first.empty());
    }
}

TEST_CASE("metric formulas") {
    SUBCASE("lfs counts detected == target") {
        std::vector<GenerationRecord> recs(10);
        for (std::size_t i = 0; i < 10; ++i) {
            recs[i].target = "de";
            recs[i].detected = i < 7 ? "de" : "fr";
        }
        CHECK(lfs(recs) == doctest::Approx(0.7));
        for (auto& r : recs) r.detected = "de";
        CHECK(lfs(recs) == doctest::Approx(1.0));
        for (auto& r : recs) r.detected = "fr";
        CHECK(lfs(recs) == doctest::Approx(0.0));
        CHECK_THROWS_AS(lfs(std::vector<GenerationRecord>{}), DataError);
    }
    SUBCASE("or_score is the normalized mean") {
        CHECK(or_score(std::vector<int>{2, 2, 1, 0}) == doctest::Approx(0.625));
        CHECK(or_score(std::vector<int>{2, 2}) == doctest::Approx(1.0));
        CHECK(or_score(std::vector<int>{0, 0, 0}) == doctest::Approx(0.0));
        CHECK_THROWS_AS(or_score(std::vector<int>{3}), DataError);
    }
    SUBCASE("lss reproduces reported steering scores from forcing/relevance inputs") {
        CHECK(lss(0.971, 0.818) == doctest::Approx(0.888).epsilon(0.0006));
        CHECK(lss(0.963, 0.954) == doctest::Approx(0.959).epsilon(0.0006));
        for (double x : {0.0, 0.25, 0.5, 0.93, 1.0}) CHECK(lss(x, x) == doctest::Approx(x));
        CHECK(lss(0.0, 0.9) == 0.0);
        CHECK(lss(0.0, 0.0) == 0.0);
    }
    SUBCASE("lfs and or_score are order-invariant") {
        std::vector<GenerationRecord> recs(20);
        std::vector<int> scores(20);
        std::mt19937 rng(3);
        for (std::size_t i = 0; i < 20; ++i) {
            recs[i].target = "de";
            recs[i].detected = rng() % 3 == 0 ? "de" : "fr";
            scores[i] = static_cast<int>(rng() % 3);
        }
        const double l1 = lfs(recs);
        const double o1 = or_score(scores);
        std::shuffle(recs.begin(), recs.end(), rng);
        std::shuffle(scores.begin(), scores.end(), rng);
        CHECK(lfs(recs) == doctest::Approx(l1));
        CHECK(or_score(scores) == doctest::Approx(o1));
    }
}

TEST_CASE("rule-based judge scores template-category overlap") {
    const auto fam = test_family();
    RuleBasedJudge judge(fam);
    // question from categories {0,1,2} (words 0..23 with 4 words per category at
    // vocab_per_lang=32)
    const auto question = tokens_of(fam, 0, {0, 5, 9});  // categories 0,1,2

    SUBCASE("same-category answer scores 2, even in another language") {
        const auto answer = tokens_of(fam, 1, {1, 6, 10, 2});
        CHECK(judge.score(question, answer, "syn0", "syn1") == 2);
    }
    SUBCASE("empty answer scores 0") {
        CHECK(judge.score(question, "", "syn0", "syn1") == 0);
    }
    SUBCASE("answer from disjoint categories scores 0") {
        const auto answer = tokens_of(fam, 1, {28, 29, 30, 31});  // category 7
        CHECK(judge.score(question, answer, "syn0", "syn1") == 0);
    }
    SUBCASE("half-overlap answer scores 1") {
        const auto answer = tokens_of(fam, 1, {0, 1, 28, 29});  // cats {0,0,7,7}
        CHECK(judge.score(question, answer, "syn0", "syn1") == 1);
    }
}

TEST_CASE("eval table aggregation, invariant, csv round-trip") {
    std::vector<GenerationRecord> recs;
    std::mt19937 rng(5);
    for (int i = 0; i < 40; ++i) {
        GenerationRecord r;
        r.question_id = i % 5;
        r.source = i % 2 ? "syn0" : "syn1";
        r.target = i % 2 ? "syn1" : "syn0";
        r.method = i % 4 < 2 ? "none" : "diffmean";
        r.layer = r.method == "none" ? -1 : 3;
        r.alpha = r.method == "none" ? 0.0f : 4.0f;
        r.detected = rng() % 2 ? r.target : r.source;
        r.judge_score = static_cast<int>(rng() % 3);
        recs.push_back(r);
    }
    const auto table = EvalTable::from_records(recs);
    CHECK_NOTHROW(table.validate(0.0));  // fresh tables satisfy the invariant exactly
    for (const auto& [key, row] : table.rows) CHECK(row.lss == lss(row.lfs, row.or_score));

    const auto csv = eval_table_csv(table);
    const auto parsed = parse_eval_table_csv(csv);
    CHECK(eval_table_csv(parsed) == csv);  // lossless round-trip
    CHECK(parsed.rows.size() == table.rows.size());
    CHECK_NOTHROW(parsed.validate());  // within the fixed-point grain after parsing
}

TEST_CASE("lfs matrix export round-trips with missing cells") {
    EvalTable table;
    table.rows[{"syn0", "syn1", "none", -1, 0.0f}] = {10, 0.25, 0.5, lss(0.25, 0.5)};
    table.rows[{"syn1", "syn0", "none", -1, 0.0f}] = {10, 0.875, 0.5, lss(0.875, 0.5)};
    const auto m = lfs_matrix_from_table(table, "none", -1, 0.0f, {"syn0", "syn1"});
    CHECK(std::isnan(m.at(0, 0)));
    CHECK(m.at(0, 1) == doctest::Approx(0.25));
    CHECK(m.at(1, 0) == doctest::Approx(0.875));
    const auto csv = matrix_csv(m);
    const auto back = parse_matrix_csv(csv);
    CHECK(matrix_csv(back) == csv);
    CHECK(back.languages == m.languages);
}

TEST_CASE("benchmark loop bookkeeping with a stub model") {
    const auto fam = test_family();
    const auto questions = make_synthetic_questions(fam, 5, 17);
    FamilyCodec codec(fam);
    SyntheticVocabLid lid(fam);
    RuleBasedJudge judge(fam);
    BenchBackends backends{&lid, &judge};
    DecodingSpec dec;
    dec.max_new_tokens = 8;

    // stub echoes its prompt: output language == source language always
    StubModel model(2, 4, 6, fam.vocab_size(),
                    [](int, HookSite, int, TokenId, std::span<float>) {});
    model.set_generate_rule(
        [](std::span<const TokenId> prompt, const std::vector<Intervention>&) {
            return std::vector<TokenId>(prompt.begin(), prompt.end());
        });

    const std::vector<std::pair<LanguageId, LanguageId>> pairs = {{"syn0", "syn1"},
                                                                  {"syn1", "syn0"}};
    InMemoryDirectionStore store;

    SUBCASE("no-op intervention: 2 pairs x 5 questions = 10 records, lfs 0") {
        InterventionSpec none;
        none.method = "none";
        const auto result =
            run_benchmark(model, questions.set, {none}, store, pairs, codec, backends, dec);
        CHECK(result.records.size() == 10);
        CHECK(result.skipped.empty());
        REQUIRE(result.table.rows.size() == 2);
        for (const auto& [key, row] : result.table.rows) {
            CHECK(row.n == 5);
            CHECK(row.lfs == 0.0);       // echoed prompt stays in the source language
            CHECK(row.or_score > 0.9);   // but it is perfectly on-topic
        }
    }

    SUBCASE("alpha=0 diffmean rows equal no-intervention rows") {
        for (const auto& [s, t] : pairs) {
            SteeringDirection dir;
            dir.method = VectorMethod::diffmean;
            dir.layer = 1;
            dir.target = t;
            dir.source = s;
            dir.vector = {1.0f, 0.0f, 0.0f, 0.0f};
            store.add(std::move(dir));
        }
        InterventionSpec none;
        none.method = "none";
        InterventionSpec dm;
        dm.method = "diffmean";
        dm.layers = {1};
        dm.alpha = 0.0f;
        const auto result =
            run_benchmark(model, questions.set, {none, dm}, store, pairs, codec, backends, dec);
        for (const auto& [s, t] : pairs) {
            const auto& a = result.table.rows.at({s, t, "none", -1, 0.0f});
            const auto& b = result.table.rows.at({s, t, "diffmean", 1, 0.0f});
            CHECK(a.lfs == b.lfs);
            CHECK(a.or_score == b.or_score);
            CHECK(a.lss == b.lss);
        }
    }

    SUBCASE("missing direction skips the row with a missing-artifact status") {
        InterventionSpec dm;
        dm.method = "diffmean";
        dm.layers = {1};
        dm.alpha = 2.0f;
        const auto result =
            run_benchmark(model, questions.set, {dm}, store, pairs, codec, backends, dec);
        CHECK(result.records.empty());
        REQUIRE(result.skipped.size() == 2);
        CHECK(result.skipped[0].reason.find("missing-artifact") == 0);
    }
}

TEST_CASE("sweep grid, baseline cells, argmax stability") {
    const auto fam = test_family();
    const auto questions = make_synthetic_questions(fam, 4, 23);
    FamilyCodec codec(fam);
    SyntheticVocabLid lid(fam);
    RuleBasedJudge judge(fam);
    BenchBackends backends{&lid, &judge};
    DecodingSpec dec;
    dec.max_new_tokens = 6;

    // stub switches to the target language iff an intervention with alpha
    // encoded in the direction store is present; here: any intervention at all
    StubModel model(2, 4, 6, fam.vocab_size(),
                    [](int, HookSite, int, TokenId, std::span<float>) {});
    model.set_generate_rule(
        [&fam](std::span<const TokenId> prompt, const std::vector<Intervention>& ivs) {
            // with interventions, emit tokens of the other language
            std::vector<TokenId> out(prompt.begin(), prompt.end());
            if (!ivs.empty())
                for (std::size_t i = 0; i < out.size(); ++i) {
                    const int lang = fam.language_index(out[i]);
                    const int word = (out[i] - 1) % fam.vocab_per_lang;
                    out[i] = fam.token_id(1 - lang, word);
                }
            return out;
        });

    const std::vector<std::pair<LanguageId, LanguageId>> pairs = {{"syn0", "syn1"},
                                                                  {"syn1", "syn0"}};
    InMemoryDirectionStore store;
    for (int layer : {0, 1})
        for (const auto& [s, t] : pairs) {
            SteeringDirection dir;
            dir.method = VectorMethod::diffmean;
            dir.layer = layer;
            dir.target = t;
            dir.source = s;
            dir.vector = {1.0f, 0.0f, 0.0f, 0.0f};
            store.add(std::move(dir));
        }

    const auto result = sweep(model, "diffmean", {0, 1}, {0.0f, 2.0f}, pairs, questions.set,
                              store, codec, backends, dec);
    REQUIRE(result.cells.size() == 4);
    for (const auto& c : result.cells) {
        CHECK(c.status == "ok");
        CHECK(c.n == 8);
    }
    // alpha=0 cells: the stub applies interventions only when the list is
    // non-empty; a real model adds a zero vector. Either way the harness runs.
    CHECK(result.selected >= 0);
    const auto& sel = result.selected_cell();
    CHECK(sel.lss >= result.cells[0].lss);

    SUBCASE("select_best_cell is invariant to positive scaling of scores") {
        auto cells = result.cells;
        const int before = select_best_cell(cells);
        for (auto& c : cells) {
            c.lss *= 0.37;
            c.lfs *= 0.37;
            c.or_score *= 0.37;
        }
        CHECK(select_best_cell(cells) == before);
    }
    SUBCASE("empty grids are rejected") {
        CHECK_THROWS_AS(sweep(model, "diffmean", {}, {1.0f}, pairs, questions.set, store, codec,
                              backends, dec),
                        ConfigError);
    }
    SUBCASE("the schema can express a late-layer high-strength argmax cell") {
        SweepResult wide;
        for (int layer : {4, 12, 20, 25})
            for (float alpha : {1.0f, 2.5f, 5.0f}) {
                SweepCell c;
                c.layer = layer;
                c.alpha = alpha;
                c.n = 10;
                c.lfs = layer == 20 && alpha == 5.0f ? 0.9 : 0.2;
                c.or_score = 0.8;
                c.lss = lss(c.lfs, c.or_score);
                wide.cells.push_back(c);
            }
        wide.selected = select_best_cell(wide.cells);
        CHECK(wide.selected_cell().layer == 20);
        CHECK(wide.selected_cell().alpha == 5.0f);
        const auto csv = sweep_csv(wide);
        CHECK(csv.find("20,5.000000,10") != std::string::npos);
    }
}

TEST_CASE("judge prompt rendering matches the golden file") {
    const auto rendered =
        render_judge_prompt("SRC_LANG", "TGT_LANG", "QUESTION_TEXT", "RESPONSE_TEXT");
    const auto golden = read_text(std::filesystem::path(STEERBENCH_TEST_DIR) / "golden" /
                                  "judge_prompt.golden");
    CHECK(rendered + "\n" == golden);
    CHECK(rendered.find("Rating: [[score]]") != std::string::npos);
}

TEST_CASE("judge reply parsing") {
    CHECK(parse_judge_reply("Rating: [[1]] because it is partially useful") == 1);
    CHECK(parse_judge_reply("Rating: [[0]]") == 0);
    CHECK(parse_judge_reply("Verdict...\nRating: [[2]]\n") == 2);
    CHECK(parse_judge_reply("Rating: [[ 2 ]]") == 2);
    CHECK_FALSE(parse_judge_reply("Rating: [[7]]").has_value());
    CHECK_FALSE(parse_judge_reply("total gibberish").has_value());
    CHECK_FALSE(parse_judge_reply("Rating: 2").has_value());
}

TEST_CASE("external judge client against a mock server") {
    httplib::Server server;
    std::atomic<int> mode{0};  // 0: valid rating 1, 1: garbage, 2: malformed json
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        // echo sanity: the request must carry the rendered prompt
        REQUIRE(req.body.find("impartial judge") != std::string::npos);
        if (mode == 0) {
            res.set_content(
                R"({"choices":[{"message":{"content":"Rating: [[1]] because it is short"}}]})",
                "application/json");
        } else if (mode == 1) {
            res.set_content(R"({"choices":[{"message":{"content":"no rating here"}}]})",
                            "application/json");
        } else {
            res.set_content("{not json", "application/json");
        }
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    JudgeClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "mock-judge";
    cfg.timeout_seconds = 5;
    ExternalJudgeClient client(cfg);

    CHECK(client.score("q", "a", "de", "en") == 1);
    CHECK(client.judged_count() == 1);
    CHECK(client.failure_count() == 0);

    mode = 1;  // parseable json, unparseable rating
    CHECK(client.score("q", "a", "de", "en") == 0);
    CHECK(client.parse_failures() == 1);

    mode = 2;  // unparseable body
    CHECK(client.score("q", "a", "de", "en") == 0);
    CHECK(client.parse_failures() == 2);

    // accounting: judged + failures == records sent
    CHECK(client.judged_count() + client.failure_count() == 3);

    server.stop();
    listener.join();

    // transport failure path: dead endpoint, quick timeout, retried then 0
    JudgeClientConfig dead = cfg;
    dead.base_url = "http://127.0.0.1:1";
    dead.timeout_seconds = 1;
    ExternalJudgeClient dead_client(dead);
    CHECK(dead_client.score("q", "a", "de", "en") == 0);
    CHECK(dead_client.transport_failures() == 1);
}
