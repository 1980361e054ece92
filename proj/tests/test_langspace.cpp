#include <doctest.h>

#include <fstream>
#include <set>

#include "steerbench/langspace.hpp"
#include "testutil.hpp"

using namespace steerbench;

TEST_CASE("synthetic family: pairwise-disjoint vocabularies (set-intersection oracle)") {
    const auto fam = generate_synthetic_family(3, 7, 64, 100);
    REQUIRE(fam.corpora.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = i + 1; j < 3; ++j) {
            std::vector<TokenId> common;
            std::set_intersection(fam.corpora[i].vocab_slice.begin(),
                                  fam.corpora[i].vocab_slice.end(),
                                  fam.corpora[j].vocab_slice.begin(),
                                  fam.corpora[j].vocab_slice.end(), std::back_inserter(common));
            CHECK(common.empty());
        }
    }
    for (const auto& c : fam.corpora) c.validate();
}

TEST_CASE("synthetic family: single language is allowed, disjointness vacuous") {
    const auto fam = generate_synthetic_family(1, 3, 32, 5);
    CHECK(fam.corpora.size() == 1);
    CHECK(fam.corpora[0].token_count() > 0);
}

TEST_CASE("synthetic family: byte-identical for equal seeds, different otherwise") {
    const auto a = generate_synthetic_family(2, 42, 16, 20);
    const auto b = generate_synthetic_family(2, 42, 16, 20);
    const auto c = generate_synthetic_family(2, 43, 16, 20);
    CHECK(a.corpora[0].documents == b.corpora[0].documents);
    CHECK(a.corpora[1].documents == b.corpora[1].documents);
    CHECK(a.corpora[0].documents != c.corpora[0].documents);
}

TEST_CASE("synthetic family: invalid sizes are configuration errors") {
    CHECK_THROWS_AS(generate_synthetic_family(0, 1, 64, 10), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_family(2, 1, 4, 10), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_family(2, 1, 64, 0), ConfigError);
}

TEST_CASE("synthetic family: document lengths stay in the 8..32 window") {
    const auto fam = generate_synthetic_family(2, 11, 64, 200);
    for (const auto& c : fam.corpora)
        for (const auto& d : c.documents) {
            CHECK(d.size() >= 8);
            CHECK(d.size() <= 32);
        }
}

TEST_CASE("synthetic questions are parallel across languages") {
    const auto fam = generate_synthetic_family(3, 5, 64, 10);
    const auto q = make_synthetic_questions(fam, 6, 99);
    q.set.validate();
    CHECK(q.set.entries.size() == 18);
    CHECK(q.template_of_question.size() == 6);
    // parallel rendering: same word indices, different vocab ranges
    const auto& q0_syn0 = q.set.find(0, "syn0");
    const auto& q0_syn1 = q.set.find(0, "syn1");
    const auto t0 = fam.tokenize(q0_syn0.text);
    const auto t1 = fam.tokenize(q0_syn1.text);
    REQUIRE(t0.size() == t1.size());
    for (std::size_t i = 0; i < t0.size(); ++i) {
        CHECK(fam.category_of_token(t0[i]) == fam.category_of_token(t1[i]));
        CHECK(fam.language_index(t0[i]) == 0);
        CHECK(fam.language_index(t1[i]) == 1);
    }
}

TEST_CASE("question set loader enforces schema and parallelism") {
    const auto dir = testutil::fresh_tmpdir("questions");

    SUBCASE("2 languages x 3 shared ids loads 6 entries") {
        std::ofstream f(dir / "ok.csv");
        f << "question_id,language,domain,text\n";
        for (int id : {0, 1, 2})
            for (const char* lang : {"de", "fr"})
                f << id << ',' << lang << ",knowledge,\"question " << id << "\"\n";
        f.close();
        const auto set = load_question_set(dir / "ok.csv");
        CHECK(set.entries.size() == 6);
        CHECK(set.languages().size() == 2);
    }

    SUBCASE("missing id for one language is a parallelism error") {
        std::ofstream f(dir / "bad.csv");
        f << "question_id,language,domain,text\n";
        f << "5,de,knowledge,hallo\n";
        f << "6,de,knowledge,hallo2\n";
        f << "6,fr,knowledge,salut\n";
        f.close();
        CHECK_THROWS_AS(load_question_set(dir / "bad.csv"), DataError);
    }

    SUBCASE("unknown domain label is rejected") {
        std::ofstream f(dir / "dom.csv");
        f << "question_id,language,domain,text\n";
        f << "1,de,poetry,hallo\n";
        f.close();
        CHECK_THROWS_AS(load_question_set(dir / "dom.csv"), DataError);
    }

    SUBCASE("missing column is rejected") {
        std::ofstream f(dir / "col.csv");
        f << "question_id,language,text\n";
        f << "1,de,hallo\n";
        f.close();
        CHECK_THROWS_AS(load_question_set(dir / "col.csv"), DataError);
    }

    SUBCASE("tab separated files load too") {
        std::ofstream f(dir / "tabs.tsv");
        f << "question_id\tlanguage\tdomain\ttext\n";
        f << "1\tde\topinion\twas denkst du, und warum\n";
        f << "1\tfr\topinion\tqu'en penses-tu\n";
        f.close();
        const auto set = load_question_set(dir / "tabs.tsv");
        CHECK(set.entries.size() == 2);
        CHECK(set.find(1, "de").text == "was denkst du, und warum");
    }

    SUBCASE("writer and loader round-trip") {
        QuestionSet set;
        set.entries.push_back({0, "de", "hallo, \"welt\"", QuestionDomain::creative});
        set.entries.push_back({0, "fr", "salut", QuestionDomain::creative});
        write_question_set(dir / "rt.csv", set);
        const auto back = load_question_set(dir / "rt.csv");
        CHECK(back.entries.size() == 2);
        CHECK(back.find(0, "de").text == "hallo, \"welt\"");
        CHECK(back.find(0, "de").domain == QuestionDomain::creative);
    }
}

TEST_CASE("corpus loader") {
    const auto dir = testutil::fresh_tmpdir("corpus");

    SUBCASE("two-line file gives two documents, reload is identical") {
        std::ofstream f(dir / "two.txt");
        f << "alpha beta gamma\n";
        f << "beta delta\n";
        f.close();
        Vocabulary vocab;
        const auto c1 = load_corpus(dir / "two.txt", "xx", vocab);
        CHECK(c1.documents.size() == 2);
        CHECK(c1.token_count() == 5);
        CHECK(c1.vocab_slice.size() == 4);
        Vocabulary vocab2;
        const auto c2 = load_corpus(dir / "two.txt", "xx", vocab2);
        CHECK(c1.documents == c2.documents);
    }

    SUBCASE("empty after blank-line removal is an error") {
        std::ofstream f(dir / "empty.txt");
        f << "\n   \n\n";
        f.close();
        Vocabulary vocab;
        CHECK_THROWS_AS(load_corpus(dir / "empty.txt", "xx", vocab), DataError);
    }

    SUBCASE("missing file is an error") {
        Vocabulary vocab;
        CHECK_THROWS_AS(load_corpus(dir / "nope.txt", "xx", vocab), DataError);
    }

    SUBCASE("invalid utf-8 is a decode failure") {
        std::ofstream f(dir / "bin.txt", std::ios::binary);
        const char bytes[] = {'a', ' ', static_cast<char>(0xff), static_cast<char>(0xfe), '\n'};
        f.write(bytes, sizeof(bytes));
        f.close();
        Vocabulary vocab;
        CHECK_THROWS_AS(load_corpus(dir / "bin.txt", "xx", vocab), DataError);
    }

    SUBCASE("token cap truncates deterministically") {
        std::ofstream f(dir / "cap.txt");
        for (int i = 0; i < 10; ++i) f << "w" << i << " w" << i << "b\n";
        f.close();
        Vocabulary vocab;
        const auto c = load_corpus(dir / "cap.txt", "xx", vocab, 7);
        CHECK(c.token_count() == 7);
    }

    SUBCASE("synthetic corpus writes and reloads to the same token ids") {
        auto fam = generate_synthetic_family(2, 3, 16, 10);
        write_corpus(dir / "syn0.txt", fam.corpora[0], fam.vocab);
        Vocabulary fresh;  // ids differ, surface strings round-trip
        const auto back = load_corpus(dir / "syn0.txt", "syn0", fresh);
        CHECK(back.documents.size() == fam.corpora[0].documents.size());
        CHECK(back.token_count() == fam.corpora[0].token_count());
    }
}

TEST_CASE("token corpus invariant: vocab_slice covers documents") {
    TokenCorpus c;
    c.language = "xx";
    c.documents = {{1, 2}, {3}};
    c.vocab_slice = {1, 2};
    CHECK_THROWS_AS(c.validate(), DataError);
    c.vocab_slice.insert(3);
    CHECK_NOTHROW(c.validate());
}
