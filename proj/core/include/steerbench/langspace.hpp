#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "steerbench/common.hpp"

namespace steerbench {

using LanguageId = std::string;
using TokenId = std::int32_t;

constexpr TokenId kPadToken = 0;

// Bidirectional token string <-> id table. Id 0 is reserved for padding and
// never appears in documents.
class Vocabulary {
public:
    Vocabulary();

    TokenId add(const std::string& tok);               // existing id if already present
    std::optional<TokenId> lookup(const std::string& tok) const;
    const std::string& token(TokenId id) const;
    std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, TokenId> index_;
};

struct TokenCorpus {
    LanguageId language;
    std::vector<std::vector<TokenId>> documents;
    std::set<TokenId> vocab_slice;

    std::size_t token_count() const;
    void validate() const;  // vocab_slice covers documents, token_count > 0
};

enum class QuestionDomain { knowledge, reasoning, creative, opinion, writing };

QuestionDomain parse_domain(const std::string& s);
std::string domain_name(QuestionDomain d);

struct QuestionEntry {
    int question_id = 0;
    LanguageId language;
    std::string text;
    QuestionDomain domain = QuestionDomain::knowledge;
};

struct QuestionSet {
    std::vector<QuestionEntry> entries;

    std::vector<LanguageId> languages() const;      // unique, first-seen order
    std::vector<int> question_ids() const;          // unique, sorted
    const QuestionEntry& find(int question_id, const LanguageId& lang) const;
    void validate() const;                          // parallelism + uniqueness
};

QuestionSet load_question_set(const std::filesystem::path& path);
void write_question_set(const std::filesystem::path& path, const QuestionSet& set);

// --- synthetic language family ----------------------------------------------

// One sentence skeleton: a sequence of slot categories.
struct SentenceTemplate {
    std::vector<int> slots;
};

// The fixed 20-template grammar shared by every synthetic language.
const std::vector<SentenceTemplate>& sentence_templates();
constexpr int kNumSlotCategories = 8;

// Languages rendered from the shared grammar with pairwise-disjoint vocabularies.
// Word index w of language i maps to the global token id 1 + i*vocab_per_lang + w,
// and slot categories partition word indices identically across languages.
struct SyntheticFamily {
    int n_languages = 0;
    int vocab_per_lang = 0;
    std::uint64_t seed = 0;
    Vocabulary vocab;
    std::vector<LanguageId> languages;
    std::vector<int> family_of_language;  // two-way split: 0 for the first half
    std::vector<TokenCorpus> corpora;

    std::int32_t vocab_size() const { return 1 + n_languages * vocab_per_lang; }
    TokenId token_id(int lang, int word) const;
    int language_index(TokenId id) const;      // -1 for pad / out of range
    int category_of_token(TokenId id) const;   // -1 for pad / out of range
    int category_of_word(int word) const;
    int language_index_of(const LanguageId& lang) const;

    std::vector<TokenId> tokenize(const std::string& text) const;  // unknown words dropped
    std::string detokenize(const std::vector<TokenId>& ids) const;
};

SyntheticFamily generate_synthetic_family(int n_languages, std::uint64_t seed,
                                          int vocab_per_lang, int docs_per_lang);

// Parallel question set rendered from the shared grammar: one template + filler
// choice per question id, surfaced in every language's private vocabulary.
struct SyntheticQuestions {
    QuestionSet set;
    std::vector<int> template_of_question;  // indexed by question_id
};

SyntheticQuestions make_synthetic_questions(const SyntheticFamily& family, int n_questions,
                                            std::uint64_t seed);

// Plain-text corpus loader: UTF-8, one document per line, whitespace tokens.
// max_tokens = 0 loads everything; otherwise documents are cut off once the cap
// is reached.
TokenCorpus load_corpus(const std::filesystem::path& path, const LanguageId& language,
                        Vocabulary& vocab, std::size_t max_tokens = 0);

void write_corpus(const std::filesystem::path& path, const TokenCorpus& corpus,
                  const Vocabulary& vocab);

}  // namespace steerbench
