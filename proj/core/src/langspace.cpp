#include "steerbench/langspace.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

namespace steerbench {

Vocabulary::Vocabulary() {
    tokens_.push_back("<pad>");
    index_.emplace("<pad>", kPadToken);
}

TokenId Vocabulary::add(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    const TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(tok);
    index_.emplace(tok, id);
    return id;
}

std::optional<TokenId> Vocabulary::lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || id >= size()) throw DataError("token id out of vocabulary: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

std::size_t TokenCorpus::token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.size();
    return n;
}

void TokenCorpus::validate() const {
    if (token_count() == 0) throw DataError("empty corpus for language " + language);
    for (const auto& d : documents)
        for (TokenId t : d)
            if (!vocab_slice.count(t))
                throw DataError("token id " + std::to_string(t) + " missing from vocab_slice");
}

QuestionDomain parse_domain(const std::string& s) {
    if (s == "knowledge") return QuestionDomain::knowledge;
    if (s == "reasoning") return QuestionDomain::reasoning;
    if (s == "creative") return QuestionDomain::creative;
    if (s == "opinion") return QuestionDomain::opinion;
    if (s == "writing") return QuestionDomain::writing;
    throw DataError("unknown question domain: " + s);
}

std::string domain_name(QuestionDomain d) {
    switch (d) {
        case QuestionDomain::knowledge: return "knowledge";
        case QuestionDomain::reasoning: return "reasoning";
        case QuestionDomain::creative: return "creative";
        case QuestionDomain::opinion: return "opinion";
        case QuestionDomain::writing: return "writing";
    }
    return "knowledge";
}

std::vector<LanguageId> QuestionSet::languages() const {
    std::vector<LanguageId> out;
    for (const auto& e : entries)
        if (std::find(out.begin(), out.end(), e.language) == out.end()) out.push_back(e.language);
    return out;
}

std::vector<int> QuestionSet::question_ids() const {
    std::set<int> ids;
    for (const auto& e : entries) ids.insert(e.question_id);
    return {ids.begin(), ids.end()};
}

const QuestionEntry& QuestionSet::find(int question_id, const LanguageId& lang) const {
    for (const auto& e : entries)
        if (e.question_id == question_id && e.language == lang) return e;
    throw DataError("question " + std::to_string(question_id) + " missing for language " + lang);
}

void QuestionSet::validate() const {
    std::map<LanguageId, std::set<int>> per_lang;
    for (const auto& e : entries) {
        auto& ids = per_lang[e.language];
        if (!ids.insert(e.question_id).second)
            throw DataError("duplicate question_id " + std::to_string(e.question_id) +
                            " for language " + e.language);
    }
    if (per_lang.empty()) throw DataError("question set is empty");
    const auto& ref = per_lang.begin()->second;
    for (const auto& [lang, ids] : per_lang) {
        if (ids != ref)
            throw DataError("question set is not parallel: language " + lang +
                            " has a different question_id set than " + per_lang.begin()->first);
    }
}

namespace {

// Minimal delimited-row reader with RFC-4180 style quoting for comma files.
std::vector<std::string> split_row(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b = static_cast<unsigned char>(s[i]);
        std::size_t n;
        if (b < 0x80) n = 0;
        else if ((b >> 5) == 0x6) n = 1;
        else if ((b >> 4) == 0xE) n = 2;
        else if ((b >> 3) == 0x1E) n = 3;
        else return false;
        for (std::size_t k = 1; k <= n; ++k) {
            if (i + k >= s.size()) return false;
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
        }
        i += n + 1;
    }
    return true;
}

}  // namespace

QuestionSet load_question_set(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open question set: " + path.string());
    std::string header;
    if (!std::getline(f, header)) throw DataError("empty question set file: " + path.string());
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const char sep = header.find('\t') != std::string::npos ? '\t' : ',';
    const auto cols = split_row(header, sep);
    int c_id = -1, c_lang = -1, c_dom = -1, c_text = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const auto name = trim(cols[i]);
        if (name == "question_id") c_id = static_cast<int>(i);
        else if (name == "language") c_lang = static_cast<int>(i);
        else if (name == "domain") c_dom = static_cast<int>(i);
        else if (name == "text") c_text = static_cast<int>(i);
    }
    if (c_id < 0 || c_lang < 0 || c_dom < 0 || c_text < 0)
        throw DataError("question set header must contain question_id, language, domain, text");

    QuestionSet set;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_row(line, sep);
        const auto need = static_cast<std::size_t>(std::max({c_id, c_lang, c_dom, c_text})) + 1;
        if (fields.size() < need) throw DataError("short row in question set: " + line);
        QuestionEntry e;
        try {
            e.question_id = std::stoi(trim(fields[static_cast<std::size_t>(c_id)]));
        } catch (const std::exception&) {
            throw DataError("bad question_id in row: " + line);
        }
        e.language = trim(fields[static_cast<std::size_t>(c_lang)]);
        e.domain = parse_domain(trim(fields[static_cast<std::size_t>(c_dom)]));
        e.text = fields[static_cast<std::size_t>(c_text)];
        set.entries.push_back(std::move(e));
    }
    set.validate();
    return set;
}

void write_question_set(const std::filesystem::path& path, const QuestionSet& set) {
    std::ostringstream out;
    out << "question_id,language,domain,text\n";
    for (const auto& e : set.entries) {
        out << e.question_id << ',' << e.language << ',' << domain_name(e.domain) << ','
            << quote_csv(e.text) << '\n';
    }
    atomic_write_text(path, out.str());
}

const std::vector<SentenceTemplate>& sentence_templates() {
    // First ten skeletons lean on categories 0..4, last ten on 3..7; each
    // language family prefers one half, which gives families a shared
    // usage profile without sharing any surface tokens.
    static const std::vector<SentenceTemplate> kTemplates = {
        {{0, 1, 2}},
        {{0, 2, 1, 3}},
        {{1, 0, 2, 4}},
        {{2, 3, 0, 1}},
        {{0, 1, 4, 2, 3}},
        {{3, 2, 1, 0, 4}},
        {{0, 4, 2}},
        {{1, 2, 3, 4}},
        {{4, 0, 1, 2, 3}},
        {{2, 0, 3, 1}},
        {{5, 6, 7}},
        {{5, 7, 6, 3}},
        {{6, 5, 7, 4}},
        {{7, 3, 5, 6}},
        {{5, 6, 4, 7, 3}},
        {{3, 7, 6, 5, 4}},
        {{5, 4, 7}},
        {{6, 7, 3, 4}},
        {{4, 5, 6, 7, 3}},
        {{7, 5, 3, 6}},
    };
    return kTemplates;
}

TokenId SyntheticFamily::token_id(int lang, int word) const {
    return 1 + static_cast<TokenId>(lang) * vocab_per_lang + static_cast<TokenId>(word);
}

int SyntheticFamily::language_index(TokenId id) const {
    if (id <= 0 || id >= vocab_size()) return -1;
    return (id - 1) / vocab_per_lang;
}

int SyntheticFamily::category_of_word(int word) const {
    // Word indices are partitioned into equal contiguous category blocks.
    const int per_cat = vocab_per_lang / kNumSlotCategories;
    return std::min(word / per_cat, kNumSlotCategories - 1);
}

int SyntheticFamily::category_of_token(TokenId id) const {
    if (language_index(id) < 0) return -1;
    return category_of_word((id - 1) % vocab_per_lang);
}

int SyntheticFamily::language_index_of(const LanguageId& lang) const {
    for (int i = 0; i < n_languages; ++i)
        if (languages[static_cast<std::size_t>(i)] == lang) return i;
    return -1;
}

std::vector<TokenId> SyntheticFamily::tokenize(const std::string& text) const {
    std::vector<TokenId> out;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) {
        if (auto id = vocab.lookup(word)) out.push_back(*id);
    }
    return out;
}

std::string SyntheticFamily::detokenize(const std::vector<TokenId>& ids) const {
    std::vector<std::string> words;
    words.reserve(ids.size());
    for (TokenId id : ids)
        if (id > 0 && id < vocab.size()) words.push_back(vocab.token(id));
    return join(words, " ");
}

namespace {

constexpr int kMinDocLen = 8;
constexpr int kMaxDocLen = 32;
// How strongly a language's documents prefer its family's template pool.
constexpr double kFamilyPoolMass = 0.6;

int sample_template_index(std::mt19937& rng, int family) {
    const int n = static_cast<int>(sentence_templates().size());
    const int half = n / 2;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, half - 1);
    const bool own_pool = coin(rng) < kFamilyPoolMass;
    const int base = (family == 0) == own_pool ? 0 : half;
    return base + pick(rng);
}

}  // namespace

SyntheticFamily generate_synthetic_family(int n_languages, std::uint64_t seed,
                                          int vocab_per_lang, int docs_per_lang) {
    if (n_languages < 1) throw ConfigError("n_languages must be >= 1");
    if (vocab_per_lang < kNumSlotCategories)
        throw ConfigError("vocab_per_lang must be >= " + std::to_string(kNumSlotCategories));
    if (docs_per_lang < 1) throw ConfigError("docs_per_lang must be >= 1");

    SyntheticFamily fam;
    fam.n_languages = n_languages;
    fam.vocab_per_lang = vocab_per_lang;
    fam.seed = seed;

    for (int i = 0; i < n_languages; ++i) {
        fam.languages.push_back("syn" + std::to_string(i));
        fam.family_of_language.push_back(i < (n_languages + 1) / 2 ? 0 : 1);
        for (int w = 0; w < vocab_per_lang; ++w) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "syn%d:w%03d", i, w);
            fam.vocab.add(buf);
        }
    }

    const int per_cat = vocab_per_lang / kNumSlotCategories;
    for (int i = 0; i < n_languages; ++i) {
        // Independent stream per language keeps corpora stable if counts change.
        std::mt19937 rng(static_cast<std::uint32_t>(seed * 0x9E3779B9u + 17u * i + 1u));
        std::uniform_int_distribution<int> len_dist(kMinDocLen, kMaxDocLen);

        TokenCorpus corpus;
        corpus.language = fam.languages[static_cast<std::size_t>(i)];
        for (int d = 0; d < docs_per_lang; ++d) {
            const int target_len = len_dist(rng);
            const int tpl = sample_template_index(rng, fam.family_of_language[static_cast<std::size_t>(i)]);
            const auto& slots = sentence_templates()[static_cast<std::size_t>(tpl)].slots;
            std::vector<TokenId> doc;
            doc.reserve(static_cast<std::size_t>(target_len));
            // One skeleton repeated with fresh fillers; a document stays "on topic".
            while (static_cast<int>(doc.size()) < target_len) {
                for (int cat : slots) {
                    if (static_cast<int>(doc.size()) >= target_len) break;
                    std::uniform_int_distribution<int> word_dist(cat * per_cat, (cat + 1) * per_cat - 1);
                    doc.push_back(fam.token_id(i, word_dist(rng)));
                }
            }
            for (TokenId t : doc) corpus.vocab_slice.insert(t);
            corpus.documents.push_back(std::move(doc));
        }
        corpus.validate();
        fam.corpora.push_back(std::move(corpus));
    }
    return fam;
}

SyntheticQuestions make_synthetic_questions(const SyntheticFamily& family, int n_questions,
                                            std::uint64_t seed) {
    if (n_questions < 1) throw ConfigError("n_questions must be >= 1");
    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ 0xC0FFEEu));
    const auto& templates = sentence_templates();
    const int per_cat = family.vocab_per_lang / kNumSlotCategories;

    SyntheticQuestions out;
    const QuestionDomain domains[5] = {QuestionDomain::knowledge, QuestionDomain::reasoning,
                                       QuestionDomain::creative, QuestionDomain::opinion,
                                       QuestionDomain::writing};
    std::uniform_int_distribution<int> tpl_dist(0, static_cast<int>(templates.size()) - 1);
    for (int q = 0; q < n_questions; ++q) {
        const int tpl = tpl_dist(rng);
        const auto& slots = templates[static_cast<std::size_t>(tpl)].slots;
        // Two passes over the skeleton so the prompt sets the pattern clearly.
        std::vector<int> words;
        for (int rep = 0; rep < 2; ++rep) {
            for (int cat : slots) {
                std::uniform_int_distribution<int> word_dist(cat * per_cat, (cat + 1) * per_cat - 1);
                words.push_back(word_dist(rng));
            }
        }
        out.template_of_question.push_back(tpl);
        for (int i = 0; i < family.n_languages; ++i) {
            QuestionEntry e;
            e.question_id = q;
            e.language = family.languages[static_cast<std::size_t>(i)];
            e.domain = domains[tpl % 5];
            std::vector<TokenId> ids;
            ids.reserve(words.size());
            for (int w : words) ids.push_back(family.token_id(i, w));
            e.text = family.detokenize(ids);
            out.set.entries.push_back(std::move(e));
        }
    }
    out.set.validate();
    return out;
}

TokenCorpus load_corpus(const std::filesystem::path& path, const LanguageId& language,
                        Vocabulary& vocab, std::size_t max_tokens) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open corpus file: " + path.string());

    TokenCorpus corpus;
    corpus.language = language;
    std::string line;
    std::size_t total = 0;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!valid_utf8(line))
            throw DataError("corpus file is not valid UTF-8: " + path.string());
        if (trim(line).empty()) continue;
        std::vector<TokenId> doc;
        std::istringstream ss(line);
        std::string word;
        while (ss >> word) {
            if (max_tokens && total >= max_tokens) break;
            const TokenId id = vocab.add(word);
            doc.push_back(id);
            corpus.vocab_slice.insert(id);
            ++total;
        }
        if (!doc.empty()) corpus.documents.push_back(std::move(doc));
        if (max_tokens && total >= max_tokens) break;
    }
    if (corpus.token_count() == 0) throw DataError("empty corpus: " + path.string());
    return corpus;
}

void write_corpus(const std::filesystem::path& path, const TokenCorpus& corpus,
                  const Vocabulary& vocab) {
    std::ostringstream out;
    for (const auto& doc : corpus.documents) {
        for (std::size_t i = 0; i < doc.size(); ++i) {
            if (i) out << ' ';
            out << vocab.token(doc[i]);
        }
        out << '\n';
    }
    atomic_write_text(path, out.str());
}

}  // namespace steerbench
