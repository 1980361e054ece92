#pragma once

#include <filesystem>
#include <utility>

#include "steerbench/saecore.hpp"
#include "steerbench/steering.hpp"
#include "steerbench/toymodel.hpp"

namespace steerbench {

// --- backends -----------------------------------------------------------------

class LidBackend {
public:
    virtual ~LidBackend() = default;
    virtual std::pair<LanguageId, float> classify(const std::string& text) const = 0;
};

// Language detection over disjoint synthetic vocabularies: the language owning
// the majority of recognized tokens wins, confidence is the majority fraction.
class SyntheticVocabLid final : public LidBackend {
public:
    explicit SyntheticVocabLid(const SyntheticFamily& family) : family_(&family) {}
    std::pair<LanguageId, float> classify(const std::string& text) const override;

private:
    const SyntheticFamily* family_;
};

// Empty or unrecognizable text maps to an empty language id with confidence 0:
// a counted failure, never a crash.
std::pair<LanguageId, float> detect_language(const std::string& text, const LidBackend& backend);

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual int score(const std::string& question, const std::string& answer,
                      const LanguageId& source, const LanguageId& target) = 0;
    virtual std::size_t failure_count() const { return 0; }
};

// Scores by slot-category overlap: an answer that keeps to the question's
// template categories is relevant, drifting or empty answers are not.
class RuleBasedJudge final : public JudgeBackend {
public:
    explicit RuleBasedJudge(const SyntheticFamily& family, double full_threshold = 0.75,
                            double partial_threshold = 0.4)
        : family_(&family), full_(full_threshold), partial_(partial_threshold) {}
    int score(const std::string& question, const std::string& answer, const LanguageId& source,
              const LanguageId& target) override;

private:
    const SyntheticFamily* family_;
    double full_;
    double partial_;
};

int judge_relevance(const std::string& question, const std::string& answer,
                    const LanguageId& source, const LanguageId& target, JudgeBackend& judge);

// --- metrics -------------------------------------------------------------------

struct GenerationRecord {
    int question_id = 0;
    LanguageId source;
    LanguageId target;
    std::string method;
    int layer = -1;  // -1: not a single-layer intervention
    float alpha = 0.0f;
    std::string output_text;
    LanguageId detected;
    float confidence = 0.0f;
    int judge_score = -1;  // unset until judged
};

double lfs(std::span<const GenerationRecord> records);  // fraction detected == target
double or_score(std::span<const int> scores);           // mean of score / 2
double lss(double lfs_val, double or_val);              // harmonic mean, 0 at (0, 0)

struct EvalKey {
    LanguageId source;
    LanguageId target;
    std::string method;
    int layer = -1;
    float alpha = 0.0f;

    auto operator<=>(const EvalKey&) const = default;
};

struct EvalRow {
    std::size_t n = 0;
    double lfs = 0.0;
    double or_score = 0.0;
    double lss = 0.0;
};

struct EvalTable {
    std::map<EvalKey, EvalRow> rows;

    static EvalTable from_records(std::span<const GenerationRecord> records);
    // lss always recomputes to the harmonic mean: exactly for freshly built
    // tables, within the 6-decimal fixed-point grain for parsed CSVs.
    void validate(double tolerance = 1e-6) const;
};

std::string eval_table_csv(const EvalTable& table);
EvalTable parse_eval_table_csv(const std::string& csv);

// Source rows x target columns of LFS; missing pairs stay NaN / empty cells.
struct LfsMatrix {
    std::vector<LanguageId> languages;
    std::vector<double> values;  // n x n, NaN = missing

    double at(std::size_t i, std::size_t j) const { return values[i * languages.size() + j]; }
};

LfsMatrix lfs_matrix_from_table(const EvalTable& table, const std::string& method, int layer,
                                float alpha, const std::vector<LanguageId>& languages);
std::string matrix_csv(const LfsMatrix& m);
LfsMatrix parse_matrix_csv(const std::string& csv);

std::string records_json(std::span<const GenerationRecord> records);

// --- benchmark loop ---------------------------------------------------------------

// Token <-> text bridge for a model; the synthetic family provides one, external
// adapters bring their own.
class TextCodec {
public:
    virtual ~TextCodec() = default;
    virtual std::vector<TokenId> encode(const std::string& text) const = 0;
    virtual std::string decode(const std::vector<TokenId>& tokens) const = 0;
};

class FamilyCodec final : public TextCodec {
public:
    explicit FamilyCodec(const SyntheticFamily& family) : family_(&family) {}
    std::vector<TokenId> encode(const std::string& text) const override {
        return family_->tokenize(text);
    }
    std::string decode(const std::vector<TokenId>& tokens) const override {
        return family_->detokenize(tokens);
    }

private:
    const SyntheticFamily* family_;
};

// Lookup interface the benchmark resolves InterventionSpecs against.
class DirectionStore {
public:
    virtual ~DirectionStore() = default;
    virtual std::shared_ptr<const SteeringDirection> find(VectorMethod method, int layer,
                                                          const LanguageId& target,
                                                          const std::optional<LanguageId>& source) const = 0;
    virtual std::shared_ptr<const NeuronSet> find_neurons(const LanguageId& target) const = 0;
    virtual std::shared_ptr<const SAEParams> find_sae(int layer) const = 0;
};

class InMemoryDirectionStore final : public DirectionStore {
public:
    void add(SteeringDirection direction);
    void add_neurons(NeuronSet set);
    void add_sae(SAEParams params);

    std::shared_ptr<const SteeringDirection> find(VectorMethod method, int layer,
                                                  const LanguageId& target,
                                                  const std::optional<LanguageId>& source) const override;
    std::shared_ptr<const NeuronSet> find_neurons(const LanguageId& target) const override;
    std::shared_ptr<const SAEParams> find_sae(int layer) const override;

private:
    std::map<std::tuple<VectorMethod, int, LanguageId, std::string>,
             std::shared_ptr<const SteeringDirection>> directions_;
    std::map<LanguageId, std::shared_ptr<const NeuronSet>> neurons_;
    std::map<int, std::shared_ptr<const SAEParams>> saes_;
};

struct BenchBackends {
    const LidBackend* lid = nullptr;
    JudgeBackend* judge = nullptr;
};

struct SkippedRow {
    EvalKey key;
    std::string reason;  // "missing-artifact: ..."
};

struct BenchResult {
    EvalTable table;
    std::vector<GenerationRecord> records;
    std::vector<SkippedRow> skipped;
};

// Builds the interventions an InterventionSpec asks for, or reports what is
// missing. Baseline and "none" methods yield no interventions.
struct BuiltInterventions {
    std::vector<Intervention> interventions;
    bool ok = false;
    std::string missing;  // why the build failed
};
BuiltInterventions build_interventions(const InterventionSpec& spec, const DirectionStore& store,
                                       const LanguageId& target, const LanguageId& source,
                                       const HookedModel& model);

BenchResult run_benchmark(const HookedModel& model, const QuestionSet& questions,
                          const std::vector<InterventionSpec>& methods,
                          const DirectionStore& store,
                          const std::vector<std::pair<LanguageId, LanguageId>>& pairs,
                          const TextCodec& codec, const BenchBackends& backends,
                          const DecodingSpec& decoding,
                          const InstructionTable* instructions = nullptr);

struct SweepCell {
    int layer = 0;
    float alpha = 0.0f;
    std::size_t n = 0;
    double lfs = 0.0;
    double or_score = 0.0;
    double lss = 0.0;
    std::string status = "ok";
};

struct SweepResult {
    std::vector<SweepCell> cells;
    int selected = -1;  // index of the argmax-LSS cell, ties to lower layer/alpha

    const SweepCell& selected_cell() const;
};

// Argmax by LSS over ok cells; ties resolve to the earlier cell (lower layer,
// then lower alpha, given grid order). -1 when every cell failed.
int select_best_cell(const std::vector<SweepCell>& cells);

SweepResult sweep(const HookedModel& model, const std::string& method,
                  const std::vector<int>& layers, const std::vector<float>& alphas,
                  const std::vector<std::pair<LanguageId, LanguageId>>& pairs,
                  const QuestionSet& questions, const DirectionStore& store,
                  const TextCodec& codec, const BenchBackends& backends,
                  const DecodingSpec& decoding);

std::string sweep_csv(const SweepResult& result);

// --- external judge client ----------------------------------------------------------

// Renders the judge instruction with the four fields; the reply must contain
// "Rating: [[score]]".
std::string render_judge_prompt(const std::string& source_language,
                                const std::string& target_language, const std::string& question,
                                const std::string& response);

// First "Rating: [[k]]" with k in {0,1,2}, if any.
std::optional<int> parse_judge_reply(const std::string& reply);

struct JudgeClientConfig {
    std::string base_url;                     // e.g. http://localhost:8080
    std::string endpoint = "/v1/chat/completions";
    std::string model;
    std::string auth_env_var = "STEERBENCH_JUDGE_TOKEN";
    int timeout_seconds = 30;
    int retries = 2;        // per request, after the first attempt
    int max_in_flight = 4;  // bounded concurrency window
};

class ExternalJudgeClient final : public JudgeBackend {
public:
    explicit ExternalJudgeClient(JudgeClientConfig config);
    ~ExternalJudgeClient() override;

    int score(const std::string& question, const std::string& answer, const LanguageId& source,
              const LanguageId& target) override;

    std::size_t parse_failures() const;
    std::size_t transport_failures() const;
    std::size_t failure_count() const override;
    std::size_t judged_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace steerbench
