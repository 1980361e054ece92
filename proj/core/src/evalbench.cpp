#include "steerbench/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace steerbench {

std::pair<LanguageId, float> SyntheticVocabLid::classify(const std::string& text) const {
    const auto tokens = family_->tokenize(text);
    std::vector<std::size_t> counts(static_cast<std::size_t>(family_->n_languages), 0);
    std::size_t recognized = 0;
    for (TokenId t : tokens) {
        const int lang = family_->language_index(t);
        if (lang < 0) continue;
        ++counts[static_cast<std::size_t>(lang)];
        ++recognized;
    }
    if (recognized == 0) return {LanguageId{}, 0.0f};
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best]) best = i;
    return {family_->languages[best],
            static_cast<float>(counts[best]) / static_cast<float>(recognized)};
}

std::pair<LanguageId, float> detect_language(const std::string& text, const LidBackend& backend) {
    if (trim(text).empty()) return {LanguageId{}, 0.0f};
    return backend.classify(text);
}

int RuleBasedJudge::score(const std::string& question, const std::string& answer,
                          const LanguageId& /*source*/, const LanguageId& /*target*/) {
    const auto q_tokens = family_->tokenize(question);
    std::set<int> signature;
    for (TokenId t : q_tokens) {
        const int c = family_->category_of_token(t);
        if (c >= 0) signature.insert(c);
    }
    if (signature.empty()) return 0;

    const auto a_tokens = family_->tokenize(answer);
    std::size_t known = 0, inside = 0;
    for (TokenId t : a_tokens) {
        const int c = family_->category_of_token(t);
        if (c < 0) continue;
        ++known;
        if (signature.count(c)) ++inside;
    }
    if (known == 0) return 0;
    const double frac = static_cast<double>(inside) / static_cast<double>(known);
    if (frac >= full_) return 2;
    if (frac >= partial_) return 1;
    return 0;
}

int judge_relevance(const std::string& question, const std::string& answer,
                    const LanguageId& source, const LanguageId& target, JudgeBackend& judge) {
    const int s = judge.score(question, answer, source, target);
    if (s < 0 || s > 2) throw DataError("judge returned a score outside {0,1,2}");
    return s;
}

double lfs(std::span<const GenerationRecord> records) {
    if (records.empty()) throw DataError("lfs: no records");
    std::size_t hit = 0;
    for (const auto& r : records)
        if (!r.detected.empty() && r.detected == r.target) ++hit;
    return static_cast<double>(hit) / static_cast<double>(records.size());
}

double or_score(std::span<const int> scores) {
    if (scores.empty()) throw DataError("or_score: no scores");
    double sum = 0.0;
    for (int s : scores) {
        if (s < 0 || s > 2) throw DataError("or_score: score outside {0,1,2}");
        sum += static_cast<double>(s) / 2.0;
    }
    return sum / static_cast<double>(scores.size());
}

double lss(double lfs_val, double or_val) {
    if (lfs_val + or_val <= 0.0) return 0.0;
    return 2.0 * lfs_val * or_val / (lfs_val + or_val);
}

EvalTable EvalTable::from_records(std::span<const GenerationRecord> records) {
    std::map<EvalKey, std::vector<const GenerationRecord*>> groups;
    for (const auto& r : records)
        groups[{r.source, r.target, r.method, r.layer, r.alpha}].push_back(&r);

    EvalTable table;
    for (const auto& [key, recs] : groups) {
        EvalRow row;
        row.n = recs.size();
        std::size_t hit = 0;
        double score_sum = 0.0;
        for (const auto* r : recs) {
            if (!r->detected.empty() && r->detected == r->target) ++hit;
            const int s = r->judge_score < 0 ? 0 : r->judge_score;
            score_sum += static_cast<double>(s) / 2.0;
        }
        row.lfs = static_cast<double>(hit) / static_cast<double>(row.n);
        row.or_score = score_sum / static_cast<double>(row.n);
        row.lss = lss(row.lfs, row.or_score);
        table.rows.emplace(key, row);
    }
    return table;
}

void EvalTable::validate(double tolerance) const {
    for (const auto& [key, row] : rows) {
        const double expect = lss(row.lfs, row.or_score);
        if (std::fabs(row.lss - expect) > tolerance)
            throw DataError("eval table row violates the harmonic-mean invariant");
    }
}

std::string eval_table_csv(const EvalTable& table) {
    std::ostringstream out;
    out << "source,target,method,layer,alpha,n,lfs,or,lss\n";
    for (const auto& [key, row] : table.rows) {
        out << key.source << ',' << key.target << ',' << key.method << ',' << key.layer << ','
            << format_fixed(key.alpha) << ',' << row.n << ',' << format_fixed(row.lfs) << ','
            << format_fixed(row.or_score) << ',' << format_fixed(row.lss) << '\n';
    }
    return out.str();
}

EvalTable parse_eval_table_csv(const std::string& csv) {
    EvalTable table;
    const auto lines = split(csv, '\n');
    if (lines.empty() || trim(lines[0]) != "source,target,method,layer,alpha,n,lfs,or,lss")
        throw DataError("eval table csv: unexpected header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split(lines[i], ',');
        if (f.size() != 9) throw DataError("eval table csv: bad row: " + lines[i]);
        EvalKey key{f[0], f[1], f[2], std::stoi(f[3]), std::stof(f[4])};
        EvalRow row{static_cast<std::size_t>(std::stoull(f[5])), std::stod(f[6]), std::stod(f[7]),
                    std::stod(f[8])};
        table.rows.emplace(key, row);
    }
    return table;
}

LfsMatrix lfs_matrix_from_table(const EvalTable& table, const std::string& method, int layer,
                                float alpha, const std::vector<LanguageId>& languages) {
    LfsMatrix m;
    m.languages = languages;
    m.values.assign(languages.size() * languages.size(),
                    std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < languages.size(); ++i) {
        for (std::size_t j = 0; j < languages.size(); ++j) {
            auto it = table.rows.find({languages[i], languages[j], method, layer, alpha});
            if (it != table.rows.end()) m.values[i * languages.size() + j] = it->second.lfs;
        }
    }
    return m;
}

std::string matrix_csv(const LfsMatrix& m) {
    std::ostringstream out;
    out << "source";
    for (const auto& l : m.languages) out << ',' << l;
    out << '\n';
    for (std::size_t i = 0; i < m.languages.size(); ++i) {
        out << m.languages[i];
        for (std::size_t j = 0; j < m.languages.size(); ++j) {
            const double v = m.at(i, j);
            out << ',';
            if (!std::isnan(v)) out << format_fixed(v);
        }
        out << '\n';
    }
    return out.str();
}

LfsMatrix parse_matrix_csv(const std::string& csv) {
    const auto lines = split(csv, '\n');
    if (lines.empty()) throw DataError("matrix csv: empty");
    auto header = split(lines[0], ',');
    if (header.empty() || header[0] != "source") throw DataError("matrix csv: unexpected header");
    LfsMatrix m;
    m.languages.assign(header.begin() + 1, header.end());
    m.values.assign(m.languages.size() * m.languages.size(),
                    std::numeric_limits<double>::quiet_NaN());
    std::size_t row = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const auto f = split(lines[i], ',');
        if (f.size() != m.languages.size() + 1) throw DataError("matrix csv: bad row: " + lines[i]);
        if (row >= m.languages.size() || f[0] != m.languages[row])
            throw DataError("matrix csv: row order mismatch");
        for (std::size_t j = 0; j < m.languages.size(); ++j)
            if (!trim(f[j + 1]).empty()) m.values[row * m.languages.size() + j] = std::stod(f[j + 1]);
        ++row;
    }
    return m;
}

std::string records_json(std::span<const GenerationRecord> records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j;
        j["question_id"] = r.question_id;
        j["source"] = r.source;
        j["target"] = r.target;
        j["method"] = r.method;
        j["layer"] = r.layer;
        j["alpha"] = r.alpha;
        j["output_text"] = r.output_text;
        j["detected"] = r.detected;
        j["confidence"] = r.confidence;
        j["judge_score"] = r.judge_score;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

// --- direction store ---------------------------------------------------------------

namespace {
std::string source_key(const std::optional<LanguageId>& source) {
    return source ? *source : std::string();
}
}  // namespace

void InMemoryDirectionStore::add(SteeringDirection direction) {
    auto key = std::make_tuple(direction.method, direction.layer, direction.target,
                               source_key(direction.source));
    directions_[key] = std::make_shared<const SteeringDirection>(std::move(direction));
}

void InMemoryDirectionStore::add_neurons(NeuronSet set) {
    const LanguageId key = set.target;
    neurons_[key] = std::make_shared<const NeuronSet>(std::move(set));
}

void InMemoryDirectionStore::add_sae(SAEParams params) {
    const int key = params.layer;
    saes_[key] = std::make_shared<const SAEParams>(std::move(params));
}

std::shared_ptr<const SteeringDirection> InMemoryDirectionStore::find(
    VectorMethod method, int layer, const LanguageId& target,
    const std::optional<LanguageId>& source) const {
    auto it = directions_.find(std::make_tuple(method, layer, target, source_key(source)));
    return it == directions_.end() ? nullptr : it->second;
}

std::shared_ptr<const NeuronSet> InMemoryDirectionStore::find_neurons(
    const LanguageId& target) const {
    auto it = neurons_.find(target);
    return it == neurons_.end() ? nullptr : it->second;
}

std::shared_ptr<const SAEParams> InMemoryDirectionStore::find_sae(int layer) const {
    auto it = saes_.find(layer);
    return it == saes_.end() ? nullptr : it->second;
}

// --- benchmark loop ------------------------------------------------------------------

BuiltInterventions build_interventions(const InterventionSpec& spec, const DirectionStore& store,
                                       const LanguageId& target, const LanguageId& source,
                                       const HookedModel& model) {
    BuiltInterventions out;
    const auto& m = spec.method;
    if (m == "none" || m == "baseline_english" || m == "baseline_target") {
        out.ok = true;
        return out;
    }
    if (m == "lape") {
        model.require(HookSite::mlp_activation, "neuron-level (lape) interventions");
        auto set = store.find_neurons(target);
        if (!set) {
            out.missing = "missing-artifact: neuron set for target " + target;
            return out;
        }
        out.interventions = make_lape_interventions(set, spec.alpha, spec.mode,
                                                    spec.deactivate_others, model.n_layers());
        out.ok = true;
        return out;
    }
    const VectorMethod vm = parse_method(m);
    const bool pair_specific = vm == VectorMethod::diffmean || vm == VectorMethod::sae_diffmean;
    if (spec.layers.empty()) {
        out.missing = "missing-artifact: no layer configured for method " + m;
        return out;
    }
    for (int layer : spec.layers) {
        if (layer < 0 || layer >= model.n_layers()) {
            out.missing = "missing-artifact: layer " + std::to_string(layer) + " out of model bounds";
            return out;
        }
        const std::optional<LanguageId> src =
            pair_specific ? std::optional<LanguageId>(source) : std::nullopt;
        auto dir = store.find(vm, layer, target, src);
        if (!dir || dir->degenerate) {
            out.missing = "missing-artifact: " + m + " direction for target " + target +
                          (pair_specific ? " source " + source : std::string()) + " layer " +
                          std::to_string(layer) + " (run the vectors command)";
            return out;
        }
        if (vm == VectorMethod::pca) {
            out.interventions.push_back(make_pca_intervention(dir, spec.alpha));
        } else if (vm == VectorMethod::sae_diffmean) {
            auto sae = store.find_sae(layer);
            if (!sae) {
                out.missing = "missing-artifact: no sparse autoencoder at layer " +
                              std::to_string(layer) + " (run the vectors command)";
                return out;
            }
            out.interventions.push_back(make_sae_intervention(sae, dir, spec.alpha));
        } else {
            out.interventions.push_back(make_additive_intervention(dir, spec.alpha));
        }
    }
    out.ok = true;
    return out;
}

namespace {

int spec_key_layer(const InterventionSpec& spec) {
    if (spec.method == "lape" || spec.method == "none" || spec.method == "baseline_english" ||
        spec.method == "baseline_target")
        return -1;
    return spec.layers.size() == 1 ? spec.layers[0] : -1;
}

}  // namespace

BenchResult run_benchmark(const HookedModel& model, const QuestionSet& questions,
                          const std::vector<InterventionSpec>& methods,
                          const DirectionStore& store,
                          const std::vector<std::pair<LanguageId, LanguageId>>& pairs,
                          const TextCodec& codec, const BenchBackends& backends,
                          const DecodingSpec& decoding, const InstructionTable* instructions) {
    if (!backends.lid || !backends.judge) throw ConfigError("benchmark needs lid and judge backends");
    questions.validate();
    const auto ids = questions.question_ids();

    struct Job {
        const InterventionSpec* spec;
        LanguageId source, target;
        int question_id;
        std::string prompt;
        const std::vector<Intervention>* interventions;
        GenerationRecord record;
    };

    BenchResult result;
    std::vector<Job> jobs;
    // Interventions are built once per (method, pair) and shared by its jobs.
    std::vector<std::unique_ptr<std::vector<Intervention>>> built_store;

    for (const auto& spec : methods) {
        for (const auto& [source, target] : pairs) {
            auto built = build_interventions(spec, store, target, source, model);
            if (!built.ok) {
                result.skipped.push_back(
                    {{source, target, spec.method, spec_key_layer(spec), spec.alpha}, built.missing});
                continue;
            }
            built_store.push_back(
                std::make_unique<std::vector<Intervention>>(std::move(built.interventions)));
            const auto* iv = built_store.back().get();
            for (int id : ids) {
                Job job;
                job.spec = &spec;
                job.source = source;
                job.target = target;
                job.question_id = id;
                const auto& q = questions.find(id, source);
                job.prompt = q.text;
                if (spec.method == "baseline_english")
                    job.prompt = prompt_baseline(q.text, target, PromptVariant::english_instruction,
                                                 instructions ? *instructions : default_instruction_table());
                else if (spec.method == "baseline_target")
                    job.prompt = prompt_baseline(q.text, target, PromptVariant::target_instruction,
                                                 instructions ? *instructions : default_instruction_table());
                job.interventions = iv;
                jobs.push_back(std::move(job));
            }
        }
    }

    parallel_for(jobs.size(), [&](std::size_t i) {
        auto& job = jobs[i];
        GenerationRecord rec;
        rec.question_id = job.question_id;
        rec.source = job.source;
        rec.target = job.target;
        rec.method = job.spec->method;
        rec.layer = spec_key_layer(*job.spec);
        rec.alpha = job.spec->alpha;
        const auto prompt_tokens = codec.encode(job.prompt);
        if (prompt_tokens.empty()) {
            rec.output_text.clear();
        } else {
            const auto generated = model.generate(prompt_tokens, *job.interventions, decoding);
            rec.output_text = codec.decode(generated);
        }
        const auto [detected, confidence] = detect_language(rec.output_text, *backends.lid);
        rec.detected = detected;
        rec.confidence = confidence;
        job.record = std::move(rec);
    });

    // Judging runs after generation, in job order; external clients bound their
    // own request concurrency.
    result.records.reserve(jobs.size());
    for (auto& job : jobs) {
        const auto& q = questions.find(job.question_id, job.source);
        job.record.judge_score = judge_relevance(q.text, job.record.output_text, job.source,
                                                 job.target, *backends.judge);
        result.records.push_back(std::move(job.record));
    }
    result.table = EvalTable::from_records(result.records);
    return result;
}

const SweepCell& SweepResult::selected_cell() const {
    if (selected < 0) throw DataError("sweep selected no cell (all cells failed)");
    return cells[static_cast<std::size_t>(selected)];
}

SweepResult sweep(const HookedModel& model, const std::string& method,
                  const std::vector<int>& layers, const std::vector<float>& alphas,
                  const std::vector<std::pair<LanguageId, LanguageId>>& pairs,
                  const QuestionSet& questions, const DirectionStore& store,
                  const TextCodec& codec, const BenchBackends& backends,
                  const DecodingSpec& decoding) {
    if (layers.empty() || alphas.empty()) throw ConfigError("sweep: empty layer or alpha grid");
    SweepResult result;
    for (int layer : layers) {
        for (float alpha : alphas) {
            InterventionSpec spec;
            spec.method = method;
            spec.layers = {layer};
            spec.alpha = alpha;
            SweepCell cell;
            cell.layer = layer;
            cell.alpha = alpha;
            auto bench = run_benchmark(model, questions, {spec}, store, pairs, codec, backends,
                                       decoding);
            if (bench.records.empty()) {
                cell.status = bench.skipped.empty() ? "missing-artifact" : bench.skipped[0].reason;
            } else {
                cell.n = bench.records.size();
                cell.lfs = lfs(bench.records);
                std::vector<int> scores;
                scores.reserve(bench.records.size());
                for (const auto& r : bench.records) scores.push_back(std::max(0, r.judge_score));
                cell.or_score = or_score(scores);
                cell.lss = lss(cell.lfs, cell.or_score);
            }
            result.cells.push_back(cell);
        }
    }
    result.selected = select_best_cell(result.cells);
    return result;
}

int select_best_cell(const std::vector<SweepCell>& cells) {
    int best = -1;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (c.status != "ok") continue;
        if (best < 0 || c.lss > cells[static_cast<std::size_t>(best)].lss)
            best = static_cast<int>(i);
    }
    return best;
}

std::string sweep_csv(const SweepResult& result) {
    std::ostringstream out;
    out << "layer,alpha,n,lfs,or,lss,status,selected\n";
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        out << c.layer << ',' << format_fixed(c.alpha) << ',' << c.n << ',' << format_fixed(c.lfs)
            << ',' << format_fixed(c.or_score) << ',' << format_fixed(c.lss) << ',' << c.status
            << ',' << (static_cast<int>(i) == result.selected ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace steerbench
