#include "steerbench/steering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

namespace steerbench {

std::string method_name(VectorMethod m) {
    switch (m) {
        case VectorMethod::diffmean: return "diffmean";
        case VectorMethod::probe: return "probe";
        case VectorMethod::pca: return "pca";
        case VectorMethod::lda: return "lda";
        case VectorMethod::sae_diffmean: return "sae_diffmean";
    }
    return "diffmean";
}

VectorMethod parse_method(const std::string& s) {
    if (s == "diffmean") return VectorMethod::diffmean;
    if (s == "probe") return VectorMethod::probe;
    if (s == "pca") return VectorMethod::pca;
    if (s == "lda") return VectorMethod::lda;
    if (s == "sae_diffmean") return VectorMethod::sae_diffmean;
    throw ConfigError("unknown steering method: " + s);
}

double SteeringDirection::norm() const {
    double s = 0.0;
    for (float v : vector) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

namespace {

constexpr double kDegenerateNorm = 1e-12;

void mark_if_degenerate(SteeringDirection& dir) {
    const double n = dir.norm();
    dir.degenerate = !(n > kDegenerateNorm) || !std::isfinite(n);
}

// Equal-share balanced pool: row indices are drawn round-robin across the
// negative batches (shuffled within each batch) until `want` rows are taken.
std::vector<std::vector<float>> balanced_negative_rows(
    const std::vector<ActivationBatch>& negatives, std::size_t want, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> order(negatives.size());
    for (std::size_t b = 0; b < negatives.size(); ++b) {
        order[b].resize(negatives[b].n_rows());
        std::iota(order[b].begin(), order[b].end(), 0);
        std::mt19937 rng(static_cast<std::uint32_t>(seed + 101 * b + 7));
        std::shuffle(order[b].begin(), order[b].end(), rng);
    }
    std::vector<std::vector<float>> rows;
    rows.reserve(want);
    std::vector<std::size_t> cursor(negatives.size(), 0);
    bool progressed = true;
    while (rows.size() < want && progressed) {
        progressed = false;
        for (std::size_t b = 0; b < negatives.size() && rows.size() < want; ++b) {
            if (cursor[b] >= order[b].size()) continue;
            const auto r = negatives[b].row(order[b][cursor[b]++]);
            rows.emplace_back(r.begin(), r.end());
            progressed = true;
        }
    }
    return rows;
}

}  // namespace

SteeringDirection diffmean_direction(const LanguageStats& stats_target,
                                     const LanguageStats& stats_source, int layer) {
    if (layer < 0 || layer >= stats_target.n_layers || layer >= stats_source.n_layers)
        throw ConfigError("diffmean layer out of range");
    const auto& mt = stats_target.residual_mean[static_cast<std::size_t>(layer)];
    const auto& ms = stats_source.residual_mean[static_cast<std::size_t>(layer)];
    if (mt.size() != ms.size()) throw DataError("diffmean: dimension mismatch between stats");

    SteeringDirection dir;
    dir.method = VectorMethod::diffmean;
    dir.layer = layer;
    dir.target = stats_target.language;
    dir.source = stats_source.language;
    dir.vector.resize(mt.size());
    for (std::size_t i = 0; i < mt.size(); ++i) dir.vector[i] = mt[i] - ms[i];
    mark_if_degenerate(dir);
    return dir;
}

std::vector<float> apply_additive(std::span<const float> h, const SteeringDirection& direction,
                                  float alpha) {
    if (direction.degenerate) throw DataError("cannot apply a degenerate steering direction");
    if (h.size() != direction.vector.size())
        throw DataError("apply_additive: dimension mismatch (" + std::to_string(h.size()) + " vs " +
                        std::to_string(direction.vector.size()) + ")");
    const double inv = 1.0 / direction.norm();
    std::vector<float> out(h.begin(), h.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += alpha * static_cast<float>(direction.vector[i] * inv);
    return out;
}

SteeringDirection train_probe(const ActivationBatch& positive,
                              const std::vector<ActivationBatch>& negatives,
                              const ProbeConfig& config, ProbeReport* report) {
    const auto d = static_cast<std::size_t>(positive.dim);
    if (d == 0 || positive.n_rows() == 0) throw DataError("train_probe: empty positive batch");
    std::size_t total_neg = 0;
    for (const auto& b : negatives) {
        if (static_cast<std::size_t>(b.dim) != d) throw DataError("train_probe: negative dim mismatch");
        total_neg += b.n_rows();
    }
    if (total_neg == 0) throw DataError("train_probe: no negative rows");

    // Balance classes by downsampling the larger side.
    const std::size_t per_class = std::min(positive.n_rows(), total_neg);
    auto neg_rows = balanced_negative_rows(negatives, per_class, config.seed);

    std::vector<std::size_t> pos_order(positive.n_rows());
    std::iota(pos_order.begin(), pos_order.end(), 0);
    std::mt19937 rng(static_cast<std::uint32_t>(config.seed ^ 0x9b0b3u));
    std::shuffle(pos_order.begin(), pos_order.end(), rng);

    struct Sample {
        const float* x;
        float y;
    };
    std::vector<Sample> data;
    data.reserve(2 * per_class);
    for (std::size_t i = 0; i < per_class; ++i)
        data.push_back({positive.row(pos_order[i]).data(), 1.0f});
    for (const auto& r : neg_rows) data.push_back({r.data(), 0.0f});
    std::shuffle(data.begin(), data.end(), rng);

    const auto n_held = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                     config.holdout_fraction * static_cast<float>(data.size())));
    const std::size_t n_train = data.size() > n_held ? data.size() - n_held : data.size();

    // plain minibatch gradient descent at the configured step size
    std::vector<float> w(d, 0.0f);
    float bias = 0.0f;
    std::vector<float> gw(d);
    double last_loss = 0.0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch_size));
            std::fill(gw.begin(), gw.end(), 0.0f);
            float gb = 0.0f;
            double loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                double z = bias;
                for (std::size_t j = 0; j < d; ++j) z += static_cast<double>(w[j]) * data[i].x[j];
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double y = data[i].y;
                loss += -(y * std::log(std::max(p, 1e-12)) + (1.0 - y) * std::log(std::max(1.0 - p, 1e-12)));
                const auto g = static_cast<float>(p - y);
                for (std::size_t j = 0; j < d; ++j) gw[j] += g * data[i].x[j];
                gb += g;
            }
            const float inv_n = 1.0f / static_cast<float>(end - start);
            last_loss = loss * inv_n;
            for (std::size_t j = 0; j < d; ++j) w[j] -= config.learning_rate * gw[j] * inv_n;
            bias -= config.learning_rate * gb * inv_n;
        }
    }

    std::size_t correct = 0;
    for (std::size_t i = n_train; i < data.size(); ++i) {
        double z = bias;
        for (std::size_t j = 0; j < d; ++j) z += static_cast<double>(w[j]) * data[i].x[j];
        const bool pred = z > 0.0;
        if (pred == (data[i].y > 0.5f)) ++correct;
    }

    SteeringDirection dir;
    dir.method = VectorMethod::probe;
    dir.layer = positive.layer;
    dir.target = positive.language;
    dir.vector = w;
    mark_if_degenerate(dir);
    if (report) {
        report->heldout_accuracy = data.size() > n_train
                                       ? static_cast<float>(correct) / static_cast<float>(data.size() - n_train)
                                       : 0.0f;
        report->final_loss = static_cast<float>(last_loss);
        report->n_train = n_train;
        report->n_heldout = data.size() - n_train;
    }
    return dir;
}

SteeringDirection pca_components(const ActivationBatch& batch, int k) {
    const auto n = batch.n_rows();
    const auto d = static_cast<std::size_t>(batch.dim);
    if (k < 1) throw ConfigError("pca_components: k must be >= 1");
    if (static_cast<std::size_t>(k) >= std::min(n, d))
        throw ConfigError("pca_components: k must be < min(n_samples, dim)");

    Eigen::MatrixXd X(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = batch.row(i);
        for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;

    // Eigendecomposition of the covariance; the SVD route is kept as an
    // independent oracle in the tests.
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw DataError("pca_components: eigendecomposition failed");

    SteeringDirection dir;
    dir.method = VectorMethod::pca;
    dir.layer = batch.layer;
    dir.target = batch.language;
    dir.component_rows = k;
    dir.components.resize(static_cast<std::size_t>(k) * d);
    for (int c = 0; c < k; ++c) {
        // eigenvalues ascend; take from the top
        Eigen::VectorXd v = es.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
        // deterministic sign: largest-magnitude coordinate is positive
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0) v = -v;
        for (std::size_t j = 0; j < d; ++j)
            dir.components[static_cast<std::size_t>(c) * d + j] = static_cast<float>(v(static_cast<Eigen::Index>(j)));
    }
    dir.vector.assign(dir.components.begin(), dir.components.begin() + static_cast<std::ptrdiff_t>(d));
    mark_if_degenerate(dir);
    return dir;
}

std::vector<float> apply_pca(std::span<const float> h, const SteeringDirection& direction,
                             float alpha, std::atomic<std::size_t>* skip_counter) {
    const auto d = h.size();
    const auto k = static_cast<std::size_t>(direction.component_rows);
    if (direction.components.size() != k * d)
        throw DataError("apply_pca: component matrix shape mismatch");

    // proj = U h, u = U^T proj
    std::vector<double> proj(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const float* row = direction.components.data() + c * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(row[j]) * h[j];
        proj[c] = acc;
    }
    std::vector<double> u(d, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const float* row = direction.components.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) u[j] += proj[c] * row[j];
    }
    double norm_sq = 0.0;
    for (double x : u) norm_sq += x * x;
    const double norm = std::sqrt(norm_sq);

    std::vector<float> out(h.begin(), h.end());
    if (norm < 1e-8) {
        if (skip_counter) skip_counter->fetch_add(1);
        return out;
    }
    const double inv = 1.0 / norm;
    for (std::size_t j = 0; j < d; ++j) out[j] += alpha * static_cast<float>(u[j] * inv);
    return out;
}

SteeringDirection lda_direction(const ActivationBatch& target_batch,
                                const std::vector<ActivationBatch>& other_batches,
                                std::uint64_t seed) {
    const auto d = static_cast<std::size_t>(target_batch.dim);
    if (target_batch.n_rows() < 2) throw DataError("lda_direction: need >= 2 target rows");
    std::size_t total_other = 0;
    for (const auto& b : other_batches) {
        if (static_cast<std::size_t>(b.dim) != d) throw DataError("lda_direction: dim mismatch");
        total_other += b.n_rows();
    }
    if (total_other < 2) throw DataError("lda_direction: need >= 2 negative rows");

    const std::size_t per_class = std::min(target_batch.n_rows(), total_other);
    auto other_rows = balanced_negative_rows(other_batches, per_class, seed);

    std::vector<std::size_t> tgt_order(target_batch.n_rows());
    std::iota(tgt_order.begin(), tgt_order.end(), 0);
    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ 0x1dau));
    std::shuffle(tgt_order.begin(), tgt_order.end(), rng);

    Eigen::MatrixXd Xt(per_class, d), Xo(other_rows.size(), d);
    for (std::size_t i = 0; i < per_class; ++i) {
        const auto r = target_batch.row(tgt_order[i]);
        for (std::size_t j = 0; j < d; ++j) Xt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    for (std::size_t i = 0; i < other_rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) Xo(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = other_rows[i][j];

    const Eigen::RowVectorXd mu_t = Xt.colwise().mean();
    const Eigen::RowVectorXd mu_o = Xo.colwise().mean();
    Eigen::MatrixXd Ct = Xt.rowwise() - mu_t;
    Eigen::MatrixXd Co = Xo.rowwise() - mu_o;
    const double denom = std::max<double>(1.0, static_cast<double>(Xt.rows() + Xo.rows() - 2));
    Eigen::MatrixXd sigma = (Ct.transpose() * Ct + Co.transpose() * Co) / denom;

    const double lambda = 1e-4 * sigma.trace() / static_cast<double>(d);
    SteeringDirection dir;
    dir.method = VectorMethod::lda;
    dir.layer = target_batch.layer;
    dir.target = target_batch.language;
    dir.vector.assign(d, 0.0f);

    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        // constant data: within-class covariance identically zero
        dir.degenerate = true;
        return dir;
    }
    sigma.diagonal().array() += lambda;

    const Eigen::VectorXd mdiff = (mu_t - mu_o).transpose();
    Eigen::LDLT<Eigen::MatrixXd> solver(sigma);
    if (solver.info() != Eigen::Success) {
        dir.degenerate = true;
        return dir;
    }
    const Eigen::VectorXd v = solver.solve(mdiff);
    for (std::size_t j = 0; j < d; ++j) dir.vector[j] = static_cast<float>(v(static_cast<Eigen::Index>(j)));
    mark_if_degenerate(dir);
    // Projected Mahalanobis separation below 1 means the class means sit within
    // one pooled standard deviation of each other.
    const double sep_sq = mdiff.dot(v);
    dir.low_confidence = !(sep_sq > 1.0);
    return dir;
}

std::map<LanguageId, NeuronSet> lape_select(const std::map<LanguageId, LanguageStats>& stats,
                                            double top_fraction, double entropy_quantile) {
    if (stats.size() < 2) throw ConfigError("lape_select: need stats for >= 2 languages");
    if (!(top_fraction > 0.0) || top_fraction > 0.05)
        throw ConfigError("lape_select: top_fraction must be in (0, 0.05]");
    if (!(entropy_quantile > 0.0) || entropy_quantile > 1.0)
        throw ConfigError("lape_select: entropy_quantile must be in (0, 1]");

    std::vector<const LanguageStats*> langs;
    std::vector<LanguageId> lang_ids;
    for (const auto& [id, st] : stats) {
        if (!st.has_neuron_stats())
            throw CapabilityError("lape_select needs mlp_activation statistics for language " + id +
                                  " (neuron-level steering requires the mlp_activation site)");
        langs.push_back(&st);
        lang_ids.push_back(id);
    }
    const int L = langs[0]->n_layers;
    const int m = langs[0]->mlp_dim;
    for (const auto* st : langs)
        if (st->n_layers != L || st->mlp_dim != m)
            throw DataError("lape_select: stats shapes differ across languages");

    struct Alive {
        int layer, index;
        double entropy;
        int argmax_lang;
        double prob_mass;  // probability for the assigned language
    };
    std::vector<Alive> alive;
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < m; ++i) {
            double sum = 0.0;
            double best = -1.0;
            int best_lang = 0;
            for (std::size_t g = 0; g < langs.size(); ++g) {
                const double p = langs[g]->neuron_prob[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
                sum += p;
                if (p > best) {
                    best = p;
                    best_lang = static_cast<int>(g);
                }
            }
            if (sum <= 0.0) continue;  // dead neuron
            double H = 0.0;
            for (std::size_t g = 0; g < langs.size(); ++g) {
                const double q = langs[g]->neuron_prob[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] / sum;
                if (q > 0.0) H -= q * std::log(q);
            }
            alive.push_back({l, i, H, best_lang, best});
        }
    }
    if (alive.empty()) throw DataError("lape_select: every neuron is dead");

    std::vector<double> entropies;
    entropies.reserve(alive.size());
    for (const auto& a : alive) entropies.push_back(a.entropy);
    std::sort(entropies.begin(), entropies.end());
    const auto qidx = static_cast<std::size_t>(entropy_quantile * static_cast<double>(entropies.size() - 1));
    const double threshold = entropies[qidx];

    // language -> layer -> kept candidates
    const auto budget = std::max<std::size_t>(1, static_cast<std::size_t>(top_fraction * m));
    std::map<LanguageId, NeuronSet> out;
    for (const auto& id : lang_ids) out[id].target = id;

    std::vector<std::vector<std::vector<Alive>>> per_lang_layer(
        langs.size(), std::vector<std::vector<Alive>>(static_cast<std::size_t>(L)));
    for (const auto& a : alive) {
        if (a.entropy <= threshold)
            per_lang_layer[static_cast<std::size_t>(a.argmax_lang)][static_cast<std::size_t>(a.layer)].push_back(a);
    }
    for (std::size_t g = 0; g < langs.size(); ++g) {
        auto& set = out[lang_ids[g]];
        for (int l = 0; l < L; ++l) {
            auto& cands = per_lang_layer[g][static_cast<std::size_t>(l)];
            std::sort(cands.begin(), cands.end(), [](const Alive& a, const Alive& b) {
                if (a.prob_mass != b.prob_mass) return a.prob_mass > b.prob_mass;
                return a.index < b.index;
            });
            if (cands.size() > budget) cands.resize(budget);
            for (const auto& c : cands) {
                NeuronEntry e;
                e.layer = c.layer;
                e.index = c.index;
                e.target_mean =
                    langs[g]->neuron_mean[static_cast<std::size_t>(c.layer)][static_cast<std::size_t>(c.index)];
                set.entries.push_back(e);
            }
        }
    }
    for (auto& [id, set] : out) {
        for (const auto& [other_id, other_set] : out) {
            if (other_id == id) continue;
            for (const auto& e : other_set.entries) set.other_entries.push_back({e.layer, e.index});
        }
        std::sort(set.other_entries.begin(), set.other_entries.end(), [](const NeuronRef& a, const NeuronRef& b) {
            return std::tie(a.layer, a.index) < std::tie(b.layer, b.index);
        });
    }
    return out;
}

std::vector<float> lape_intervene(std::span<const float> h, const NeuronSet& set, int layer,
                                  float alpha, LapeMode mode, bool deactivate_others) {
    std::vector<float> out(h.begin(), h.end());
    for (const auto& e : set.entries) {
        if (e.layer != layer) continue;
        if (e.index < 0 || static_cast<std::size_t>(e.index) >= out.size())
            throw DataError("lape_intervene: neuron index " + std::to_string(e.index) + " out of range");
        const auto i = static_cast<std::size_t>(e.index);
        out[i] = mode == LapeMode::additive ? alpha * e.target_mean + out[i] : alpha * e.target_mean;
    }
    if (deactivate_others) {
        for (const auto& r : set.other_entries) {
            if (r.layer != layer) continue;
            if (r.index < 0 || static_cast<std::size_t>(r.index) >= out.size())
                throw DataError("lape_intervene: neuron index " + std::to_string(r.index) + " out of range");
            out[static_cast<std::size_t>(r.index)] = 0.0f;
        }
    }
    return out;
}

const InstructionTable& default_instruction_table() {
    static const InstructionTable table = [] {
        InstructionTable t;
        t.display_name = {{"en", "English"}, {"de", "German"},   {"fr", "French"},
                          {"es", "Spanish"}, {"it", "Italian"},  {"pt", "Portuguese"},
                          {"nl", "Dutch"},   {"ru", "Russian"},  {"pl", "Polish"},
                          {"sv", "Swedish"}, {"da", "Danish"},   {"no", "Norwegian"},
                          {"cs", "Czech"},   {"uk", "Ukrainian"}, {"ro", "Romanian"},
                          {"tr", "Turkish"}, {"el", "Greek"},    {"ar", "Arabic"},
                          {"hi", "Hindi"},   {"ja", "Japanese"}, {"ko", "Korean"},
                          {"zh", "Chinese"}, {"vi", "Vietnamese"}, {"th", "Thai"},
                          {"id", "Indonesian"}, {"fa", "Persian"}, {"sw", "Swahili"},
                          {"kk", "Kazakh"},  {"ka", "Georgian"}, {"sk", "Slovak"},
                          {"mt", "Maltese"}, {"bo", "Tibetan"}};
        t.target_instruction = {{"en", "Respond in English."},
                                {"de", "Antworte auf Deutsch."},
                                {"fr", "Réponds en français."},
                                {"es", "Responde en español."},
                                {"it", "Rispondi in italiano."},
                                {"pt", "Responda em português."},
                                {"nl", "Antwoord in het Nederlands."},
                                {"ru", "Отвечай по-русски."},
                                {"pl", "Odpowiedz po polsku."}};
        return t;
    }();
    return table;
}

std::string prompt_baseline(const std::string& question, const LanguageId& target,
                            PromptVariant variant, const InstructionTable& templates) {
    if (variant == PromptVariant::english_instruction) {
        auto it = templates.display_name.find(target);
        if (it == templates.display_name.end())
            throw DataError("no English-instruction template for language " + target);
        return question + "\nRespond in " + it->second + ".";
    }
    auto it = templates.target_instruction.find(target);
    if (it == templates.target_instruction.end())
        throw DataError("no target-language instruction template for language " + target);
    return question + "\n" + it->second;
}

Intervention make_additive_intervention(std::shared_ptr<const SteeringDirection> direction,
                                        float alpha) {
    if (!direction) throw ConfigError("null direction");
    if (direction->degenerate) throw DataError("cannot apply a degenerate steering direction");
    Intervention iv;
    iv.point = {direction->layer, HookSite::residual_post};
    iv.fn = [direction, alpha](HookPoint, std::span<float> row) {
        const auto out = apply_additive({row.data(), row.size()}, *direction, alpha);
        std::copy(out.begin(), out.end(), row.begin());
    };
    return iv;
}

Intervention make_pca_intervention(std::shared_ptr<const SteeringDirection> direction, float alpha,
                                   std::shared_ptr<std::atomic<std::size_t>> skip_counter) {
    if (!direction) throw ConfigError("null direction");
    Intervention iv;
    iv.point = {direction->layer, HookSite::residual_post};
    iv.fn = [direction, alpha, skip_counter](HookPoint, std::span<float> row) {
        const auto out = apply_pca({row.data(), row.size()}, *direction, alpha, skip_counter.get());
        std::copy(out.begin(), out.end(), row.begin());
    };
    return iv;
}

std::vector<Intervention> make_lape_interventions(std::shared_ptr<const NeuronSet> set, float alpha,
                                                  LapeMode mode, bool deactivate_others,
                                                  int n_layers) {
    if (!set) throw ConfigError("null neuron set");
    std::set<int> layers;
    for (const auto& e : set->entries) layers.insert(e.layer);
    if (deactivate_others)
        for (const auto& r : set->other_entries) layers.insert(r.layer);
    std::vector<Intervention> out;
    for (int l : layers) {
        if (l < 0 || l >= n_layers) throw ConfigError("neuron set layer out of model bounds");
        Intervention iv;
        iv.point = {l, HookSite::mlp_activation};
        iv.fn = [set, alpha, mode, deactivate_others, l](HookPoint, std::span<float> row) {
            const auto edited = lape_intervene({row.data(), row.size()}, *set, l, alpha, mode,
                                               deactivate_others);
            std::copy(edited.begin(), edited.end(), row.begin());
        };
        out.push_back(std::move(iv));
    }
    return out;
}

// --- vector store -----------------------------------------------------------------

namespace {

std::string direction_stem(int layer, const LanguageId& target,
                           const std::optional<LanguageId>& source) {
    return target + "__" + (source ? *source : std::string("any")) + "__L" + std::to_string(layer);
}

}  // namespace

void save_direction(const std::filesystem::path& root, const std::string& model_id,
                    const SteeringDirection& direction, const std::string& created_from) {
    const auto dir = root / method_name(direction.method);
    std::filesystem::create_directories(dir);
    const auto stem = direction_stem(direction.layer, direction.target, direction.source);

    nlohmann::json man;
    man["method"] = method_name(direction.method);
    man["model_id"] = model_id;
    man["layer"] = direction.layer;
    man["target"] = direction.target;
    if (direction.source) man["source"] = *direction.source;
    man["dim"] = direction.vector.size();
    man["norm"] = direction.norm();
    man["degenerate"] = direction.degenerate;
    man["low_confidence"] = direction.low_confidence;
    man["component_rows"] = direction.component_rows;
    man["created_from"] = created_from;
    atomic_write_text(dir / (stem + ".json"), man.dump(2) + "\n");
    write_f32(dir / (stem + ".f32"), direction.vector);
    if (direction.component_rows > 0) write_f32(dir / (stem + ".components.f32"), direction.components);
}

bool direction_exists(const std::filesystem::path& root, const std::string& model_id,
                      VectorMethod method, int layer, const LanguageId& target,
                      const std::optional<LanguageId>& source) {
    (void)model_id;
    const auto stem = direction_stem(layer, target, source);
    return std::filesystem::exists(root / method_name(method) / (stem + ".json"));
}

SteeringDirection load_direction(const std::filesystem::path& root, const std::string& model_id,
                                 VectorMethod method, int layer, const LanguageId& target,
                                 const std::optional<LanguageId>& source) {
    const auto dir = root / method_name(method);
    const auto stem = direction_stem(layer, target, source);
    const auto man_path = dir / (stem + ".json");
    if (!std::filesystem::exists(man_path))
        throw MissingArtifactError("no stored direction " + man_path.string() +
                                   "; run `steerbench vectors` first");
    const auto man = nlohmann::json::parse(read_text(man_path));
    if (man.contains("model_id") && man["model_id"].get<std::string>() != model_id)
        throw DataError("stored direction " + stem + " belongs to model " +
                        man["model_id"].get<std::string>() + ", not " + model_id);

    SteeringDirection out;
    out.method = method;
    out.layer = layer;
    out.target = target;
    out.source = source;
    out.vector = read_f32(dir / (stem + ".f32"));
    out.degenerate = man.value("degenerate", false);
    out.low_confidence = man.value("low_confidence", false);
    out.component_rows = man.value("component_rows", 0);
    if (out.component_rows > 0) out.components = read_f32(dir / (stem + ".components.f32"));
    return out;
}

void save_neuron_sets(const std::filesystem::path& root, const std::string& model_id,
                      const std::map<LanguageId, NeuronSet>& sets) {
    const auto dir = root / "lape";
    std::filesystem::create_directories(dir);
    for (const auto& [lang, set] : sets) {
        nlohmann::json j;
        j["model_id"] = model_id;
        j["target"] = lang;
        auto& entries = j["entries"] = nlohmann::json::array();
        for (const auto& e : set.entries)
            entries.push_back({{"layer", e.layer}, {"index", e.index}, {"target_mean", e.target_mean}});
        auto& others = j["other_entries"] = nlohmann::json::array();
        for (const auto& r : set.other_entries) others.push_back({{"layer", r.layer}, {"index", r.index}});
        atomic_write_text(dir / (lang + ".json"), j.dump(2) + "\n");
    }
}

std::map<LanguageId, NeuronSet> load_neuron_sets(const std::filesystem::path& root,
                                                 const std::string& model_id) {
    const auto dir = root / "lape";
    if (!std::filesystem::exists(dir))
        throw MissingArtifactError("no neuron sets under " + dir.string() +
                                   "; run `steerbench vectors` first");
    std::map<LanguageId, NeuronSet> out;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        const auto j = nlohmann::json::parse(read_text(p));
        if (j.value("model_id", model_id) != model_id) continue;
        NeuronSet set;
        set.target = j.at("target").get<std::string>();
        for (const auto& e : j.at("entries"))
            set.entries.push_back({e.at("layer").get<int>(), e.at("index").get<int>(),
                                   e.at("target_mean").get<float>()});
        for (const auto& r : j.at("other_entries"))
            set.other_entries.push_back({r.at("layer").get<int>(), r.at("index").get<int>()});
        out[set.target] = std::move(set);
    }
    if (out.empty()) throw MissingArtifactError("no neuron sets for model " + model_id);
    return out;
}

}  // namespace steerbench
