#include "steerbench/analysiskit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace steerbench {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void SimilarityMatrix::validate() const {
    const std::size_t n = labels.size();
    if (values.size() != n * n) throw DataError("similarity matrix: shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double a = at(i, j);
            const double b = at(j, i);
            if (std::isnan(a) != std::isnan(b) || (!std::isnan(a) && std::fabs(a - b) > 1e-6))
                throw DataError("similarity matrix is not symmetric");
        }
        const double d = at(i, i);
        if (!std::isnan(d) && std::fabs(d - 1.0) > 1e-6)
            throw DataError("similarity matrix diagonal is not 1");
    }
}

SimilarityMatrix cosine_matrix(const std::map<LanguageId, std::vector<float>>& vectors) {
    if (vectors.size() < 2) throw ConfigError("cosine_matrix: need at least 2 vectors");
    SimilarityMatrix m;
    std::vector<const std::vector<float>*> vecs;
    for (const auto& [id, v] : vectors) {
        m.labels.push_back(id);
        vecs.push_back(&v);
    }
    const std::size_t dim = vecs[0]->size();
    std::vector<double> norms(vecs.size());
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        if (vecs[i]->size() != dim) throw DataError("cosine_matrix: vectors have mixed dims");
        double s = 0.0;
        for (float x : *vecs[i]) s += static_cast<double>(x) * x;
        norms[i] = std::sqrt(s);
    }
    const std::size_t n = vecs.size();
    m.values.assign(n * n, kNaN);
    for (std::size_t i = 0; i < n; ++i) {
        if (norms[i] <= 0.0) continue;  // degenerate row stays NaN
        for (std::size_t j = 0; j < n; ++j) {
            if (norms[j] <= 0.0) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k)
                dot += static_cast<double>((*vecs[i])[k]) * (*vecs[j])[k];
            m.values[i * n + j] = dot / (norms[i] * norms[j]);
        }
        m.values[i * n + i] = 1.0;
    }
    m.layer_scope = "single layer";
    return m;
}

SimilarityMatrix average_matrices(const std::vector<SimilarityMatrix>& matrices) {
    if (matrices.empty()) throw ConfigError("average_matrices: nothing to average");
    SimilarityMatrix out = matrices[0];
    for (std::size_t k = 1; k < matrices.size(); ++k) {
        if (matrices[k].labels != out.labels)
            throw DataError("average_matrices: label sets differ");
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += matrices[k].values[i];
    }
    const double inv = 1.0 / static_cast<double>(matrices.size());
    for (auto& v : out.values) v *= inv;
    out.layer_scope = "averaged over all layers";
    return out;
}

NeuronDistribution neuron_layer_distribution(const std::map<LanguageId, NeuronSet>& sets,
                                             int n_layers) {
    NeuronDistribution out;
    out.pooled.name = "pooled";
    out.pooled.values.assign(static_cast<std::size_t>(n_layers), 0.0);
    for (const auto& [lang, set] : sets) {
        LayerProfile p;
        p.name = lang;
        p.values.assign(static_cast<std::size_t>(n_layers), 0.0);
        for (const auto& e : set.entries) {
            if (e.layer < 0 || e.layer >= n_layers)
                throw DataError("neuron set layer out of range for distribution");
            p.values[static_cast<std::size_t>(e.layer)] += 1.0;
            out.pooled.values[static_cast<std::size_t>(e.layer)] += 1.0;
        }
        out.per_language.emplace(lang, std::move(p));
    }
    return out;
}

ProbeCurve probe_layer_curve(const std::vector<std::vector<ActivationBatch>>& per_layer_batches,
                             const ProbeConfig& config) {
    ProbeCurve curve;
    curve.accuracy.name = "probe_accuracy";
    curve.loss.name = "probe_loss";
    for (std::size_t l = 0; l < per_layer_batches.size(); ++l) {
        const auto& batches = per_layer_batches[l];
        if (batches.size() < 2)
            throw ConfigError("probe_layer_curve: need >= 2 language batches per layer");
        double acc = 0.0, loss = 0.0;
        for (std::size_t t = 0; t < batches.size(); ++t) {
            std::vector<ActivationBatch> negatives;
            for (std::size_t o = 0; o < batches.size(); ++o)
                if (o != t) negatives.push_back(batches[o]);
            ProbeReport report;
            ProbeConfig cfg = config;
            cfg.seed = config.seed + 31 * l + t;
            train_probe(batches[t], negatives, cfg, &report);
            acc += report.heldout_accuracy;
            loss += report.final_loss;
        }
        curve.accuracy.values.push_back(acc / static_cast<double>(batches.size()));
        curve.loss.values.push_back(loss / static_cast<double>(batches.size()));
    }
    return curve;
}

double fisher_ratio(const ActivationBatch& target_batch, const ActivationBatch& other_batch,
                    std::span<const float> v, bool* degenerate) {
    double vnorm = 0.0;
    for (float x : v) vnorm += static_cast<double>(x) * x;
    if (!(vnorm > 0.0)) throw DataError("fisher_ratio: zero projection direction");
    if (target_batch.dim != static_cast<int>(v.size()) || other_batch.dim != static_cast<int>(v.size()))
        throw DataError("fisher_ratio: dimension mismatch");

    auto project = [&v](const ActivationBatch& b) {
        std::vector<double> out(b.n_rows());
        for (std::size_t i = 0; i < b.n_rows(); ++i) {
            const auto row = b.row(i);
            double acc = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) acc += static_cast<double>(row[k]) * v[k];
            out[i] = acc;
        }
        return out;
    };
    auto moments = [](const std::vector<double>& xs) {
        double mu = 0.0;
        for (double x : xs) mu += x;
        mu /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mu) * (x - mu);
        var /= static_cast<double>(xs.size());
        return std::pair<double, double>(mu, var);
    };
    if (target_batch.n_rows() == 0 || other_batch.n_rows() == 0)
        throw DataError("fisher_ratio: empty batch");
    const auto [mu1, var1] = moments(project(target_batch));
    const auto [mu2, var2] = moments(project(other_batch));
    const double denom = var1 + var2;
    if (degenerate) *degenerate = false;
    if (denom <= 0.0) {
        if (degenerate) *degenerate = true;
        if (mu1 == mu2) return 0.0;
        return std::numeric_limits<double>::infinity();
    }
    return (mu1 - mu2) * (mu1 - mu2) / denom;
}

FamilyClusteringReport family_clustering(const SimilarityMatrix& matrix,
                                         const std::map<LanguageId, std::string>& family_map) {
    FamilyClusteringReport rep;
    double within = 0.0, cross = 0.0;
    const std::size_t n = matrix.labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto fi = family_map.find(matrix.labels[i]);
        if (fi == family_map.end()) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            auto fj = family_map.find(matrix.labels[j]);
            if (fj == family_map.end()) continue;
            const double v = matrix.at(i, j);
            if (std::isnan(v)) continue;
            if (fi->second == fj->second) {
                within += v;
                ++rep.within_pairs;
            } else {
                cross += v;
                ++rep.cross_pairs;
            }
        }
    }
    rep.within_mean = rep.within_pairs ? within / static_cast<double>(rep.within_pairs) : kNaN;
    rep.cross_mean = rep.cross_pairs ? cross / static_cast<double>(rep.cross_pairs) : kNaN;
    return rep;
}

void write_matrix_csv(const std::filesystem::path& path, const SimilarityMatrix& m) {
    std::ostringstream out;
    out << "language";
    for (const auto& l : m.labels) out << ',' << l;
    out << '\n';
    const std::size_t n = m.labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        out << m.labels[i];
        for (std::size_t j = 0; j < n; ++j) {
            out << ',';
            if (!std::isnan(m.at(i, j))) out << format_fixed(m.at(i, j));
        }
        out << '\n';
    }
    atomic_write_text(path, out.str());
}

void write_profiles_csv(const std::filesystem::path& path,
                        const std::vector<LayerProfile>& profiles) {
    std::ostringstream out;
    out << "layer";
    for (const auto& p : profiles) out << ',' << p.name;
    out << '\n';
    std::size_t n_layers = 0;
    for (const auto& p : profiles) n_layers = std::max(n_layers, p.values.size());
    for (std::size_t l = 0; l < n_layers; ++l) {
        out << l;
        for (const auto& p : profiles) {
            out << ',';
            if (l < p.values.size()) out << format_fixed(p.values[l]);
        }
        out << '\n';
    }
    atomic_write_text(path, out.str());
}

void write_profiles_json(const std::filesystem::path& path,
                         const std::vector<LayerProfile>& profiles) {
    nlohmann::json j;
    for (const auto& p : profiles) j[p.name] = p.values;
    atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace steerbench
