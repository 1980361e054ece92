#include "steerbench/saecore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace steerbench {

void SAEParams::validate() const {
    if (latent_dim < input_dim) throw ConfigError("sae: latent_dim must be >= input_dim");
    if (w_enc.size() != static_cast<std::size_t>(latent_dim) * input_dim ||
        w_dec.size() != static_cast<std::size_t>(input_dim) * latent_dim ||
        b_enc.size() != static_cast<std::size_t>(latent_dim) ||
        b_dec.size() != static_cast<std::size_t>(input_dim) ||
        theta.size() != static_cast<std::size_t>(latent_dim))
        throw DataError("sae: parameter array sizes inconsistent with dims");
    for (float t : theta)
        if (!(t >= 0.0f)) throw DataError("sae: thresholds must be >= 0");
    auto finite = [](const std::vector<float>& v) {
        return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
    };
    if (!finite(w_enc) || !finite(w_dec) || !finite(b_enc) || !finite(b_dec))
        throw DataError("sae: non-finite weights");
}

std::vector<float> jumprelu(std::span<const float> z, std::span<const float> theta) {
    if (z.size() != theta.size()) throw DataError("jumprelu: shape mismatch");
    std::vector<float> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > theta[i] ? z[i] : 0.0f;
    return out;
}

std::vector<float> sae_encode(const SAEParams& params, std::span<const float> h, float* sparsity) {
    if (h.size() != static_cast<std::size_t>(params.input_dim))
        throw DataError("sae_encode: input dim mismatch");
    const auto d = static_cast<std::size_t>(params.input_dim);
    const auto ds = static_cast<std::size_t>(params.latent_dim);
    std::vector<float> z(ds);
    for (std::size_t j = 0; j < ds; ++j) {
        const float* w = params.w_enc.data() + j * d;
        double acc = params.b_enc[j];
        for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(w[i]) * h[i];
        z[j] = static_cast<float>(acc);
    }
    auto f = jumprelu(z, params.theta);
    if (sparsity) {
        std::size_t zeros = 0;
        for (float v : f)
            if (v == 0.0f) ++zeros;
        *sparsity = static_cast<float>(zeros) / static_cast<float>(ds);
    }
    return f;
}

std::vector<float> sae_decode(const SAEParams& params, std::span<const float> f) {
    if (f.size() != static_cast<std::size_t>(params.latent_dim))
        throw DataError("sae_decode: latent dim mismatch");
    const auto d = static_cast<std::size_t>(params.input_dim);
    const auto ds = static_cast<std::size_t>(params.latent_dim);
    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        const float* w = params.w_dec.data() + i * ds;
        double acc = params.b_dec[i];
        for (std::size_t j = 0; j < ds; ++j) {
            if (f[j] == 0.0f) continue;
            acc += static_cast<double>(w[j]) * f[j];
        }
        out[i] = static_cast<float>(acc);
    }
    return out;
}

SteeringDirection sae_diffmean_direction(std::span<const float> mean_f_target,
                                         std::span<const float> mean_f_source, int layer,
                                         const LanguageId& target, const LanguageId& source) {
    if (mean_f_target.size() != mean_f_source.size())
        throw DataError("sae_diffmean_direction: latent dims differ");
    SteeringDirection dir;
    dir.method = VectorMethod::sae_diffmean;
    dir.layer = layer;
    dir.target = target;
    dir.source = source;
    dir.vector.resize(mean_f_target.size());
    for (std::size_t i = 0; i < dir.vector.size(); ++i)
        dir.vector[i] = mean_f_target[i] - mean_f_source[i];
    double n = dir.norm();
    dir.degenerate = !(n > 1e-12) || !std::isfinite(n);
    return dir;
}

std::vector<float> sae_intervene(const SAEParams& params, std::span<const float> h,
                                 std::span<const float> delta, float alpha) {
    if (delta.size() != static_cast<std::size_t>(params.latent_dim))
        throw DataError("sae_intervene: delta dim mismatch");
    double norm_sq = 0.0;
    for (float v : delta) norm_sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 1e-12)) throw DataError("sae_intervene: degenerate latent direction");

    auto f = sae_encode(params, h);
    const auto recon = sae_decode(params, f);
    // epsilon keeps everything the autoencoder fails to reconstruct
    std::vector<float> eps(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) eps[i] = h[i] - recon[i];

    const double inv = 1.0 / norm;
    for (std::size_t j = 0; j < f.size(); ++j)
        f[j] += alpha * static_cast<float>(delta[j] * inv);
    auto out = sae_decode(params, f);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps[i];
    return out;
}

Intervention make_sae_intervention(std::shared_ptr<const SAEParams> params,
                                   std::shared_ptr<const SteeringDirection> direction,
                                   float alpha) {
    if (!params || !direction) throw ConfigError("null sae intervention inputs");
    if (direction->degenerate) throw DataError("cannot apply a degenerate steering direction");
    Intervention iv;
    iv.point = {params->layer, HookSite::residual_post};
    iv.fn = [params, direction, alpha](HookPoint, std::span<float> row) {
        const auto out = sae_intervene(*params, {row.data(), row.size()}, direction->vector, alpha);
        std::copy(out.begin(), out.end(), row.begin());
    };
    return iv;
}

namespace {

SAEParams identity_init(int layer, int input_dim, int latent_dim, std::uint64_t seed) {
    SAEParams p;
    p.layer = layer;
    p.input_dim = input_dim;
    p.latent_dim = latent_dim;
    p.seed = seed;
    p.w_enc.assign(static_cast<std::size_t>(latent_dim) * input_dim, 0.0f);
    p.b_enc.assign(static_cast<std::size_t>(latent_dim), 0.0f);
    p.w_dec.assign(static_cast<std::size_t>(input_dim) * latent_dim, 0.0f);
    p.b_dec.assign(static_cast<std::size_t>(input_dim), 0.0f);
    p.theta.assign(static_cast<std::size_t>(latent_dim), 0.0f);
    for (int i = 0; i < input_dim; ++i) {
        p.w_enc[static_cast<std::size_t>(i) * input_dim + static_cast<std::size_t>(i)] = 1.0f;
        p.w_dec[static_cast<std::size_t>(i) * latent_dim + static_cast<std::size_t>(i)] = 1.0f;
    }
    p.untrained = true;
    return p;
}

}  // namespace

SAEParams train_sae(const std::vector<ActivationBatch>& batches, const SaeTrainConfig& config,
                    SaeTrainReport* report) {
    if (batches.empty()) throw DataError("train_sae: no activation batches");
    const int d = batches[0].dim;
    const int layer = batches[0].layer;
    for (const auto& b : batches)
        if (b.dim != d || b.site != HookSite::residual_post)
            throw DataError("train_sae: batches must all be residual rows of one layer");
    const int ds = config.latent_dim > 0 ? config.latent_dim : 4 * d;
    if (ds < d) throw ConfigError("train_sae: latent_dim must be >= input_dim");

    std::vector<const float*> rows;
    for (const auto& b : batches)
        for (std::size_t r = 0; r < b.n_rows(); ++r) rows.push_back(b.row(r).data());
    if (rows.size() < 10 * static_cast<std::size_t>(ds))
        throw DataError("train_sae: need at least 10 * latent_dim pooled samples, have " +
                        std::to_string(rows.size()));

    // data mean and variance for the report baseline
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (const float* r : rows)
        for (int i = 0; i < d; ++i) mean[static_cast<std::size_t>(i)] += r[i];
    for (auto& v : mean) v /= static_cast<double>(rows.size());
    double baseline = 0.0;
    for (const float* r : rows)
        for (int i = 0; i < d; ++i) {
            const double c = r[i] - mean[static_cast<std::size_t>(i)];
            baseline += c * c;
        }
    baseline /= static_cast<double>(rows.size()) * d;

    SAEParams p;
    SaeTrainReport rep;
    rep.baseline_mse = static_cast<float>(baseline);

    if (config.epochs == 0) {
        p = identity_init(layer, d, ds, config.seed);
        rep.untrained = true;
    } else {
        p.layer = layer;
        p.input_dim = d;
        p.latent_dim = ds;
        p.seed = config.seed;
        p.untrained = false;
        std::mt19937 rng(static_cast<std::uint32_t>(config.seed ^ 0x5ae5aeu));
        std::normal_distribution<float> dist(0.0f, 1.0f / std::sqrt(static_cast<float>(d)));
        p.w_enc.resize(static_cast<std::size_t>(ds) * d);
        for (auto& w : p.w_enc) w = dist(rng);
        // decoder starts as the encoder transpose
        p.w_dec.assign(static_cast<std::size_t>(d) * ds, 0.0f);
        for (int j = 0; j < ds; ++j)
            for (int i = 0; i < d; ++i)
                p.w_dec[static_cast<std::size_t>(i) * ds + static_cast<std::size_t>(j)] =
                    p.w_enc[static_cast<std::size_t>(j) * d + static_cast<std::size_t>(i)];
        p.b_enc.assign(static_cast<std::size_t>(ds), 0.0f);
        p.b_dec.assign(static_cast<std::size_t>(d), 0.0f);
        p.theta.assign(static_cast<std::size_t>(ds), 1e-3f);

        const std::size_t n_params = p.w_enc.size() + p.b_enc.size() + p.w_dec.size() +
                                     p.b_dec.size() + p.theta.size();
        std::vector<float> adam_m(n_params, 0.0f), adam_v(n_params, 0.0f);
        std::vector<float> grads(n_params, 0.0f);
        // grad arena order: w_enc, b_enc, w_dec, b_dec, theta
        const std::size_t o_wenc = 0;
        const std::size_t o_benc = o_wenc + p.w_enc.size();
        const std::size_t o_wdec = o_benc + p.b_enc.size();
        const std::size_t o_bdec = o_wdec + p.w_dec.size();
        const std::size_t o_theta = o_bdec + p.b_dec.size();

        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        const float beta1 = 0.9f, beta2 = 0.999f, eps_adam = 1e-8f;
        int step = 0;
        const float bw = config.threshold_bandwidth;
        std::vector<float> z(static_cast<std::size_t>(ds)), f(static_cast<std::size_t>(ds));
        std::vector<float> xhat(static_cast<std::size_t>(d)), dxhat(static_cast<std::size_t>(d));
        std::vector<float> df(static_cast<std::size_t>(ds)), dz(static_cast<std::size_t>(ds));

        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
                std::fill(grads.begin(), grads.end(), 0.0f);
                double batch_loss = 0.0;
                for (std::size_t s = start; s < end; ++s) {
                    const float* x = rows[order[s]];
                    for (int j = 0; j < ds; ++j) {
                        const float* w = p.w_enc.data() + static_cast<std::size_t>(j) * d;
                        double acc = p.b_enc[static_cast<std::size_t>(j)];
                        for (int i = 0; i < d; ++i) acc += static_cast<double>(w[i]) * x[i];
                        z[static_cast<std::size_t>(j)] = static_cast<float>(acc);
                        f[static_cast<std::size_t>(j)] =
                            z[static_cast<std::size_t>(j)] > p.theta[static_cast<std::size_t>(j)]
                                ? z[static_cast<std::size_t>(j)]
                                : 0.0f;
                    }
                    for (int i = 0; i < d; ++i) {
                        const float* w = p.w_dec.data() + static_cast<std::size_t>(i) * ds;
                        double acc = p.b_dec[static_cast<std::size_t>(i)];
                        for (int j = 0; j < ds; ++j)
                            if (f[static_cast<std::size_t>(j)] != 0.0f)
                                acc += static_cast<double>(w[j]) * f[static_cast<std::size_t>(j)];
                        xhat[static_cast<std::size_t>(i)] = static_cast<float>(acc);
                    }
                    const float inv_d = 1.0f / static_cast<float>(d);
                    for (int i = 0; i < d; ++i) {
                        const float diff = xhat[static_cast<std::size_t>(i)] - x[i];
                        batch_loss += static_cast<double>(diff) * diff * inv_d;
                        dxhat[static_cast<std::size_t>(i)] = 2.0f * diff * inv_d;
                        grads[o_bdec + static_cast<std::size_t>(i)] += dxhat[static_cast<std::size_t>(i)];
                    }
                    std::fill(df.begin(), df.end(), 0.0f);
                    for (int i = 0; i < d; ++i) {
                        const float g = dxhat[static_cast<std::size_t>(i)];
                        if (g == 0.0f) continue;
                        const float* w = p.w_dec.data() + static_cast<std::size_t>(i) * ds;
                        float* gw = grads.data() + o_wdec + static_cast<std::size_t>(i) * ds;
                        for (int j = 0; j < ds; ++j) {
                            df[static_cast<std::size_t>(j)] += w[j] * g;
                            if (f[static_cast<std::size_t>(j)] != 0.0f)
                                gw[j] += g * f[static_cast<std::size_t>(j)];
                        }
                    }
                    const float l0_w = config.sparsity_weight / static_cast<float>(ds);
                    for (int j = 0; j < ds; ++j) {
                        const float zj = z[static_cast<std::size_t>(j)];
                        const float tj = p.theta[static_cast<std::size_t>(j)];
                        const bool gate = zj > tj;
                        dz[static_cast<std::size_t>(j)] = gate ? df[static_cast<std::size_t>(j)] : 0.0f;
                        if (gate) batch_loss += l0_w;
                        // straight-through: rectangle kernel around the threshold
                        if (std::abs(zj - tj) < 0.5f * bw) {
                            const float k = 1.0f / bw;
                            grads[o_theta + static_cast<std::size_t>(j)] +=
                                -(df[static_cast<std::size_t>(j)] * zj + l0_w) * k;
                        }
                    }
                    for (int j = 0; j < ds; ++j) {
                        const float g = dz[static_cast<std::size_t>(j)];
                        if (g == 0.0f) continue;
                        grads[o_benc + static_cast<std::size_t>(j)] += g;
                        float* gw = grads.data() + o_wenc + static_cast<std::size_t>(j) * d;
                        for (int i = 0; i < d; ++i) gw[i] += g * x[i];
                    }
                }
                if (!std::isfinite(batch_loss)) throw TrainingError("sae training diverged");
                const float inv_n = 1.0f / static_cast<float>(end - start);
                ++step;
                const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
                const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
                auto update = [&](std::vector<float>& dst, std::size_t off) {
                    for (std::size_t i = 0; i < dst.size(); ++i) {
                        const float g = grads[off + i] * inv_n;
                        auto& m_ = adam_m[off + i];
                        auto& v_ = adam_v[off + i];
                        m_ = beta1 * m_ + (1.0f - beta1) * g;
                        v_ = beta2 * v_ + (1.0f - beta2) * g * g;
                        dst[i] -= config.learning_rate * (m_ / bc1) / (std::sqrt(v_ / bc2) + eps_adam);
                    }
                };
                update(p.w_enc, o_wenc);
                update(p.b_enc, o_benc);
                update(p.w_dec, o_wdec);
                update(p.b_dec, o_bdec);
                update(p.theta, o_theta);
                for (auto& t : p.theta) t = std::max(0.0f, t);
            }
        }
    }
    p.validate();

    // final pool metrics
    double mse = 0.0;
    double sparsity = 0.0;
    for (const float* r : rows) {
        float sp = 0.0f;
        const auto f = sae_encode(p, {r, static_cast<std::size_t>(d)}, &sp);
        const auto xhat = sae_decode(p, f);
        for (int i = 0; i < d; ++i) {
            const double c = xhat[static_cast<std::size_t>(i)] - r[i];
            mse += c * c;
        }
        sparsity += sp;
    }
    rep.mse = static_cast<float>(mse / (static_cast<double>(rows.size()) * d));
    rep.mean_sparsity = static_cast<float>(sparsity / static_cast<double>(rows.size()));
    if (report) *report = rep;
    return p;
}

std::vector<float> mean_latent_streaming(const HookedModel& model, const TokenCorpus& corpus,
                                         const SAEParams& params, std::size_t max_tokens) {
    const std::vector<HookPoint> capture = {{params.layer, HookSite::residual_post}};
    std::vector<KahanSum> sums(static_cast<std::size_t>(params.latent_dim));
    std::size_t seen = 0;
    for (const auto& doc : corpus.documents) {
        if (seen >= max_tokens) break;
        const std::size_t take = std::min(doc.size(), max_tokens - seen);
        if (take == 0) break;
        auto batches = model.forward_capture({doc.data(), take}, capture);
        const auto& rb = batches.at(capture[0]);
        for (std::size_t r = 0; r < rb.n_rows(); ++r) {
            const auto f = sae_encode(params, rb.row(r));
            for (std::size_t j = 0; j < f.size(); ++j) sums[j].add(f[j]);
        }
        seen += take;
    }
    if (seen == 0) throw DataError("mean_latent_streaming: no tokens in corpus " + corpus.language);
    std::vector<float> out(sums.size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = static_cast<float>(sums[j].value() / static_cast<double>(seen));
    return out;
}

std::vector<float> mean_latent_of_batch(const SAEParams& params, const ActivationBatch& batch) {
    if (batch.n_rows() == 0) throw DataError("mean_latent_of_batch: empty batch");
    std::vector<KahanSum> sums(static_cast<std::size_t>(params.latent_dim));
    for (std::size_t r = 0; r < batch.n_rows(); ++r) {
        const auto f = sae_encode(params, batch.row(r));
        for (std::size_t j = 0; j < f.size(); ++j) sums[j].add(f[j]);
    }
    std::vector<float> out(sums.size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = static_cast<float>(sums[j].value() / static_cast<double>(batch.n_rows()));
    return out;
}

void save_sae(const std::filesystem::path& root, const SAEParams& params) {
    const auto dir = root / ("layer" + std::to_string(params.layer));
    std::filesystem::create_directories(dir);
    nlohmann::json man;
    man["layer"] = params.layer;
    man["input_dim"] = params.input_dim;
    man["latent_dim"] = params.latent_dim;
    man["seed"] = params.seed;
    man["untrained"] = params.untrained;
    atomic_write_text(dir / "manifest.json", man.dump(2) + "\n");
    write_f32(dir / "w_enc.f32", params.w_enc);
    write_f32(dir / "b_enc.f32", params.b_enc);
    write_f32(dir / "w_dec.f32", params.w_dec);
    write_f32(dir / "b_dec.f32", params.b_dec);
    write_f32(dir / "theta.f32", params.theta);
}

bool sae_exists(const std::filesystem::path& root, int layer) {
    return std::filesystem::exists(root / ("layer" + std::to_string(layer)) / "manifest.json");
}

SAEParams load_sae(const std::filesystem::path& root, int layer) {
    const auto dir = root / ("layer" + std::to_string(layer));
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw MissingArtifactError("no sparse autoencoder for layer " + std::to_string(layer) +
                                   " under " + root.string());
    const auto man = nlohmann::json::parse(read_text(dir / "manifest.json"));
    SAEParams p;
    p.layer = man.at("layer").get<int>();
    p.input_dim = man.at("input_dim").get<int>();
    p.latent_dim = man.at("latent_dim").get<int>();
    p.seed = man.at("seed").get<std::uint64_t>();
    p.untrained = man.at("untrained").get<bool>();
    p.w_enc = read_f32(dir / "w_enc.f32");
    p.b_enc = read_f32(dir / "b_enc.f32");
    p.w_dec = read_f32(dir / "w_dec.f32");
    p.b_dec = read_f32(dir / "b_dec.f32");
    p.theta = read_f32(dir / "theta.f32");
    p.validate();
    return p;
}

}  // namespace steerbench
