#include "steerbench/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace steerbench {

namespace {

constexpr float kLnEps = 1e-5f;

// y = x * W, W row-major [din x dout].
void vec_mat(const float* x, const float* W, float* y, int din, int dout) {
    std::fill(y, y + dout, 0.0f);
    for (int i = 0; i < din; ++i) {
        const float xi = x[i];
        if (xi == 0.0f) continue;
        const float* w = W + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) y[j] += xi * w[j];
    }
}

// dx[i] += dot(W[i,:], dy)
void mat_dvec(const float* W, const float* dy, float* dx, int din, int dout) {
    for (int i = 0; i < din; ++i) {
        const float* w = W + static_cast<std::size_t>(i) * dout;
        float acc = 0.0f;
        for (int j = 0; j < dout; ++j) acc += w[j] * dy[j];
        dx[i] += acc;
    }
}

// dW[i][j] += x[i] * dy[j]
void outer_acc(const float* x, const float* dy, float* dW, int din, int dout) {
    for (int i = 0; i < din; ++i) {
        const float xi = x[i];
        if (xi == 0.0f) continue;
        float* w = dW + static_cast<std::size_t>(i) * dout;
        for (int j = 0; j < dout; ++j) w[j] += xi * dy[j];
    }
}

void layernorm_fwd(const float* x, const float* g, const float* b, float* y, int d,
                   float* mean_out, float* rstd_out) {
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += x[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
        const double c = x[i] - mu;
        var += c * c;
    }
    var /= d;
    const float rstd = static_cast<float>(1.0 / std::sqrt(var + kLnEps));
    const float mean = static_cast<float>(mu);
    for (int i = 0; i < d; ++i) y[i] = (x[i] - mean) * rstd * g[i] + b[i];
    if (mean_out) *mean_out = mean;
    if (rstd_out) *rstd_out = rstd;
}

void layernorm_bwd(const float* x, float mean, float rstd, const float* g, const float* dy,
                   float* dx, float* dg, float* db, int d) {
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (int i = 0; i < d; ++i) {
        const float xhat = (x[i] - mean) * rstd;
        const float dxhat = dy[i] * g[i];
        dg[i] += dy[i] * xhat;
        db[i] += dy[i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
    }
    const float m1 = static_cast<float>(sum_dxhat / d);
    const float m2 = static_cast<float>(sum_dxhat_xhat / d);
    for (int i = 0; i < d; ++i) {
        const float xhat = (x[i] - mean) * rstd;
        const float dxhat = dy[i] * g[i];
        dx[i] += (dxhat - m1 - xhat * m2) * rstd;
    }
}

void softmax_inplace(float* s, int n) {
    float mx = s[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, s[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        s[i] = std::exp(s[i] - mx);
        sum += s[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int i = 0; i < n; ++i) s[i] *= inv;
}

}  // namespace

void ToyConfig::validate() const {
    std::vector<std::string> problems;
    if (n_layers < 2) problems.push_back("n_layers must be >= 2");
    if (hidden_dim < 2) problems.push_back("hidden_dim must be >= 2");
    if (mlp_dim < hidden_dim) problems.push_back("mlp_dim must be >= hidden_dim");
    if (n_heads < 1 || hidden_dim % n_heads != 0)
        problems.push_back("n_heads must divide hidden_dim");
    if (max_seq < 2) problems.push_back("max_seq must be >= 2");
    if (batch_size < 1) problems.push_back("batch_size must be >= 1");
    if (steps < 0) problems.push_back("steps must be >= 0");
    if (!(learning_rate > 0.0f)) problems.push_back("learning_rate must be > 0");
    if (!problems.empty()) throw ConfigError("toy model config: " + join(problems, "; "));
}

void ToyTransformer::build_layout() {
    const auto d = static_cast<std::size_t>(cfg_.hidden_dim);
    const auto m = static_cast<std::size_t>(cfg_.mlp_dim);
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const auto S = static_cast<std::size_t>(cfg_.max_seq);
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
        const std::size_t at = off;
        off += n;
        return at;
    };
    layout_.tok_emb = take(V * d);
    layout_.pos_emb = take(S * d);
    layout_.blocks.clear();
    for (int l = 0; l < cfg_.n_layers; ++l) {
        Block b{};
        b.ln1_g = take(d);
        b.ln1_b = take(d);
        b.wq = take(d * d);
        b.wk = take(d * d);
        b.wv = take(d * d);
        b.wo = take(d * d);
        b.ln2_g = take(d);
        b.ln2_b = take(d);
        b.w_in = take(d * m);
        b.b_in = take(m);
        b.w_out = take(m * d);
        b.b_out = take(d);
        layout_.blocks.push_back(b);
    }
    layout_.lnf_g = take(d);
    layout_.lnf_b = take(d);
    layout_.unemb = take(d * V);
    layout_.total = off;
}

void ToyTransformer::init_params(std::uint64_t seed) {
    params_.assign(layout_.total, 0.0f);
    std::mt19937 rng(static_cast<std::uint32_t>(seed ^ 0x7451a9u));
    std::normal_distribution<float> emb_dist(0.0f, 0.1f);
    auto fill_normal = [&](std::size_t off, std::size_t n, float std) {
        std::normal_distribution<float> dist(0.0f, std);
        for (std::size_t i = 0; i < n; ++i) params_[off + i] = dist(rng);
    };
    const auto d = static_cast<std::size_t>(cfg_.hidden_dim);
    const auto m = static_cast<std::size_t>(cfg_.mlp_dim);
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const auto S = static_cast<std::size_t>(cfg_.max_seq);
    for (std::size_t i = 0; i < V * d; ++i) params_[layout_.tok_emb + i] = emb_dist(rng);
    for (std::size_t i = 0; i < S * d; ++i) params_[layout_.pos_emb + i] = emb_dist(rng);
    const float w_std = 0.5f / std::sqrt(static_cast<float>(d));
    const float w_std_m = 0.5f / std::sqrt(static_cast<float>(m));
    for (const auto& b : layout_.blocks) {
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(b.ln1_g), d, 1.0f);
        std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(b.ln2_g), d, 1.0f);
        fill_normal(b.wq, d * d, w_std);
        fill_normal(b.wk, d * d, w_std);
        fill_normal(b.wv, d * d, w_std);
        fill_normal(b.wo, d * d, w_std);
        fill_normal(b.w_in, d * m, w_std);
        fill_normal(b.w_out, m * d, w_std_m);
    }
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layout_.lnf_g), d, 1.0f);
    fill_normal(layout_.unemb, d * V, w_std);
}

ToyTransformer::ToyTransformer(const ToyConfig& cfg) : cfg_(cfg) {
    if (cfg_.vocab_size < 2) throw ConfigError("toy model needs vocab_size >= 2");
    cfg_.validate();
    model_id_ = "toy_L" + std::to_string(cfg_.n_layers) + "_d" + std::to_string(cfg_.hidden_dim) +
                "_m" + std::to_string(cfg_.mlp_dim) + "_h" + std::to_string(cfg_.n_heads) + "_s" +
                std::to_string(cfg_.seed);
    n_layers_ = cfg_.n_layers;
    hidden_dim_ = cfg_.hidden_dim;
    mlp_dim_ = cfg_.mlp_dim;
    vocab_size_ = cfg_.vocab_size;
    build_layout();
    init_params(cfg_.seed);
}

// --- streaming inference ------------------------------------------------------

struct ToyTransformer::StreamState {
    std::vector<std::vector<float>> kc, vc;  // per layer, d floats per cached position
    std::vector<float> x, a, q, k, v, z, scores, act, tmp_d, tmp_m, logits;
    int n_cached = 0;
};

void ToyTransformer::step_token(StreamState& st, TokenId token, int pos,
                                const std::vector<Intervention>& interventions,
                                std::map<HookPoint, ActivationBatch>* capture) const {
    const int d = cfg_.hidden_dim;
    const int m = cfg_.mlp_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
    const float* P = params_.data();

    if (st.x.empty()) {
        st.kc.assign(static_cast<std::size_t>(cfg_.n_layers), {});
        st.vc.assign(static_cast<std::size_t>(cfg_.n_layers), {});
        st.x.resize(static_cast<std::size_t>(d));
        st.a.resize(static_cast<std::size_t>(d));
        st.q.resize(static_cast<std::size_t>(d));
        st.k.resize(static_cast<std::size_t>(d));
        st.v.resize(static_cast<std::size_t>(d));
        st.z.resize(static_cast<std::size_t>(d));
        st.act.resize(static_cast<std::size_t>(m));
        st.tmp_d.resize(static_cast<std::size_t>(d));
        st.tmp_m.resize(static_cast<std::size_t>(m));
    }

    // Positions beyond the trained window reuse the last position embedding.
    const int p_emb = std::min(pos, cfg_.max_seq - 1);
    const float* te = P + layout_.tok_emb + static_cast<std::size_t>(token) * d;
    const float* pe = P + layout_.pos_emb + static_cast<std::size_t>(p_emb) * d;
    for (int i = 0; i < d; ++i) st.x[static_cast<std::size_t>(i)] = te[i] + pe[i];

    const int n_pos = st.n_cached + 1;
    st.scores.resize(static_cast<std::size_t>(n_pos));

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& B = layout_.blocks[static_cast<std::size_t>(l)];
        layernorm_fwd(st.x.data(), P + B.ln1_g, P + B.ln1_b, st.a.data(), d, nullptr, nullptr);
        vec_mat(st.a.data(), P + B.wq, st.q.data(), d, d);
        vec_mat(st.a.data(), P + B.wk, st.k.data(), d, d);
        vec_mat(st.a.data(), P + B.wv, st.v.data(), d, d);
        auto& kc = st.kc[static_cast<std::size_t>(l)];
        auto& vc = st.vc[static_cast<std::size_t>(l)];
        kc.insert(kc.end(), st.k.begin(), st.k.end());
        vc.insert(vc.end(), st.v.begin(), st.v.end());

        for (int h = 0; h < H; ++h) {
            const int off = h * dh;
            for (int j = 0; j < n_pos; ++j) {
                const float* kj = kc.data() + static_cast<std::size_t>(j) * d + off;
                float acc = 0.0f;
                for (int u = 0; u < dh; ++u) acc += st.q[static_cast<std::size_t>(off + u)] * kj[u];
                st.scores[static_cast<std::size_t>(j)] = acc * inv_sqrt;
            }
            softmax_inplace(st.scores.data(), n_pos);
            for (int u = 0; u < dh; ++u) st.z[static_cast<std::size_t>(off + u)] = 0.0f;
            for (int j = 0; j < n_pos; ++j) {
                const float pj = st.scores[static_cast<std::size_t>(j)];
                if (pj == 0.0f) continue;
                const float* vj = vc.data() + static_cast<std::size_t>(j) * d + off;
                for (int u = 0; u < dh; ++u) st.z[static_cast<std::size_t>(off + u)] += pj * vj[u];
            }
        }
        vec_mat(st.z.data(), P + B.wo, st.tmp_d.data(), d, d);
        for (int i = 0; i < d; ++i) st.x[static_cast<std::size_t>(i)] += st.tmp_d[static_cast<std::size_t>(i)];

        layernorm_fwd(st.x.data(), P + B.ln2_g, P + B.ln2_b, st.a.data(), d, nullptr, nullptr);
        vec_mat(st.a.data(), P + B.w_in, st.tmp_m.data(), d, m);
        const float* b_in = P + B.b_in;
        for (int i = 0; i < m; ++i)
            st.act[static_cast<std::size_t>(i)] = std::max(0.0f, st.tmp_m[static_cast<std::size_t>(i)] + b_in[i]);

        const HookPoint mlp_point{l, HookSite::mlp_activation};
        for (const auto& iv : interventions)
            if (iv.point == mlp_point) iv.fn(mlp_point, std::span<float>(st.act));
        if (capture) {
            auto it = capture->find(mlp_point);
            if (it != capture->end()) it->second.push_row(st.act);
        }

        vec_mat(st.act.data(), P + B.w_out, st.tmp_d.data(), m, d);
        const float* b_out = P + B.b_out;
        for (int i = 0; i < d; ++i) st.x[static_cast<std::size_t>(i)] += st.tmp_d[static_cast<std::size_t>(i)] + b_out[i];

        const HookPoint res_point{l, HookSite::residual_post};
        for (const auto& iv : interventions)
            if (iv.point == res_point) iv.fn(res_point, std::span<float>(st.x));
        if (capture) {
            auto it = capture->find(res_point);
            if (it != capture->end()) it->second.push_row(st.x);
        }
    }
    st.n_cached = n_pos;
}

std::map<HookPoint, ActivationBatch> ToyTransformer::forward_capture(
    std::span<const TokenId> tokens, const std::vector<HookPoint>& capture,
    const std::vector<Intervention>& interventions) const {
    validate_tokens(tokens);
    for (const auto& p : capture) validate_hook(p);
    for (const auto& iv : interventions) validate_hook(iv.point);

    std::map<HookPoint, ActivationBatch> out;
    for (const auto& p : capture) {
        ActivationBatch b;
        b.layer = p.layer;
        b.site = p.site;
        b.dim = site_dim(p.site);
        b.rows.reserve(tokens.size() * static_cast<std::size_t>(b.dim));
        out.emplace(p, std::move(b));
    }
    StreamState st;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        step_token(st, tokens[i], static_cast<int>(i), interventions, &out);
    return out;
}

std::vector<TokenId> ToyTransformer::generate(std::span<const TokenId> prompt,
                                              const std::vector<Intervention>& interventions,
                                              const DecodingSpec& decoding) const {
    if (prompt.empty()) throw DataError("empty prompt");
    validate_tokens(prompt);
    for (const auto& iv : interventions) validate_hook(iv.point);
    if (decoding.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");

    const int d = cfg_.hidden_dim;
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    StreamState st;
    st.logits.resize(V);
    std::vector<float> fin(static_cast<std::size_t>(d));
    std::mt19937 rng(static_cast<std::uint32_t>(decoding.seed ^ 0x5eedull));

    for (std::size_t i = 0; i < prompt.size(); ++i)
        step_token(st, prompt[i], static_cast<int>(i), interventions, nullptr);

    std::vector<TokenId> out;
    TokenId cur = prompt.back();
    int pos = static_cast<int>(prompt.size());
    for (int n = 0; n < decoding.max_new_tokens; ++n) {
        // logits from the residual state left by the last processed token
        layernorm_fwd(st.x.data(), params_.data() + layout_.lnf_g, params_.data() + layout_.lnf_b,
                      fin.data(), d, nullptr, nullptr);
        vec_mat(fin.data(), params_.data() + layout_.unemb, st.logits.data(), d,
                static_cast<int>(V));
        // id 0 is padding, never a valid continuation
        st.logits[0] = -1e30f;

        if (decoding.greedy) {
            int best = 1;
            for (std::size_t j = 1; j < V; ++j)
                if (st.logits[j] > st.logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
            cur = static_cast<TokenId>(best);
        } else {
            const float inv_t = static_cast<float>(1.0 / std::max(1e-6, decoding.temperature));
            std::vector<float> probs(st.logits);
            for (auto& p : probs) p *= inv_t;
            softmax_inplace(probs.data(), static_cast<int>(V));
            std::discrete_distribution<int> dist(probs.begin(), probs.end());
            cur = static_cast<TokenId>(dist(rng));
        }
        out.push_back(cur);
        if (decoding.eos_token >= 0 && cur == decoding.eos_token) break;
        if (n + 1 < decoding.max_new_tokens)
            step_token(st, cur, pos++, interventions, nullptr);
    }
    return out;
}

std::unique_ptr<HookedModel> ToyTransformer::clone() const {
    return std::make_unique<ToyTransformer>(*this);
}

// --- training ------------------------------------------------------------------

struct ToyTransformer::SeqCache {
    int T = 0;
    std::vector<float> x0;
    struct BlockCache {
        std::vector<float> ln1_out, ln1_mean, ln1_rstd;
        std::vector<float> q, k, v, probs, z;
        std::vector<float> resid_att;
        std::vector<float> ln2_out, ln2_mean, ln2_rstd;
        std::vector<float> act;
        std::vector<float> resid_post;
    };
    std::vector<BlockCache> blocks;
    std::vector<float> lnf_out, lnf_mean, lnf_rstd;
    std::vector<float> probs_out;
};

double ToyTransformer::forward_seq(std::span<const TokenId> seq, SeqCache& c,
                                   std::size_t* correct) const {
    const int d = cfg_.hidden_dim;
    const int m = cfg_.mlp_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const int T = static_cast<int>(seq.size());
    const float* P = params_.data();

    c.T = T;
    const auto Td = static_cast<std::size_t>(T) * d;
    const auto Tm = static_cast<std::size_t>(T) * m;
    c.x0.assign(Td, 0.0f);
    c.blocks.assign(static_cast<std::size_t>(cfg_.n_layers), {});
    for (auto& b : c.blocks) {
        b.ln1_out.assign(Td, 0.0f);
        b.ln1_mean.assign(static_cast<std::size_t>(T), 0.0f);
        b.ln1_rstd.assign(static_cast<std::size_t>(T), 0.0f);
        b.q.assign(Td, 0.0f);
        b.k.assign(Td, 0.0f);
        b.v.assign(Td, 0.0f);
        b.probs.assign(static_cast<std::size_t>(H) * T * T, 0.0f);
        b.z.assign(Td, 0.0f);
        b.resid_att.assign(Td, 0.0f);
        b.ln2_out.assign(Td, 0.0f);
        b.ln2_mean.assign(static_cast<std::size_t>(T), 0.0f);
        b.ln2_rstd.assign(static_cast<std::size_t>(T), 0.0f);
        b.act.assign(Tm, 0.0f);
        b.resid_post.assign(Td, 0.0f);
    }
    c.lnf_out.assign(Td, 0.0f);
    c.lnf_mean.assign(static_cast<std::size_t>(T), 0.0f);
    c.lnf_rstd.assign(static_cast<std::size_t>(T), 0.0f);
    c.probs_out.assign(static_cast<std::size_t>(T) * V, 0.0f);

    for (int t = 0; t < T; ++t) {
        const int p_emb = std::min(t, cfg_.max_seq - 1);
        const float* te = P + layout_.tok_emb + static_cast<std::size_t>(seq[static_cast<std::size_t>(t)]) * d;
        const float* pe = P + layout_.pos_emb + static_cast<std::size_t>(p_emb) * d;
        float* x = c.x0.data() + static_cast<std::size_t>(t) * d;
        for (int i = 0; i < d; ++i) x[i] = te[i] + pe[i];
    }

    const float* x_in = c.x0.data();
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& B = layout_.blocks[static_cast<std::size_t>(l)];
        auto& bc = c.blocks[static_cast<std::size_t>(l)];
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            layernorm_fwd(x_in + td, P + B.ln1_g, P + B.ln1_b, bc.ln1_out.data() + td, d,
                          &bc.ln1_mean[static_cast<std::size_t>(t)], &bc.ln1_rstd[static_cast<std::size_t>(t)]);
            vec_mat(bc.ln1_out.data() + td, P + B.wq, bc.q.data() + td, d, d);
            vec_mat(bc.ln1_out.data() + td, P + B.wk, bc.k.data() + td, d, d);
            vec_mat(bc.ln1_out.data() + td, P + B.wv, bc.v.data() + td, d, d);
        }
        for (int h = 0; h < H; ++h) {
            const int off = h * dh;
            for (int t = 0; t < T; ++t) {
                float* row = bc.probs.data() + (static_cast<std::size_t>(h) * T + t) * T;
                const float* qt = bc.q.data() + static_cast<std::size_t>(t) * d + off;
                for (int j = 0; j <= t; ++j) {
                    const float* kj = bc.k.data() + static_cast<std::size_t>(j) * d + off;
                    float acc = 0.0f;
                    for (int u = 0; u < dh; ++u) acc += qt[u] * kj[u];
                    row[j] = acc * inv_sqrt;
                }
                softmax_inplace(row, t + 1);
                float* zt = bc.z.data() + static_cast<std::size_t>(t) * d + off;
                for (int u = 0; u < dh; ++u) zt[u] = 0.0f;
                for (int j = 0; j <= t; ++j) {
                    const float pj = row[j];
                    const float* vj = bc.v.data() + static_cast<std::size_t>(j) * d + off;
                    for (int u = 0; u < dh; ++u) zt[u] += pj * vj[u];
                }
            }
        }
        std::vector<float> tmp(static_cast<std::size_t>(d));
        std::vector<float> pre(static_cast<std::size_t>(m));
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            vec_mat(bc.z.data() + td, P + B.wo, tmp.data(), d, d);
            for (int i = 0; i < d; ++i) bc.resid_att[td + static_cast<std::size_t>(i)] = x_in[td + static_cast<std::size_t>(i)] + tmp[static_cast<std::size_t>(i)];
        }
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            const auto tm = static_cast<std::size_t>(t) * m;
            layernorm_fwd(bc.resid_att.data() + td, P + B.ln2_g, P + B.ln2_b, bc.ln2_out.data() + td,
                          d, &bc.ln2_mean[static_cast<std::size_t>(t)], &bc.ln2_rstd[static_cast<std::size_t>(t)]);
            vec_mat(bc.ln2_out.data() + td, P + B.w_in, pre.data(), d, m);
            const float* b_in = P + B.b_in;
            for (int i = 0; i < m; ++i) bc.act[tm + static_cast<std::size_t>(i)] = std::max(0.0f, pre[static_cast<std::size_t>(i)] + b_in[i]);
            vec_mat(bc.act.data() + tm, P + B.w_out, tmp.data(), m, d);
            const float* b_out = P + B.b_out;
            for (int i = 0; i < d; ++i)
                bc.resid_post[td + static_cast<std::size_t>(i)] = bc.resid_att[td + static_cast<std::size_t>(i)] + tmp[static_cast<std::size_t>(i)] + b_out[i];
        }
        x_in = bc.resid_post.data();
    }

    double loss = 0.0;
    std::vector<float> logits(V);
    for (int t = 0; t < T; ++t) {
        const auto td = static_cast<std::size_t>(t) * d;
        layernorm_fwd(x_in + td, P + layout_.lnf_g, P + layout_.lnf_b, c.lnf_out.data() + td, d,
                      &c.lnf_mean[static_cast<std::size_t>(t)], &c.lnf_rstd[static_cast<std::size_t>(t)]);
        if (t + 1 >= T) break;  // no target for the last position
        vec_mat(c.lnf_out.data() + td, P + layout_.unemb, logits.data(), d, static_cast<int>(V));
        softmax_inplace(logits.data(), static_cast<int>(V));
        std::copy(logits.begin(), logits.end(), c.probs_out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * V));
        const auto target = static_cast<std::size_t>(seq[static_cast<std::size_t>(t) + 1]);
        loss += -std::log(std::max(1e-12, static_cast<double>(logits[target])));
        if (correct) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < V; ++j)
                if (logits[j] > logits[best]) best = j;
            if (best == target) ++(*correct);
        }
    }
    return loss;
}

void ToyTransformer::backward_seq(std::span<const TokenId> seq, const SeqCache& c,
                                  std::vector<float>& grads) const {
    const int d = cfg_.hidden_dim;
    const int m = cfg_.mlp_dim;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
    const auto V = static_cast<std::size_t>(cfg_.vocab_size);
    const int T = c.T;
    const float* P = params_.data();
    float* G = grads.data();
    const auto Td = static_cast<std::size_t>(T) * d;

    std::vector<float> dx(Td, 0.0f);  // grad wrt the block-stack output stream
    std::vector<float> dlogits(V);

    for (int t = 0; t + 1 < T; ++t) {
        const auto td = static_cast<std::size_t>(t) * d;
        const float* probs = c.probs_out.data() + static_cast<std::size_t>(t) * V;
        for (std::size_t j = 0; j < V; ++j) dlogits[j] = probs[j];
        dlogits[static_cast<std::size_t>(seq[static_cast<std::size_t>(t) + 1])] -= 1.0f;
        std::vector<float> dlnf(static_cast<std::size_t>(d), 0.0f);
        mat_dvec(P + layout_.unemb, dlogits.data(), dlnf.data(), d, static_cast<int>(V));
        outer_acc(c.lnf_out.data() + td, dlogits.data(), G + layout_.unemb, d, static_cast<int>(V));
        const float* x_res = (cfg_.n_layers > 0)
                                 ? c.blocks.back().resid_post.data() + td
                                 : c.x0.data() + td;
        layernorm_bwd(x_res, c.lnf_mean[static_cast<std::size_t>(t)], c.lnf_rstd[static_cast<std::size_t>(t)],
                      P + layout_.lnf_g, dlnf.data(), dx.data() + td, G + layout_.lnf_g,
                      G + layout_.lnf_b, d);
    }

    std::vector<float> d_resid_att(Td);
    std::vector<float> dz(Td), dq(Td), dk(Td), dv(Td), dln1(Td), dln2(static_cast<std::size_t>(d));
    std::vector<float> dact(static_cast<std::size_t>(m)), dpre(static_cast<std::size_t>(m));

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        const auto& B = layout_.blocks[static_cast<std::size_t>(l)];
        const auto& bc = c.blocks[static_cast<std::size_t>(l)];
        const float* x_in = l == 0 ? c.x0.data() : c.blocks[static_cast<std::size_t>(l - 1)].resid_post.data();

        // MLP half: resid_post = resid_att + W_out(act) + b_out
        std::copy(dx.begin(), dx.end(), d_resid_att.begin());
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            const auto tm = static_cast<std::size_t>(t) * m;
            const float* dy = dx.data() + td;
            for (int i = 0; i < d; ++i) G[B.b_out + static_cast<std::size_t>(i)] += dy[i];
            std::fill(dact.begin(), dact.end(), 0.0f);
            mat_dvec(P + B.w_out, dy, dact.data(), m, d);
            outer_acc(bc.act.data() + tm, dy, G + B.w_out, m, d);
            for (int i = 0; i < m; ++i)
                dpre[static_cast<std::size_t>(i)] =
                    bc.act[tm + static_cast<std::size_t>(i)] > 0.0f ? dact[static_cast<std::size_t>(i)] : 0.0f;
            for (int i = 0; i < m; ++i) G[B.b_in + static_cast<std::size_t>(i)] += dpre[static_cast<std::size_t>(i)];
            std::fill(dln2.begin(), dln2.end(), 0.0f);
            mat_dvec(P + B.w_in, dpre.data(), dln2.data(), d, m);
            outer_acc(bc.ln2_out.data() + td, dpre.data(), G + B.w_in, d, m);
            layernorm_bwd(bc.resid_att.data() + td, bc.ln2_mean[static_cast<std::size_t>(t)],
                          bc.ln2_rstd[static_cast<std::size_t>(t)], P + B.ln2_g, dln2.data(),
                          d_resid_att.data() + td, G + B.ln2_g, G + B.ln2_b, d);
        }

        // Attention half: resid_att = x_in + Wo(z)
        std::copy(d_resid_att.begin(), d_resid_att.end(), dx.begin());  // passthrough into x_in
        std::fill(dz.begin(), dz.end(), 0.0f);
        std::fill(dq.begin(), dq.end(), 0.0f);
        std::fill(dk.begin(), dk.end(), 0.0f);
        std::fill(dv.begin(), dv.end(), 0.0f);
        std::fill(dln1.begin(), dln1.end(), 0.0f);
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            const float* dy = d_resid_att.data() + td;
            mat_dvec(P + B.wo, dy, dz.data() + td, d, d);
            outer_acc(bc.z.data() + td, dy, G + B.wo, d, d);
        }
        std::vector<float> dprow(static_cast<std::size_t>(T));
        for (int h = 0; h < H; ++h) {
            const int off = h * dh;
            for (int t = 0; t < T; ++t) {
                const float* prow = bc.probs.data() + (static_cast<std::size_t>(h) * T + t) * T;
                const float* dzt = dz.data() + static_cast<std::size_t>(t) * d + off;
                double dot_pd = 0.0;
                for (int j = 0; j <= t; ++j) {
                    const float* vj = bc.v.data() + static_cast<std::size_t>(j) * d + off;
                    float acc = 0.0f;
                    for (int u = 0; u < dh; ++u) acc += dzt[u] * vj[u];
                    dprow[static_cast<std::size_t>(j)] = acc;
                    dot_pd += static_cast<double>(prow[j]) * acc;
                    float* dvj = dv.data() + static_cast<std::size_t>(j) * d + off;
                    for (int u = 0; u < dh; ++u) dvj[u] += prow[j] * dzt[u];
                }
                const float* qt = bc.q.data() + static_cast<std::size_t>(t) * d + off;
                float* dqt = dq.data() + static_cast<std::size_t>(t) * d + off;
                for (int j = 0; j <= t; ++j) {
                    const float ds = prow[j] * (dprow[static_cast<std::size_t>(j)] - static_cast<float>(dot_pd)) * inv_sqrt;
                    if (ds == 0.0f) continue;
                    const float* kj = bc.k.data() + static_cast<std::size_t>(j) * d + off;
                    float* dkj = dk.data() + static_cast<std::size_t>(j) * d + off;
                    for (int u = 0; u < dh; ++u) {
                        dqt[u] += ds * kj[u];
                        dkj[u] += ds * qt[u];
                    }
                }
            }
        }
        for (int t = 0; t < T; ++t) {
            const auto td = static_cast<std::size_t>(t) * d;
            mat_dvec(P + B.wq, dq.data() + td, dln1.data() + td, d, d);
            mat_dvec(P + B.wk, dk.data() + td, dln1.data() + td, d, d);
            mat_dvec(P + B.wv, dv.data() + td, dln1.data() + td, d, d);
            outer_acc(bc.ln1_out.data() + td, dq.data() + td, G + B.wq, d, d);
            outer_acc(bc.ln1_out.data() + td, dk.data() + td, G + B.wk, d, d);
            outer_acc(bc.ln1_out.data() + td, dv.data() + td, G + B.wv, d, d);
            layernorm_bwd(x_in + td, bc.ln1_mean[static_cast<std::size_t>(t)],
                          bc.ln1_rstd[static_cast<std::size_t>(t)], P + B.ln1_g, dln1.data() + td,
                          dx.data() + td, G + B.ln1_g, G + B.ln1_b, d);
        }
    }

    for (int t = 0; t < T; ++t) {
        const auto td = static_cast<std::size_t>(t) * d;
        const int p_emb = std::min(t, cfg_.max_seq - 1);
        float* dte = G + layout_.tok_emb + static_cast<std::size_t>(seq[static_cast<std::size_t>(t)]) * d;
        float* dpe = G + layout_.pos_emb + static_cast<std::size_t>(p_emb) * d;
        for (int i = 0; i < d; ++i) {
            dte[i] += dx[td + static_cast<std::size_t>(i)];
            dpe[i] += dx[td + static_cast<std::size_t>(i)];
        }
    }
}

double ToyTransformer::batch_loss(std::span<const std::vector<TokenId>> seqs) const {
    SeqCache cache;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& s : seqs) {
        if (s.size() < 2) continue;
        total += forward_seq(s, cache);
        count += s.size() - 1;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

void ToyTransformer::accumulate_grads(std::span<const std::vector<TokenId>> seqs,
                                      std::vector<float>& grads) const {
    grads.assign(layout_.total, 0.0f);
    SeqCache cache;
    std::size_t count = 0;
    for (const auto& s : seqs) {
        if (s.size() < 2) continue;
        forward_seq(s, cache);
        backward_seq(s, cache, grads);
        count += s.size() - 1;
    }
    if (count) {
        const float inv = 1.0f / static_cast<float>(count);
        for (auto& g : grads) g *= inv;
    }
}

void ToyTransformer::heldout_metrics(std::span<const std::vector<TokenId>> seqs, double* loss,
                                     double* accuracy) const {
    SeqCache cache;
    double total = 0.0;
    std::size_t count = 0;
    std::size_t correct = 0;
    for (const auto& s : seqs) {
        if (s.size() < 2) continue;
        total += forward_seq(s, cache, &correct);
        count += s.size() - 1;
    }
    if (loss) *loss = count ? total / static_cast<double>(count) : 0.0;
    if (accuracy) *accuracy = count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
}

std::unique_ptr<ToyTransformer> ToyTransformer::train(const std::vector<TokenCorpus>& corpora,
                                                      ToyConfig cfg, TrainReport* report) {
    if (corpora.size() < 2) throw ConfigError("toy model training needs >= 2 corpora");
    if (cfg.vocab_size == 0) {
        TokenId max_id = 0;
        for (const auto& c : corpora)
            for (const auto& doc : c.documents)
                for (TokenId t : doc) max_id = std::max(max_id, t);
        cfg.vocab_size = max_id + 1;
    }
    cfg.validate();

    auto model = std::make_unique<ToyTransformer>(cfg);

    std::vector<std::vector<TokenId>> docs;
    for (const auto& c : corpora) {
        for (const auto& doc : c.documents) {
            if (doc.size() < 2) continue;
            auto copy = doc;
            if (static_cast<int>(copy.size()) > cfg.max_seq) copy.resize(static_cast<std::size_t>(cfg.max_seq));
            docs.push_back(std::move(copy));
        }
    }
    if (docs.empty()) throw DataError("no trainable documents (need length >= 2)");

    std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed ^ 0x7ea1u));
    std::shuffle(docs.begin(), docs.end(), rng);
    std::size_t n_held = static_cast<std::size_t>(cfg.heldout_fraction * static_cast<float>(docs.size()));
    n_held = std::min(std::max<std::size_t>(n_held, 1), docs.size() - 1);
    std::vector<std::vector<TokenId>> held(docs.end() - static_cast<std::ptrdiff_t>(n_held), docs.end());
    docs.resize(docs.size() - n_held);

    TrainReport rep;
    rep.untrained = cfg.steps == 0;

    if (cfg.steps > 0) {
        std::vector<float> grads(model->layout_.total, 0.0f);
        std::vector<float> adam_m(model->layout_.total, 0.0f);
        std::vector<float> adam_v(model->layout_.total, 0.0f);
        const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
        std::uniform_int_distribution<std::size_t> pick(0, docs.size() - 1);
        std::vector<std::vector<TokenId>> batch(static_cast<std::size_t>(cfg.batch_size));
        double last_loss = 0.0;

        for (int step = 0; step < cfg.steps; ++step) {
            for (auto& b : batch) b = docs[pick(rng)];
            model->accumulate_grads(batch, grads);
            last_loss = model->batch_loss(batch);
            if (!std::isfinite(last_loss))
                throw TrainingError("toy model diverged at step " + std::to_string(step));

            double norm_sq = 0.0;
            for (float g : grads) norm_sq += static_cast<double>(g) * g;
            const double norm = std::sqrt(norm_sq);
            const float scale = norm > cfg.grad_clip ? static_cast<float>(cfg.grad_clip / norm) : 1.0f;

            const float warm = std::min(1.0f, static_cast<float>(step + 1) / 20.0f);
            const float lr = cfg.learning_rate * warm;
            const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step + 1));
            const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step + 1));
            float* p = model->params_.data();
            for (std::size_t i = 0; i < grads.size(); ++i) {
                const float g = grads[i] * scale;
                adam_m[i] = beta1 * adam_m[i] + (1.0f - beta1) * g;
                adam_v[i] = beta2 * adam_v[i] + (1.0f - beta2) * g * g;
                const float mhat = adam_m[i] / bc1;
                const float vhat = adam_v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        rep.final_loss = static_cast<float>(last_loss);
        rep.steps_run = cfg.steps;
        model->untrained_ = false;
        model->trained_steps_ = cfg.steps;
    }

    double hl = 0.0, ha = 0.0;
    model->heldout_metrics(held, &hl, &ha);
    rep.heldout_loss = static_cast<float>(hl);
    rep.heldout_accuracy = static_cast<float>(ha);
    rep.heldout_perplexity = static_cast<float>(std::exp(hl));
    if (report) *report = rep;
    return model;
}

std::unique_ptr<ToyTransformer> train_toy_model(const std::vector<TokenCorpus>& corpora,
                                                const ToyConfig& cfg, TrainReport* report) {
    return ToyTransformer::train(corpora, cfg, report);
}

// --- checkpoint io ---------------------------------------------------------------

void ToyTransformer::save(const std::filesystem::path& base) const {
    write_f32(std::filesystem::path(base.string() + ".bin"), params_);
    std::ostringstream man;
    man << "model_id=" << model_id_ << "\n";
    man << "n_layers=" << cfg_.n_layers << "\n";
    man << "hidden_dim=" << cfg_.hidden_dim << "\n";
    man << "mlp_dim=" << cfg_.mlp_dim << "\n";
    man << "n_heads=" << cfg_.n_heads << "\n";
    man << "max_seq=" << cfg_.max_seq << "\n";
    man << "vocab_size=" << cfg_.vocab_size << "\n";
    man << "seed=" << cfg_.seed << "\n";
    man << "steps=" << trained_steps_ << "\n";
    man << "untrained=" << (untrained_ ? 1 : 0) << "\n";
    man << "param_count=" << params_.size() << "\n";
    man << "checksum=" << weights_checksum() << "\n";
    atomic_write_text(std::filesystem::path(base.string() + ".manifest"), man.str());
}

std::unique_ptr<ToyTransformer> ToyTransformer::load(const std::filesystem::path& base) {
    const auto manifest = read_text(std::filesystem::path(base.string() + ".manifest"));
    std::map<std::string, std::string> kv;
    for (const auto& line : split(manifest, '\n')) {
        const auto pos = line.find('=');
        if (pos == std::string::npos) continue;
        kv[trim(line.substr(0, pos))] = trim(line.substr(pos + 1));
    }
    auto geti = [&kv](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError("toy checkpoint manifest missing key: " + key);
        return std::stoll(it->second);
    };
    ToyConfig cfg;
    cfg.n_layers = static_cast<int>(geti("n_layers"));
    cfg.hidden_dim = static_cast<int>(geti("hidden_dim"));
    cfg.mlp_dim = static_cast<int>(geti("mlp_dim"));
    cfg.n_heads = static_cast<int>(geti("n_heads"));
    cfg.max_seq = static_cast<int>(geti("max_seq"));
    cfg.vocab_size = static_cast<std::int32_t>(geti("vocab_size"));
    cfg.seed = static_cast<std::uint64_t>(geti("seed"));

    auto model = std::make_unique<ToyTransformer>(cfg);
    auto params = read_f32(std::filesystem::path(base.string() + ".bin"));
    if (params.size() != model->layout_.total)
        throw DataError("toy checkpoint has wrong parameter count: " + base.string());
    model->params_ = std::move(params);
    model->trained_steps_ = static_cast<int>(geti("steps"));
    model->untrained_ = geti("untrained") != 0;
    const auto expect = static_cast<std::uint64_t>(std::stoull(kv.at("checksum")));
    if (model->weights_checksum() != expect)
        throw DataError("toy checkpoint checksum mismatch: " + base.string());
    return model;
}

}  // namespace steerbench
