#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "steerbench/common.hpp"
#include "steerbench/langspace.hpp"

namespace steerbench {

enum class HookSite { residual_post, mlp_activation };

std::string site_name(HookSite s);
HookSite parse_site(const std::string& s);

// residual_post carries d-dim rows (the inter-block residual stream after the
// block), mlp_activation carries m-dim rows (post-nonlinearity MLP inner state).
struct HookPoint {
    int layer = 0;
    HookSite site = HookSite::residual_post;

    auto operator<=>(const HookPoint&) const = default;
};

// Mutates one activation row in place. In-place editing makes the intervention
// shape-preserving by construction. Must be deterministic given its captured
// parameters.
using InterventionFn = std::function<void(HookPoint, std::span<float>)>;

struct Intervention {
    HookPoint point;
    InterventionFn fn;
};

// Hidden states captured at one hook point: one row per token position, in
// position order.
struct ActivationBatch {
    int layer = 0;
    HookSite site = HookSite::residual_post;
    int dim = 0;
    std::vector<float> rows;  // row-major, n_rows x dim
    LanguageId language;

    std::size_t n_rows() const { return dim ? rows.size() / static_cast<std::size_t>(dim) : 0; }
    std::span<const float> row(std::size_t i) const {
        return {rows.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    void push_row(std::span<const float> r) { rows.insert(rows.end(), r.begin(), r.end()); }
};

struct DecodingSpec {
    int max_new_tokens = 64;
    bool greedy = true;           // sampling is available but tests rely on greedy
    double temperature = 1.0;
    std::uint64_t seed = 0;
    TokenId eos_token = -1;       // -1: no end-of-sequence token
};

// Read/write access to a transformer's internals at (layer, site) points during
// forward passes and generation. Interventions are applied to every token
// position processed (prompt prefill and each decoded position), and capturing
// at an intervened point observes the post-intervention value.
class HookedModel {
public:
    virtual ~HookedModel() = default;

    const std::string& model_id() const { return model_id_; }
    int n_layers() const { return n_layers_; }
    int hidden_dim() const { return hidden_dim_; }
    int mlp_dim() const { return mlp_dim_; }
    std::int32_t vocab_size() const { return vocab_size_; }
    int site_dim(HookSite s) const { return s == HookSite::residual_post ? hidden_dim_ : mlp_dim_; }

    bool supports(HookSite s) const { return capabilities_.count(s) > 0; }
    void require(HookSite s, const std::string& needed_by) const;

    void validate_hook(const HookPoint& p) const;
    void validate_tokens(std::span<const TokenId> tokens) const;

    virtual std::map<HookPoint, ActivationBatch> forward_capture(
        std::span<const TokenId> tokens, const std::vector<HookPoint>& capture,
        const std::vector<Intervention>& interventions = {}) const = 0;

    virtual std::vector<TokenId> generate(std::span<const TokenId> prompt,
                                          const std::vector<Intervention>& interventions,
                                          const DecodingSpec& decoding) const = 0;

    // A generate/forward call owns all of its scratch state; handles are safe to
    // clone for parallel workers.
    virtual std::unique_ptr<HookedModel> clone() const = 0;

protected:
    std::string model_id_;
    int n_layers_ = 0;
    int hidden_dim_ = 0;
    int mlp_dim_ = 0;
    std::int32_t vocab_size_ = 0;
    std::set<HookSite> capabilities_ = {HookSite::residual_post, HookSite::mlp_activation};
};

// --- external adapter contract ----------------------------------------------

// Names a runtime-provided model implementation. The factory registered under
// `name` receives the descriptor and returns a handle that behaves exactly like
// the built-in toy model to every other module.
struct AdapterDescriptor {
    std::string name;
    std::map<std::string, std::string> params;
};

using AdapterFactory = std::function<std::unique_ptr<HookedModel>(const AdapterDescriptor&)>;

void register_adapter(const std::string& name, AdapterFactory factory);
std::unique_ptr<HookedModel> attach_external_adapter(const AdapterDescriptor& spec);

}  // namespace steerbench
