#include "steerbench/hookedmodel.hpp"

#include <mutex>

namespace steerbench {

std::string site_name(HookSite s) {
    return s == HookSite::residual_post ? "residual_post" : "mlp_activation";
}

HookSite parse_site(const std::string& s) {
    if (s == "residual_post") return HookSite::residual_post;
    if (s == "mlp_activation") return HookSite::mlp_activation;
    throw ConfigError("unknown hook site: " + s);
}

void HookedModel::require(HookSite s, const std::string& needed_by) const {
    if (!supports(s))
        throw CapabilityError("model '" + model_id_ + "' does not expose " + site_name(s) +
                              ", required by " + needed_by);
}

void HookedModel::validate_hook(const HookPoint& p) const {
    if (p.layer < 0 || p.layer >= n_layers_)
        throw ConfigError("invalid hook point: layer " + std::to_string(p.layer) +
                          " outside [0, " + std::to_string(n_layers_) + ")");
    require(p.site, "hook point");
}

void HookedModel::validate_tokens(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw DataError("token sequence is empty");
    for (TokenId t : tokens)
        if (t < 0 || t >= vocab_size_)
            throw DataError("token id " + std::to_string(t) + " out of vocabulary (size " +
                            std::to_string(vocab_size_) + ")");
}

namespace {

std::map<std::string, AdapterFactory>& adapter_registry() {
    static std::map<std::string, AdapterFactory> reg;
    return reg;
}

std::mutex& adapter_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

void register_adapter(const std::string& name, AdapterFactory factory) {
    std::lock_guard lock(adapter_mutex());
    adapter_registry()[name] = std::move(factory);
}

std::unique_ptr<HookedModel> attach_external_adapter(const AdapterDescriptor& spec) {
    if (spec.name.empty()) throw ConfigError("adapter descriptor has no name");
    AdapterFactory factory;
    {
        std::lock_guard lock(adapter_mutex());
        auto it = adapter_registry().find(spec.name);
        if (it == adapter_registry().end())
            throw ConfigError("no adapter registered under '" + spec.name + "'");
        factory = it->second;
    }
    auto model = factory(spec);
    if (!model) throw ConfigError("adapter factory for '" + spec.name + "' returned nothing");
    return model;
}

}  // namespace steerbench
