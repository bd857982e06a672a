#include "hipprune/rope_policy.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace hipprune {

namespace {

RopePolicyId pruning_policy_for_layer(const RopePolicySet& policy, std::size_t layer) {
    return layer > policy.early_layer_cutoff ? policy.pruning_policy_late
                                             : policy.pruning_policy_early;
}

}  // namespace

std::size_t query_position(const RopePolicySet& policy, std::size_t layer,
                           const PositionContext& ctx) {
    const RopePolicyId id = pruning_policy_for_layer(policy, layer);
    switch (id) {
        case RopePolicyId::Relative:
            return ctx.stream_tokens + 1;
        case RopePolicyId::ChunkIndexed:
            return std::min(ctx.query_position, ctx.chunk_count + ctx.stream_tokens);
        case RopePolicyId::PlugIn:
            if (!policy.plugin) {
                throw std::logic_error("query_position: PlugIn policy without a registered hook");
            }
            return policy.plugin(true, layer, ctx);
        case RopePolicyId::Streaming:
            break;
    }
    throw std::logic_error("query_position: policy not applicable to pruning");
}

std::size_t key_position(const RopePolicySet& policy, std::size_t layer,
                         const PositionContext& ctx) {
    if (ctx.branch != 1 && ctx.branch != 2) {
        throw std::logic_error("key_position: branch must be 1 or 2");
    }
    const RopePolicyId id = pruning_policy_for_layer(policy, layer);
    switch (id) {
        case RopePolicyId::Relative:
            return static_cast<std::size_t>(ctx.branch - 1);
        case RopePolicyId::ChunkIndexed:
            return ctx.chunk_index;
        case RopePolicyId::PlugIn:
            if (!policy.plugin) {
                throw std::logic_error("key_position: PlugIn policy without a registered hook");
            }
            return policy.plugin(false, layer, ctx);
        case RopePolicyId::Streaming:
            break;
    }
    throw std::logic_error("key_position: policy not applicable to pruning");
}

std::vector<std::size_t> streaming_positions(std::span<const std::size_t> selected,
                                             std::size_t query_pos, std::size_t /*sink_tokens*/) {
    const std::size_t n = selected.size();
    if (n > query_pos + 1) {
        throw std::logic_error("streaming_positions: " + std::to_string(n) +
                               " selected tokens cannot fit below position " +
                               std::to_string(query_pos));
    }
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) {
        positions[i] = query_pos + 1 - n + i;
    }
    return positions;
}

}  // namespace hipprune
