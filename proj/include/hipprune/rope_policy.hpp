#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hipprune {

enum class RopePolicyId { ChunkIndexed, Relative, Streaming, PlugIn };

struct PositionContext {
    std::size_t query_position = 0;  // original position of the query token
    std::size_t chunk_index = 0;     // chunk the key comes from
    int branch = 1;                  // 1 or 2, during hierarchical selection
    std::size_t stream_tokens = 0;
    std::size_t chunk_count = 0;
};

// Position assignment for queries and keys in each phase. Layers are 1-based;
// layers above early_layer_cutoff use the relative policy during pruning.
// With extension_enabled == false all repositioning is bypassed and attention
// runs on raw (unrotated) vectors.
struct RopePolicySet {
    RopePolicyId pruning_policy_early = RopePolicyId::ChunkIndexed;
    RopePolicyId pruning_policy_late = RopePolicyId::Relative;
    std::size_t early_layer_cutoff = 3;
    RopePolicyId bsa_policy = RopePolicyId::Streaming;
    bool extension_enabled = true;

    // Hook for externally defined policies (id PlugIn). Receives
    // (is_query, layer, ctx) and must return a position.
    std::function<std::size_t(bool, std::size_t, const PositionContext&)> plugin;
};

std::size_t query_position(const RopePolicySet& policy, std::size_t layer,
                           const PositionContext& ctx);
std::size_t key_position(const RopePolicySet& policy, std::size_t layer,
                         const PositionContext& ctx);

// StreamingLLM-style repositioning for block sparse attention: selected keys
// get sequential positions ending at query_pos, so the most recent selected
// token shares the query's position ID.
std::vector<std::size_t> streaming_positions(std::span<const std::size_t> selected,
                                             std::size_t query_pos, std::size_t sink_tokens);

}  // namespace hipprune
