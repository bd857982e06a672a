#pragma once

#include <cstddef>
#include <vector>

#include "hipprune/kv_store.hpp"
#include "hipprune/pruning.hpp"
#include "hipprune/rope_policy.hpp"
#include "hipprune/sparse_attention.hpp"
#include "hipprune/workload.hpp"

namespace hipprune {

struct StoreConfig {
    std::size_t page_size = 64;
    std::size_t mask_capacity = 0;  // pages
    std::size_t sa_capacity = 0;
};

// Per-layer, per-head q/k/v rows for one new token.
struct TokenInput {
    std::vector<std::vector<std::vector<float>>> q;  // [layer][head][dim]
    std::vector<std::vector<std::vector<float>>> k;
    std::vector<std::vector<std::vector<float>>> v;
};

// Prefix of `full`: keys/values are the first kv_len rows, queries the q_len
// rows ending at kv_len.
AttentionWorkload truncate_workload(const AttentionWorkload& full, std::size_t kv_len,
                                    std::size_t q_len);

// q/k/v rows of one token position sliced out of a full workload.
TokenInput token_input_at(const AttentionWorkload& full, std::size_t token_index);

struct StepTelemetry {
    std::size_t step = 0;
    std::vector<bool> refreshed;        // per stage
    std::vector<double> stage_latency;  // per stage, summed over layers
    double bsa_latency = 0.0;
    std::uint64_t mask_hits = 0;
    std::uint64_t mask_accesses = 0;
    std::uint64_t sa_hits = 0;
    std::uint64_t sa_accesses = 0;
    std::vector<std::size_t> mask_sizes;  // per stage, last layer

    double total_latency() const;
};

struct StepResult {
    // [layer][head] output row for the new token
    std::vector<std::vector<std::vector<float>>> output;
    StepTelemetry telemetry;
};

struct PrefillResult {
    std::vector<AttentionOutput> outputs;  // per layer
    std::vector<SparseBlockMask> masks;
};

// Flag i is true iff counter i is zero (the stage refreshes this step).
std::vector<bool> refresh_due(const std::vector<std::size_t>& counters, const PruningPlan& plan);

// Stage-cached decoding: per-stage modular refresh counters shared across
// layers, cached per-(layer, stage) index lists between refreshes, single-token
// query blocks, and one store commit (with eviction) per step.
class DecodeEngine {
   public:
    DecodeEngine(AttentionWorkload workload, PruningPlan plan, RopePolicySet policy,
                 const RopeTable& rope, StoreConfig store_config, CostModel cost);

    PrefillResult prefill();
    StepResult step(const TokenInput& token);

    // Stages marked frozen never refresh; they keep serving their prefill-time
    // index lists (the cached-stages scenarios of the simulator).
    void set_frozen_stages(std::vector<bool> frozen);

    const AttentionWorkload& workload() const { return workload_; }
    TieredKvStore& store() { return store_; }
    const TieredKvStore& store() const { return store_; }
    const CostModel& cost() const { return cost_; }
    std::size_t steps_taken() const { return step_index_; }
    const std::vector<std::size_t>& counters() const { return counters_; }
    const std::vector<std::size_t>& stage_cache(std::size_t layer, std::size_t stage) const {
        return caches_[layer][stage];
    }
    // Step index at which the cached list was computed (0 = prefill).
    std::size_t last_refresh(std::size_t layer, std::size_t stage) const {
        return last_refresh_[layer][stage];
    }

   private:
    std::vector<std::size_t> run_decode_stage(std::size_t layer, std::size_t stage,
                                              std::span<const std::size_t> input,
                                              std::span<const std::vector<float>> q_rows,
                                              KvView& view);

    AttentionWorkload workload_;
    PruningPlan plan_;
    RopePolicySet policy_;
    const RopeTable* rope_;
    TieredKvStore store_;
    CostModel cost_;
    std::vector<std::size_t> counters_;
    std::vector<bool> frozen_;
    std::vector<std::vector<std::vector<std::size_t>>> caches_;  // [layer][stage]
    std::vector<std::vector<std::size_t>> last_refresh_;
    bool prefilled_ = false;
    std::size_t step_index_ = 0;
};

}  // namespace hipprune
