#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hipprune/key_source.hpp"
#include "hipprune/rope_policy.hpp"
#include "hipprune/tensor.hpp"
#include "hipprune/workload.hpp"

namespace hipprune {

// One pruning stage S = (b_q, l_c, k).
struct StageConfig {
    std::size_t query_block = 64;  // b_q
    std::size_t chunk_size = 0;    // l_c
    std::size_t keep = 0;          // k, a positive multiple of l_c

    void validate() const;
};

struct PruningPlan {
    std::vector<StageConfig> stages;
    std::size_t sink_tokens = 256;
    std::size_t stream_tokens = 1024;
    std::vector<std::size_t> refresh_intervals;  // one per stage

    void validate() const;
};

struct ChunkPartition {
    std::vector<std::vector<std::size_t>> chunks;
};

// Contiguous chunks of chunk_size indices; the last chunk may be short.
ChunkPartition partition_chunks(std::span<const std::size_t> indices, std::size_t chunk_size);

// Per-query-block sorted key index lists. Middle indices only: sink tokens and
// the streaming suffix are appended at attention time. query_offset is the
// absolute position of query row 0 (T_kv - T_q).
struct SparseBlockMask {
    std::size_t block_size = 0;
    std::size_t sink_tokens = 0;
    std::size_t stream_tokens = 0;
    std::size_t query_offset = 0;
    std::vector<std::vector<std::size_t>> indices;

    std::size_t num_blocks() const { return indices.size(); }
};

// Shared context for one stage invocation. `layer` is 1-based: the default
// policy cutoff of 3 makes layers 1..3 chunk-indexed and later layers relative.
struct StageContext {
    const RopePolicySet* policy = nullptr;
    const RopeTable* rope = nullptr;
    std::size_t layer = 1;
    std::size_t stream_tokens = 0;
    std::size_t query_start_position = 0;  // original position of qblock row 0
};

// Hierarchical top-1 representative selection over one chunk. Reads at most
// two keys per descent iteration; ties take the left branch.
std::size_t select_rep(const DenseMatrix& qblock, std::span<const std::size_t> chunk,
                       KeySource& keys, std::size_t head, const StageContext& ctx,
                       std::size_t chunk_index, std::size_t chunk_count);

// One pruning stage: chunk the candidate indices, score each chunk through its
// per-head representative, keep the top k/l_c chunks (ties to the lower chunk
// index), and return the survivors in original sequence order. Identity when
// the input already fits the budget.
std::vector<std::size_t> run_pruning_stage(const StageConfig& stage,
                                           std::span<const std::size_t> indices,
                                           std::span<const DenseMatrix> qblocks,
                                           KeySource& keys, const StageContext& ctx);

// Per-stage output for the final query block; seeds the decode stage caches.
struct StageTrace {
    std::vector<std::vector<std::size_t>> last_block_outputs;  // one list per stage
};

// Full multi-stage context pruning for one layer (0-based workload index).
// When `keys` is null, reads go straight to the workload and query blocks may
// be processed on up to `num_threads` workers; with an instrumented source the
// walk is sequential so access recording stays ordered.
SparseBlockMask build_mask(const PruningPlan& plan, const AttentionWorkload& workload,
                           std::size_t layer, const RopePolicySet& policy, const RopeTable& rope,
                           KeySource* keys = nullptr, StageTrace* trace = nullptr,
                           std::size_t num_threads = 1);

}  // namespace hipprune
