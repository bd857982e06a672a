#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hipprune/key_source.hpp"
#include "hipprune/pruning.hpp"
#include "hipprune/rope_policy.hpp"
#include "hipprune/tensor.hpp"
#include "hipprune/workload.hpp"

namespace hipprune {

// One T_q x d matrix per head.
struct AttentionOutput {
    std::vector<DenseMatrix> heads;

    bool operator==(const AttentionOutput&) const = default;
};

struct RecallReport {
    std::vector<double> per_entry;  // one recall per (block, head)
    double mean = 0.0;
    std::size_t budget = 0;
};

// Exact causal softmax attention, scale 1/sqrt(d), row-max subtraction,
// ascending-index f32 accumulation.
AttentionOutput dense_attention(const AttentionWorkload& workload, std::size_t layer);

// Attention restricted per query row to sink tokens, the block's middle
// indices, and the streaming suffix, intersected with causality at row
// granularity. With extension enabled the selected keys are repositioned
// contiguously up to the query position; disabled means raw dot products.
// All key/value rows go through `kv`, so a paged view sees every access.
AttentionOutput block_sparse_attention(const AttentionWorkload& workload, std::size_t layer,
                                       const SparseBlockMask& mask, const RopePolicySet& policy,
                                       const RopeTable& rope, KeySource& kv);

// One query row over an explicit selected index list. Shared by the prefill
// BSA path and the decode loop so both produce identical floats.
std::vector<float> attention_row(std::span<const float> q_row,
                                 std::span<const std::size_t> selected,
                                 std::size_t query_position, bool extension_enabled,
                                 const RopeTable& rope, KeySource& kv, std::size_t head);

// Per-row selected middle+sink+stream index list, exactly what
// block_sparse_attention attends to for that row. Exposed for recall reports.
std::vector<std::size_t> selected_indices(const SparseBlockMask& mask, std::size_t row);

// Indices of the k largest q . k_j, sorted by score descending, ties to the
// lower index.
std::vector<std::size_t> exact_topk(std::span<const float> query, const DenseMatrix& keys,
                                    std::size_t k);

// Attention mass sum_{j in selected} softmax(q . K / sqrt(d))_j.
double attention_recall(std::span<const std::size_t> selected, std::span<const float> query,
                        const DenseMatrix& keys);

struct ChunkSparsity {
    std::vector<std::size_t> chunk_counts;  // exact top-k tokens per chunk
    double empty_fraction = 0.0;
};

ChunkSparsity chunk_sparsity_histogram(std::span<const float> query, const DenseMatrix& keys,
                                       std::size_t k, std::size_t chunk_size);

}  // namespace hipprune
