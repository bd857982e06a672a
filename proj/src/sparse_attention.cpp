#include "hipprune/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hipprune {

namespace {

// Softmax over `scores` in place (stable), then out_row += weights * values
// with ascending-index f32 accumulation.
void softmax_weighted_sum(std::vector<float>& scores, std::span<const std::size_t> selected,
                          KeySource& kv, std::size_t head, float* out_row, std::size_t dim) {
    float max_score = scores[0];
    for (float s : scores) max_score = std::max(max_score, s);
    float denom = 0.0f;
    for (float& s : scores) {
        s = std::exp(s - max_score);
        denom += s;
    }
    for (std::size_t j = 0; j < selected.size(); ++j) {
        const float w = scores[j] / denom;
        const std::span<const float> value = kv.value_row(head, selected[j]);
        for (std::size_t c = 0; c < dim; ++c) out_row[c] += w * value[c];
    }
}

}  // namespace

std::vector<float> attention_row(std::span<const float> q_row,
                                 std::span<const std::size_t> selected,
                                 std::size_t query_position, bool extension_enabled,
                                 const RopeTable& rope, KeySource& kv, std::size_t head) {
    const std::size_t dim = q_row.size();
    std::vector<float> out(dim, 0.0f);
    if (selected.empty()) {
        throw std::invalid_argument("attention_row: empty selected set");
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
    std::vector<float> scores(selected.size());
    if (extension_enabled) {
        const std::vector<std::size_t> positions =
            streaming_positions(selected, query_position, 0);
        const std::vector<float> q_rot = apply_rope(q_row, query_position, rope);
        for (std::size_t j = 0; j < selected.size(); ++j) {
            const std::vector<float> k_rot =
                apply_rope(kv.key_row(head, selected[j]), positions[j], rope);
            scores[j] = dot_f32(q_rot, k_rot) * scale;
        }
    } else {
        for (std::size_t j = 0; j < selected.size(); ++j) {
            scores[j] = dot_f32(q_row, kv.key_row(head, selected[j])) * scale;
        }
    }
    softmax_weighted_sum(scores, selected, kv, head, out.data(), dim);
    return out;
}

AttentionOutput dense_attention(const AttentionWorkload& workload, std::size_t layer) {
    if (layer >= workload.num_layers) {
        throw std::out_of_range("dense_attention: layer out of range");
    }
    const std::size_t t_q = workload.seq_len_q;
    const std::size_t offset = workload.seq_len_kv - t_q;
    const std::size_t dim = workload.head_dim;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dim));

    AttentionOutput out;
    out.heads.reserve(workload.num_heads);
    for (std::size_t h = 0; h < workload.num_heads; ++h) {
        const DenseMatrix& q = workload.q(layer, h);
        const DenseMatrix& k = workload.k(layer, h);
        DirectKeySource kv(workload, layer);
        DenseMatrix result(t_q, dim);
        std::vector<float> scores;
        std::vector<std::size_t> selected;
        for (std::size_t r = 0; r < t_q; ++r) {
            const std::size_t visible = offset + r + 1;
            scores.resize(visible);
            selected.resize(visible);
            std::iota(selected.begin(), selected.end(), std::size_t{0});
            for (std::size_t j = 0; j < visible; ++j) {
                scores[j] = dot_f32(q.row_span(r), k.row_span(j)) * scale;
            }
            softmax_weighted_sum(scores, selected, kv, h, result.row(r), dim);
        }
        out.heads.push_back(std::move(result));
    }
    return out;
}

std::vector<std::size_t> selected_indices(const SparseBlockMask& mask, std::size_t row) {
    const std::size_t block = row / mask.block_size;
    if (block >= mask.num_blocks()) {
        throw std::out_of_range("selected_indices: row outside the mask");
    }
    const std::size_t pos = mask.query_offset + row;
    const std::size_t sink_end = std::min(mask.sink_tokens, pos + 1);
    std::size_t stream_begin = pos + 1 > mask.stream_tokens ? pos + 1 - mask.stream_tokens : 0;
    stream_begin = std::max(stream_begin, sink_end);

    std::vector<std::size_t> selected;
    for (std::size_t j = 0; j < sink_end; ++j) selected.push_back(j);
    for (std::size_t idx : mask.indices[block]) {
        if (idx >= sink_end && idx < stream_begin) selected.push_back(idx);
    }
    for (std::size_t j = stream_begin; j <= pos; ++j) selected.push_back(j);
    return selected;
}

AttentionOutput block_sparse_attention(const AttentionWorkload& workload, std::size_t layer,
                                       const SparseBlockMask& mask, const RopePolicySet& policy,
                                       const RopeTable& rope, KeySource& kv) {
    if (layer >= workload.num_layers) {
        throw std::out_of_range("block_sparse_attention: layer out of range");
    }
    if (mask.block_size == 0 ||
        mask.num_blocks() != (workload.seq_len_q + mask.block_size - 1) / mask.block_size) {
        throw std::invalid_argument("block_sparse_attention: mask does not cover the queries");
    }
    if (policy.extension_enabled && policy.bsa_policy != RopePolicyId::Streaming) {
        throw std::invalid_argument("block_sparse_attention: unsupported BSA position policy");
    }
    const std::size_t t_q = workload.seq_len_q;
    const std::size_t dim = workload.head_dim;

    AttentionOutput out;
    out.heads.reserve(workload.num_heads);
    for (std::size_t h = 0; h < workload.num_heads; ++h) {
        const DenseMatrix& q = workload.q(layer, h);
        DenseMatrix result(t_q, dim);
        for (std::size_t r = 0; r < t_q; ++r) {
            const std::size_t pos = mask.query_offset + r;
            const std::vector<std::size_t> selected = selected_indices(mask, r);
            const std::vector<float> row = attention_row(q.row_span(r), selected, pos,
                                                         policy.extension_enabled, rope, kv, h);
            std::copy(row.begin(), row.end(), result.row(r));
        }
        out.heads.push_back(std::move(result));
    }
    return out;
}

std::vector<std::size_t> exact_topk(std::span<const float> query, const DenseMatrix& keys,
                                    std::size_t k) {
    if (k > keys.rows) {
        throw std::invalid_argument("exact_topk: k exceeds the key count");
    }
    std::vector<float> scores(keys.rows);
    for (std::size_t j = 0; j < keys.rows; ++j) scores[j] = dot_f32(query, keys.row_span(j));
    std::vector<std::size_t> order(keys.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(k);
    return order;
}

double attention_recall(std::span<const std::size_t> selected, std::span<const float> query,
                        const DenseMatrix& keys) {
    std::vector<bool> in_set(keys.rows, false);
    for (std::size_t idx : selected) {
        if (idx >= keys.rows) {
            throw std::out_of_range("attention_recall: selected index out of range");
        }
        in_set[idx] = true;
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(keys.cols));
    std::vector<float> scores(keys.rows);
    float max_score = -std::numeric_limits<float>::infinity();
    for (std::size_t j = 0; j < keys.rows; ++j) {
        scores[j] = dot_f32(query, keys.row_span(j)) * scale;
        max_score = std::max(max_score, scores[j]);
    }
    double total = 0.0;
    double captured = 0.0;
    for (std::size_t j = 0; j < keys.rows; ++j) {
        const double w = std::exp(static_cast<double>(scores[j]) - max_score);
        total += w;
        if (in_set[j]) captured += w;
    }
    return captured / total;
}

ChunkSparsity chunk_sparsity_histogram(std::span<const float> query, const DenseMatrix& keys,
                                       std::size_t k, std::size_t chunk_size) {
    if (chunk_size == 0 || chunk_size > keys.rows) {
        throw std::invalid_argument("chunk_sparsity_histogram: chunk size out of range");
    }
    const std::vector<std::size_t> top = exact_topk(query, keys, k);
    const std::size_t num_chunks = (keys.rows + chunk_size - 1) / chunk_size;
    ChunkSparsity out;
    out.chunk_counts.assign(num_chunks, 0);
    for (std::size_t idx : top) ++out.chunk_counts[idx / chunk_size];
    const std::size_t empty =
        static_cast<std::size_t>(std::count(out.chunk_counts.begin(), out.chunk_counts.end(), 0));
    out.empty_fraction = static_cast<double>(empty) / static_cast<double>(num_chunks);
    return out;
}

}  // namespace hipprune
