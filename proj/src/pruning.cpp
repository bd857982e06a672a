#include "hipprune/pruning.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "hipprune/errors.hpp"

namespace hipprune {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t ceil_log2(std::size_t n) {
    std::size_t bits = 0;
    std::size_t v = 1;
    while (v < n) {
        v <<= 1;
        ++bits;
    }
    return bits;
}

void check_sorted_unique(std::span<const std::size_t> indices, const char* where) {
    for (std::size_t i = 1; i < indices.size(); ++i) {
        if (indices[i] <= indices[i - 1]) {
            throw ContractViolation(std::string(where) +
                                    ": indices must be sorted and duplicate-free");
        }
    }
}

// Query rows rotated once per stage per head (Alg. 3 rotates the block up
// front; the position does not depend on the chunk).
DenseMatrix rotate_queries(const DenseMatrix& qblock, const StageContext& ctx,
                           std::size_t chunk_count) {
    if (!ctx.policy->extension_enabled) return qblock;
    DenseMatrix out = qblock;
    for (std::size_t t = 0; t < out.rows; ++t) {
        PositionContext pc;
        pc.query_position = ctx.query_start_position + t;
        pc.stream_tokens = ctx.stream_tokens;
        pc.chunk_count = chunk_count;
        const std::size_t pos = query_position(*ctx.policy, ctx.layer, pc);
        apply_rope_inplace({out.row(t), out.cols}, pos, *ctx.rope);
    }
    return out;
}

std::vector<float> rotate_key(std::span<const float> key, const StageContext& ctx, int branch,
                              std::size_t chunk_index, std::size_t chunk_count) {
    std::vector<float> out(key.begin(), key.end());
    if (ctx.policy->extension_enabled) {
        PositionContext pc;
        pc.branch = branch;
        pc.chunk_index = chunk_index;
        pc.stream_tokens = ctx.stream_tokens;
        pc.chunk_count = chunk_count;
        const std::size_t pos = key_position(*ctx.policy, ctx.layer, pc);
        apply_rope_inplace(out, pos, *ctx.rope);
    }
    return out;
}

std::size_t select_rep_rotated(const DenseMatrix& rotated_q, std::span<const std::size_t> chunk,
                               KeySource& keys, std::size_t head, const StageContext& ctx,
                               std::size_t chunk_index, std::size_t chunk_count) {
    const std::size_t n = chunk.size();
    if (n == 0) {
        throw ContractViolation("select_rep: empty chunk");
    }
    if (n == 1) return chunk[0];

    // 1-based inclusive range [first, last]; midpoint rounds half up.
    std::size_t first = 1;
    std::size_t last = n;
    const std::size_t iters = ceil_log2(n);
    for (std::size_t it = 0; it < iters && first < last; ++it) {
        const std::size_t mid = (first + last + 1) / 2;
        float sigma[2];
        const std::size_t reps[2] = {chunk[first - 1], chunk[mid - 1]};
        for (int j = 0; j < 2; ++j) {
            const std::vector<float> key =
                rotate_key(keys.key_row(head, reps[j]), ctx, j + 1, chunk_index, chunk_count);
            sigma[j] = block_scores(rotated_q, key);
        }
        if (sigma[1] > sigma[0]) {
            first = mid;  // right branch
        } else {
            last = mid - 1;  // left branch wins ties
        }
    }
    return chunk[first - 1];
}

}  // namespace

void StageConfig::validate() const {
    if (query_block == 0 || chunk_size == 0) {
        throw std::invalid_argument("StageConfig: b_q and l_c must be >= 1");
    }
    if (keep == 0 || keep % chunk_size != 0) {
        throw std::invalid_argument("StageConfig: k must be a positive multiple of l_c");
    }
}

void PruningPlan::validate() const {
    if (stages.empty()) {
        throw std::invalid_argument("PruningPlan: no stages");
    }
    if (!refresh_intervals.empty() && refresh_intervals.size() != stages.size()) {
        throw std::invalid_argument("PruningPlan: refresh_intervals length != stage count");
    }
    for (const auto& s : stages) s.validate();
    for (std::size_t i = 1; i < stages.size(); ++i) {
        if (stages[i].query_block > stages[i - 1].query_block ||
            stages[i - 1].query_block % stages[i].query_block != 0) {
            throw std::invalid_argument(
                "PruningPlan: successive b_q must be non-increasing and divisible");
        }
        if (stages[i].keep > stages[i - 1].keep) {
            throw std::invalid_argument("PruningPlan: k must be non-increasing across stages");
        }
    }
    for (std::size_t r : refresh_intervals) {
        if (r == 0) throw std::invalid_argument("PruningPlan: refresh interval must be >= 1");
    }
}

ChunkPartition partition_chunks(std::span<const std::size_t> indices, std::size_t chunk_size) {
    if (chunk_size == 0) {
        throw std::invalid_argument("partition_chunks: chunk_size must be >= 1");
    }
    ChunkPartition out;
    for (std::size_t start = 0; start < indices.size(); start += chunk_size) {
        const std::size_t end = std::min(indices.size(), start + chunk_size);
        out.chunks.emplace_back(indices.begin() + start, indices.begin() + end);
    }
    return out;
}

std::size_t select_rep(const DenseMatrix& qblock, std::span<const std::size_t> chunk,
                       KeySource& keys, std::size_t head, const StageContext& ctx,
                       std::size_t chunk_index, std::size_t chunk_count) {
    const DenseMatrix rotated = rotate_queries(qblock, ctx, chunk_count);
    return select_rep_rotated(rotated, chunk, keys, head, ctx, chunk_index, chunk_count);
}

std::vector<std::size_t> run_pruning_stage(const StageConfig& stage,
                                           std::span<const std::size_t> indices,
                                           std::span<const DenseMatrix> qblocks, KeySource& keys,
                                           const StageContext& ctx) {
    stage.validate();
    check_sorted_unique(indices, "run_pruning_stage");
    if (indices.size() <= stage.keep) {
        return {indices.begin(), indices.end()};
    }

    const ChunkPartition partition = partition_chunks(indices, stage.chunk_size);
    const std::size_t chunk_count = partition.chunks.size();
    const std::size_t keep_chunks = stage.keep / stage.chunk_size;
    if (chunk_count <= keep_chunks) {
        return {indices.begin(), indices.end()};
    }

    const std::size_t num_heads = qblocks.size();
    std::vector<DenseMatrix> rotated_q;
    rotated_q.reserve(num_heads);
    for (const auto& q : qblocks) rotated_q.push_back(rotate_queries(q, ctx, chunk_count));

    std::vector<float> scores(chunk_count);
    for (std::size_t j = 0; j < chunk_count; ++j) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t h = 0; h < num_heads; ++h) {
            const std::size_t rep = select_rep_rotated(rotated_q[h], partition.chunks[j], keys, h,
                                                       ctx, j, chunk_count);
            const std::vector<float> key = rotate_key(keys.key_row(h, rep), ctx, 2, j, chunk_count);
            best = std::max(best, block_scores(rotated_q[h], key));
        }
        scores[j] = best;
    }

    std::vector<std::size_t> order(chunk_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(keep_chunks);
    std::sort(order.begin(), order.end());

    std::vector<std::size_t> out;
    out.reserve(stage.keep);
    for (std::size_t j : order) {
        out.insert(out.end(), partition.chunks[j].begin(), partition.chunks[j].end());
    }
    return out;
}

SparseBlockMask build_mask(const PruningPlan& plan, const AttentionWorkload& workload,
                           std::size_t layer, const RopePolicySet& policy, const RopeTable& rope,
                           KeySource* keys, StageTrace* trace, std::size_t num_threads) {
    plan.validate();
    if (layer >= workload.num_layers) {
        throw std::out_of_range("build_mask: layer out of range");
    }
    const std::size_t t_q = workload.seq_len_q;
    const std::size_t t_kv = workload.seq_len_kv;
    if (t_q == 0 || t_q > t_kv) {
        throw std::invalid_argument("build_mask: workload query length inconsistent");
    }
    const std::size_t offset = t_kv - t_q;

    // Absolute end (exclusive) of query block m at this stage's block size; the
    // final partial block keeps its true last position.
    auto causal_end = [&](std::size_t bq, std::size_t m) {
        return offset + std::min((m + 1) * bq, t_q);
    };
    auto middle_upper = [&](std::size_t bq, std::size_t m) -> std::size_t {
        const std::size_t end = causal_end(bq, m);
        return end > plan.stream_tokens ? end - plan.stream_tokens : 0;
    };

    if (trace) trace->last_block_outputs.clear();

    const std::size_t bq1 = plan.stages.front().query_block;
    std::size_t num_blocks = ceil_div(t_q, bq1);
    std::vector<std::vector<std::size_t>> lists(num_blocks);
    for (std::size_t m = 0; m < num_blocks; ++m) {
        const std::size_t upper = middle_upper(bq1, m);
        if (upper > plan.sink_tokens) {
            lists[m].resize(upper - plan.sink_tokens);
            std::iota(lists[m].begin(), lists[m].end(), plan.sink_tokens);
        }
    }

    for (std::size_t si = 0; si < plan.stages.size(); ++si) {
        const StageConfig& stage = plan.stages[si];
        const std::size_t bq = stage.query_block;

        auto process_block = [&](std::size_t m, KeySource& ks) {
            const std::size_t row_begin = m * bq;
            const std::size_t row_end = std::min(t_q, row_begin + bq);
            std::vector<DenseMatrix> qblocks;
            qblocks.reserve(workload.num_heads);
            for (std::size_t h = 0; h < workload.num_heads; ++h) {
                const DenseMatrix& q = workload.q(layer, h);
                DenseMatrix block(row_end - row_begin, workload.head_dim);
                std::copy(q.row(row_begin), q.row(row_begin) + block.data.size(),
                          block.data.begin());
                qblocks.push_back(std::move(block));
            }
            StageContext ctx;
            ctx.policy = &policy;
            ctx.rope = &rope;
            ctx.layer = layer + 1;
            ctx.stream_tokens = plan.stream_tokens;
            ctx.query_start_position = offset + row_begin;
            lists[m] = run_pruning_stage(stage, lists[m], qblocks, ks, ctx);
        };

        if (keys != nullptr || num_threads <= 1 || num_blocks == 1) {
            DirectKeySource direct(workload, layer);
            KeySource& ks = keys != nullptr ? *keys : static_cast<KeySource&>(direct);
            for (std::size_t m = 0; m < num_blocks; ++m) process_block(m, ks);
        } else {
            const std::size_t workers = std::min(num_threads, num_blocks);
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w]() {
                    DirectKeySource direct(workload, layer);
                    for (std::size_t m = w; m < num_blocks; m += workers) {
                        process_block(m, direct);
                    }
                });
            }
            for (auto& t : pool) t.join();
        }

        if (trace) trace->last_block_outputs.push_back(lists[num_blocks - 1]);

        // Subdivide query blocks for the next stage; sub-blocks re-clamp the
        // inherited indices to their own causal middle region.
        if (si + 1 < plan.stages.size()) {
            const std::size_t bq_next = plan.stages[si + 1].query_block;
            if (bq_next != bq) {
                const std::size_t ratio = bq / bq_next;
                const std::size_t next_blocks = ceil_div(t_q, bq_next);
                std::vector<std::vector<std::size_t>> next_lists(next_blocks);
                for (std::size_t m2 = 0; m2 < next_blocks; ++m2) {
                    const auto& parent = lists[std::min(m2 / ratio, num_blocks - 1)];
                    const std::size_t upper = middle_upper(bq_next, m2);
                    for (std::size_t idx : parent) {
                        if (idx < upper) next_lists[m2].push_back(idx);
                    }
                }
                lists = std::move(next_lists);
                num_blocks = next_blocks;
            }
        }
    }

    SparseBlockMask mask;
    mask.block_size = plan.stages.back().query_block;
    mask.sink_tokens = plan.sink_tokens;
    mask.stream_tokens = plan.stream_tokens;
    mask.query_offset = offset;
    mask.indices = std::move(lists);
    return mask;
}

}  // namespace hipprune
