#include "hipprune/decode.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "hipprune/errors.hpp"

namespace hipprune {

namespace {

void commit_rolling(TieredKvStore& store, BankId bank, std::span<const std::uint64_t> pages) {
    const std::size_t cap = store.capacity(bank);
    if (cap == 0) return;  // zero-capacity bank: everything stays on the host
    for (std::size_t start = 0; start < pages.size(); start += cap) {
        const std::size_t end = std::min(pages.size(), start + cap);
        store.commit(bank, pages.subspan(start, end - start));
    }
}

double phase_latency(const KvView& view, const CostModel& cost) {
    const std::uint64_t hits = view.phase_hits();
    const std::uint64_t misses = view.phase_accesses() - hits;
    return static_cast<double>(hits) * cost.device_access_cost +
           static_cast<double>(misses) * cost.host_access_cost;
}

}  // namespace

AttentionWorkload truncate_workload(const AttentionWorkload& full, std::size_t kv_len,
                                    std::size_t q_len) {
    if (full.seq_len_q != full.seq_len_kv) {
        throw std::invalid_argument("truncate_workload: needs one query per context position");
    }
    if (kv_len == 0 || kv_len > full.seq_len_kv || q_len == 0 || q_len > kv_len) {
        throw std::invalid_argument("truncate_workload: lengths out of range");
    }
    AttentionWorkload out;
    out.num_heads = full.num_heads;
    out.num_layers = full.num_layers;
    out.seq_len_q = q_len;
    out.seq_len_kv = kv_len;
    out.head_dim = full.head_dim;
    out.queries.resize(full.num_layers);
    out.keys.resize(full.num_layers);
    out.values.resize(full.num_layers);
    const std::size_t q_start = kv_len - q_len;
    for (std::size_t l = 0; l < full.num_layers; ++l) {
        for (std::size_t h = 0; h < full.num_heads; ++h) {
            DenseMatrix q(q_len, full.head_dim);
            std::copy(full.q(l, h).row(q_start), full.q(l, h).row(q_start) + q.data.size(),
                      q.data.begin());
            DenseMatrix k(kv_len, full.head_dim);
            std::copy(full.k(l, h).data.begin(), full.k(l, h).data.begin() + k.data.size(),
                      k.data.begin());
            DenseMatrix v(kv_len, full.head_dim);
            std::copy(full.v(l, h).data.begin(), full.v(l, h).data.begin() + v.data.size(),
                      v.data.begin());
            out.queries[l].push_back(std::move(q));
            out.keys[l].push_back(std::move(k));
            out.values[l].push_back(std::move(v));
        }
    }
    return out;
}

TokenInput token_input_at(const AttentionWorkload& full, std::size_t token_index) {
    if (full.seq_len_q != full.seq_len_kv || token_index >= full.seq_len_kv) {
        throw std::invalid_argument("token_input_at: index outside the workload");
    }
    TokenInput out;
    out.q.resize(full.num_layers);
    out.k.resize(full.num_layers);
    out.v.resize(full.num_layers);
    for (std::size_t l = 0; l < full.num_layers; ++l) {
        for (std::size_t h = 0; h < full.num_heads; ++h) {
            const auto qs = full.q(l, h).row_span(token_index);
            const auto ks = full.k(l, h).row_span(token_index);
            const auto vs = full.v(l, h).row_span(token_index);
            out.q[l].emplace_back(qs.begin(), qs.end());
            out.k[l].emplace_back(ks.begin(), ks.end());
            out.v[l].emplace_back(vs.begin(), vs.end());
        }
    }
    return out;
}

double StepTelemetry::total_latency() const {
    double total = bsa_latency;
    for (double s : stage_latency) total += s;
    return total;
}

std::vector<bool> refresh_due(const std::vector<std::size_t>& counters, const PruningPlan& plan) {
    if (counters.size() != plan.stages.size()) {
        throw std::invalid_argument("refresh_due: counter count != stage count");
    }
    std::vector<bool> flags(counters.size());
    for (std::size_t i = 0; i < counters.size(); ++i) flags[i] = counters[i] == 0;
    return flags;
}

DecodeEngine::DecodeEngine(AttentionWorkload workload, PruningPlan plan, RopePolicySet policy,
                           const RopeTable& rope, StoreConfig store_config, CostModel cost)
    : workload_(std::move(workload)),
      plan_(std::move(plan)),
      policy_(policy),
      rope_(&rope),
      store_(workload_, store_config.page_size, store_config.mask_capacity,
             store_config.sa_capacity),
      cost_(cost) {
    plan_.validate();
    cost_.validate();
    workload_.validate();
    if (plan_.refresh_intervals.empty()) {
        plan_.refresh_intervals.assign(plan_.stages.size(), 1);
    }
    const std::size_t n = plan_.stages.size();
    counters_.assign(n, 0);
    frozen_.assign(n, false);
    caches_.assign(workload_.num_layers, std::vector<std::vector<std::size_t>>(n));
    last_refresh_.assign(workload_.num_layers, std::vector<std::size_t>(n, 0));
}

void DecodeEngine::set_frozen_stages(std::vector<bool> frozen) {
    if (frozen.size() != plan_.stages.size()) {
        throw std::invalid_argument("set_frozen_stages: flag count != stage count");
    }
    frozen_ = std::move(frozen);
}

PrefillResult DecodeEngine::prefill() {
    if (prefilled_) {
        throw ContractViolation("prefill: engine already prefilled");
    }
    PrefillResult result;
    for (std::size_t l = 0; l < workload_.num_layers; ++l) {
        KvView mask_view(store_, BankId::Mask, l);
        mask_view.begin_phase();
        StageTrace trace;
        SparseBlockMask mask = build_mask(plan_, workload_, l, policy_, *rope_, &mask_view, &trace);
        commit_rolling(store_, BankId::Mask, mask_view.drain_missing());

        KvView sa_view(store_, BankId::Sa, l);
        sa_view.begin_phase();
        result.outputs.push_back(
            block_sparse_attention(workload_, l, mask, policy_, *rope_, sa_view));
        commit_rolling(store_, BankId::Sa, sa_view.drain_missing());

        caches_[l] = trace.last_block_outputs;
        result.masks.push_back(std::move(mask));
    }
    store_.check_consistency();
    prefilled_ = true;
    return result;
}

std::vector<std::size_t> DecodeEngine::run_decode_stage(std::size_t layer, std::size_t stage,
                                                        std::span<const std::size_t> input,
                                                        std::span<const std::vector<float>> q_rows,
                                                        KvView& view) {
    std::vector<DenseMatrix> qblocks;
    qblocks.reserve(q_rows.size());
    for (const auto& row : q_rows) {
        DenseMatrix q(1, workload_.head_dim);
        std::copy(row.begin(), row.end(), q.data.begin());
        qblocks.push_back(std::move(q));
    }
    StageContext ctx;
    ctx.policy = &policy_;
    ctx.rope = rope_;
    ctx.layer = layer + 1;
    ctx.stream_tokens = plan_.stream_tokens;
    ctx.query_start_position = workload_.seq_len_kv - 1;
    return run_pruning_stage(plan_.stages[stage], input, qblocks, view, ctx);
}

StepResult DecodeEngine::step(const TokenInput& token) {
    if (!prefilled_) {
        throw ContractViolation("step: engine not prefilled");
    }
    const std::size_t layers = workload_.num_layers;
    const std::size_t heads = workload_.num_heads;
    const std::size_t dim = workload_.head_dim;
    if (token.q.size() != layers || token.k.size() != layers || token.v.size() != layers) {
        throw std::invalid_argument("step: token layer count mismatch");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (token.q[l].size() != heads || token.k[l].size() != heads ||
            token.v[l].size() != heads) {
            throw std::invalid_argument("step: token head count mismatch");
        }
        for (std::size_t h = 0; h < heads; ++h) {
            if (token.q[l][h].size() != dim || token.k[l][h].size() != dim ||
                token.v[l][h].size() != dim) {
                throw std::invalid_argument("step: token row width mismatch");
            }
        }
    }

    for (std::size_t l = 0; l < layers; ++l) {
        for (std::size_t h = 0; h < heads; ++h) {
            workload_.keys[l][h].append_row(token.k[l][h]);
            workload_.values[l][h].append_row(token.v[l][h]);
        }
    }
    workload_.seq_len_kv += 1;
    const std::size_t pos = workload_.seq_len_kv - 1;
    const std::size_t num_stages = plan_.stages.size();

    std::vector<bool> flags = refresh_due(counters_, plan_);
    for (std::size_t i = 0; i < num_stages; ++i) {
        if (frozen_[i]) flags[i] = false;
    }

    StepResult result;
    result.telemetry.refreshed = flags;
    result.telemetry.stage_latency.assign(num_stages, 0.0);
    result.output.assign(layers, std::vector<std::vector<float>>(heads));

    std::vector<std::uint64_t> mask_missing;
    std::vector<std::uint64_t> sa_missing;

    for (std::size_t l = 0; l < layers; ++l) {
        KvView mask_view(store_, BankId::Mask, l);
        for (std::size_t i = 0; i < num_stages; ++i) {
            if (!flags[i]) continue;
            mask_view.begin_phase();
            std::vector<std::size_t> initial;
            std::span<const std::size_t> input;
            if (i == 0) {
                const std::size_t upper = workload_.seq_len_kv > plan_.stream_tokens
                                              ? workload_.seq_len_kv - plan_.stream_tokens
                                              : 0;
                if (upper > plan_.sink_tokens) {
                    initial.resize(upper - plan_.sink_tokens);
                    std::iota(initial.begin(), initial.end(), plan_.sink_tokens);
                }
                input = initial;
            } else {
                input = caches_[l][i - 1];
            }
            caches_[l][i] = run_decode_stage(l, i, input, token.q[l], mask_view);
            last_refresh_[l][i] = step_index_ + 1;
            result.telemetry.stage_latency[i] += phase_latency(mask_view, cost_);
            result.telemetry.mask_hits += mask_view.phase_hits();
            result.telemetry.mask_accesses += mask_view.phase_accesses();
        }
        {
            const auto missing = mask_view.drain_missing();
            mask_missing.insert(mask_missing.end(), missing.begin(), missing.end());
        }

        KvView sa_view(store_, BankId::Sa, l);
        sa_view.begin_phase();
        SparseBlockMask mask;
        mask.block_size = 1;
        mask.sink_tokens = plan_.sink_tokens;
        mask.stream_tokens = plan_.stream_tokens;
        mask.query_offset = pos;
        mask.indices = {caches_[l][num_stages - 1]};
        const std::vector<std::size_t> selected = selected_indices(mask, 0);
        for (std::size_t h = 0; h < heads; ++h) {
            result.output[l][h] = attention_row(token.q[l][h], selected, pos,
                                                policy_.extension_enabled, *rope_, sa_view, h);
        }
        result.telemetry.bsa_latency += phase_latency(sa_view, cost_);
        result.telemetry.sa_hits += sa_view.phase_hits();
        result.telemetry.sa_accesses += sa_view.phase_accesses();
        const auto missing = sa_view.drain_missing();
        sa_missing.insert(sa_missing.end(), missing.begin(), missing.end());
    }

    for (std::size_t i = 0; i < num_stages; ++i) {
        result.telemetry.mask_sizes.push_back(caches_[layers - 1][i].size());
    }

    commit_rolling(store_, BankId::Mask, mask_missing);
    commit_rolling(store_, BankId::Sa, sa_missing);
    store_.check_consistency();

    for (std::size_t i = 0; i < num_stages; ++i) {
        counters_[i] = (counters_[i] + 1) % plan_.refresh_intervals[i];
    }
    ++step_index_;
    result.telemetry.step = step_index_;
    return result;
}

}  // namespace hipprune
