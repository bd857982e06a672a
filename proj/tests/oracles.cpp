#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <list>

#include "hipprune/rope_policy.hpp"

namespace oracle {

using hipprune::AttentionWorkload;
using hipprune::DenseMatrix;

std::vector<DenseMatrix> naive_attention(const AttentionWorkload& workload, std::size_t layer) {
    const std::size_t t_q = workload.seq_len_q;
    const std::size_t offset = workload.seq_len_kv - t_q;
    const std::size_t d = workload.head_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<DenseMatrix> out;
    for (std::size_t h = 0; h < workload.num_heads; ++h) {
        const DenseMatrix& q = workload.q(layer, h);
        const DenseMatrix& k = workload.k(layer, h);
        const DenseMatrix& v = workload.v(layer, h);
        DenseMatrix o(t_q, d);
        for (std::size_t r = 0; r < t_q; ++r) {
            const std::size_t visible = offset + r + 1;
            std::vector<double> logits(visible);
            double max_logit = -1e300;
            for (std::size_t j = 0; j < visible; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    dot += static_cast<double>(q.at(r, c)) * static_cast<double>(k.at(j, c));
                }
                logits[j] = dot * scale;
                max_logit = std::max(max_logit, logits[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < visible; ++j) {
                logits[j] = std::exp(logits[j] - max_logit);
                denom += logits[j];
            }
            for (std::size_t j = 0; j < visible; ++j) {
                const double w = logits[j] / denom;
                for (std::size_t c = 0; c < d; ++c) {
                    o.at(r, c) += static_cast<float>(w * static_cast<double>(v.at(j, c)));
                }
            }
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::size_t brute_chunk_top(const DenseMatrix& qblock, const std::vector<std::size_t>& chunk,
                            const DenseMatrix& keys, const hipprune::StageContext& ctx,
                            std::size_t chunk_index, std::size_t chunk_count) {
    DenseMatrix q = qblock;
    if (ctx.policy->extension_enabled) {
        for (std::size_t t = 0; t < q.rows; ++t) {
            hipprune::PositionContext pc;
            pc.query_position = ctx.query_start_position + t;
            pc.stream_tokens = ctx.stream_tokens;
            pc.chunk_count = chunk_count;
            hipprune::apply_rope_inplace(
                {q.row(t), q.cols},
                hipprune::query_position(*ctx.policy, ctx.layer, pc), *ctx.rope);
        }
    }
    std::size_t best = chunk.front();
    float best_score = -std::numeric_limits<float>::infinity();
    for (std::size_t idx : chunk) {
        std::vector<float> key(keys.row(idx), keys.row(idx) + keys.cols);
        if (ctx.policy->extension_enabled) {
            hipprune::PositionContext pc;
            pc.branch = 2;
            pc.chunk_index = chunk_index;
            pc.stream_tokens = ctx.stream_tokens;
            pc.chunk_count = chunk_count;
            hipprune::apply_rope_inplace(
                key, hipprune::key_position(*ctx.policy, ctx.layer, pc), *ctx.rope);
        }
        float score = -std::numeric_limits<float>::infinity();
        for (std::size_t t = 0; t < q.rows; ++t) {
            float dot = 0.0f;
            for (std::size_t c = 0; c < q.cols; ++c) dot += q.at(t, c) * key[c];
            score = std::max(score, dot);
        }
        if (score > best_score) {
            best_score = score;
            best = idx;
        }
    }
    return best;
}

std::vector<std::vector<std::uint64_t>> reference_lru(const std::vector<std::uint64_t>& trace,
                                                      std::size_t capacity) {
    std::vector<std::vector<std::uint64_t>> history;
    std::list<std::uint64_t> resident;  // front = most recent
    for (std::uint64_t page : trace) {
        const auto it = std::find(resident.begin(), resident.end(), page);
        if (it != resident.end()) {
            resident.erase(it);
        } else if (resident.size() == capacity) {
            resident.pop_back();
        }
        resident.push_front(page);
        history.emplace_back(resident.begin(), resident.end());
    }
    return history;
}

SelectRepTrace reference_descent(const std::function<float(int, std::size_t)>& sigma,
                                 const std::vector<std::size_t>& chunk) {
    SelectRepTrace trace;
    const std::size_t n = chunk.size();
    if (n == 1) {
        trace.result = chunk[0];
        return trace;
    }
    std::size_t iters = 0;
    for (std::size_t v = 1; v < n; v <<= 1) ++iters;
    std::size_t a = 1;
    std::size_t b = n;
    for (std::size_t it = 0; it < iters && a < b; ++it) {
        const std::size_t mid = (a + b + 1) / 2;
        trace.reads.push_back(chunk[a - 1]);
        trace.reads.push_back(chunk[mid - 1]);
        const float s1 = sigma(1, a - 1);
        const float s2 = sigma(2, mid - 1);
        if (s2 > s1) {
            a = mid;
        } else {
            b = mid - 1;
        }
    }
    trace.result = chunk[a - 1];
    return trace;
}

}  // namespace oracle
