#include <doctest.h>

#include <algorithm>

#include "hipprune/decode.hpp"
#include "hipprune/errors.hpp"

using namespace hipprune;

namespace {

AttentionWorkload square_workload(std::size_t tokens, std::size_t heads = 2,
                                  std::size_t layers = 2, std::size_t dim = 8,
                                  std::uint64_t seed = 101) {
    SyntheticConfig cfg;
    cfg.num_heads = heads;
    cfg.num_layers = layers;
    cfg.seq_len_kv = tokens;
    cfg.seq_len_q = tokens;
    cfg.head_dim = dim;
    cfg.seed = seed;
    return generate_synthetic(cfg);
}

PruningPlan decode_plan() {
    PruningPlan plan;
    plan.stages = {{1, 4, 16}, {1, 2, 8}};
    plan.sink_tokens = 8;
    plan.stream_tokens = 16;
    plan.refresh_intervals = {1, 1};
    return plan;
}

}  // namespace

TEST_CASE("refresh_due flags zero counters") {
    PruningPlan plan = decode_plan();
    CHECK(refresh_due({0, 1}, plan) == std::vector<bool>{true, false});
    CHECK(refresh_due({0, 0}, plan) == std::vector<bool>{true, true});
    CHECK_THROWS_AS(refresh_due({0}, plan), std::invalid_argument);
}

TEST_CASE("workload slicing for decode") {
    const auto full = square_workload(32);
    const auto trunc = truncate_workload(full, 20, 1);
    CHECK(trunc.seq_len_kv == 20);
    CHECK(trunc.seq_len_q == 1);
    const auto q_row = trunc.q(1, 0).row_span(0);
    CHECK(std::equal(q_row.begin(), q_row.end(), full.q(1, 0).row_span(19).begin()));
    CHECK(std::equal(trunc.k(0, 1).data.begin(), trunc.k(0, 1).data.end(),
                     full.k(0, 1).data.begin()));
    CHECK_THROWS_AS(truncate_workload(full, 40, 1), std::invalid_argument);
    CHECK_THROWS_AS(truncate_workload(full, 20, 21), std::invalid_argument);

    const auto token = token_input_at(full, 20);
    CHECK(token.k[1][1] == std::vector<float>(full.k(1, 1).row_span(20).begin(),
                                              full.k(1, 1).row_span(20).end()));
    CHECK_THROWS_AS(token_input_at(full, 32), std::invalid_argument);
}

TEST_CASE("engine lifecycle contracts") {
    const auto full = square_workload(64);
    const RopeTable rope = build_rope_table(256, 8);
    RopePolicySet policy;
    policy.extension_enabled = false;
    DecodeEngine engine(truncate_workload(full, 52, 1), decode_plan(), policy, rope,
                        StoreConfig{8, 8, 8}, CostModel{});

    CHECK_THROWS_AS(engine.step(token_input_at(full, 52)), ContractViolation);
    engine.prefill();
    CHECK_THROWS_AS(engine.prefill(), ContractViolation);

    TokenInput bad = token_input_at(full, 52);
    bad.q[0].pop_back();
    CHECK_THROWS_AS(engine.step(bad), std::invalid_argument);
    bad = token_input_at(full, 52);
    bad.v[1][0].pop_back();
    CHECK_THROWS_AS(engine.step(bad), std::invalid_argument);

    CHECK_THROWS_AS(engine.set_frozen_stages({true}), std::invalid_argument);
}

TEST_CASE("per-step refresh is bit identical to stateless reruns") {
    const auto full = square_workload(72);
    const PruningPlan plan = decode_plan();
    const RopeTable rope = build_rope_table(256, 8);
    RopePolicySet policy;
    policy.extension_enabled = false;

    const std::size_t prefill_len = 60;
    DecodeEngine engine(truncate_workload(full, prefill_len, 1), plan, policy, rope,
                        StoreConfig{8, 16, 16}, CostModel{});
    engine.prefill();

    for (std::size_t t = prefill_len; t < full.seq_len_kv; ++t) {
        const auto result = engine.step(token_input_at(full, t));
        const auto trunc = truncate_workload(full, t + 1, 1);
        for (std::size_t l = 0; l < full.num_layers; ++l) {
            const auto mask = build_mask(plan, trunc, l, policy, rope);
            REQUIRE(mask.num_blocks() == 1);
            CHECK(mask.indices[0] == engine.stage_cache(l, plan.stages.size() - 1));
            DirectKeySource kv(trunc, l);
            for (std::size_t h = 0; h < full.num_heads; ++h) {
                const auto expected =
                    attention_row(trunc.q(l, h).row_span(0), selected_indices(mask, 0), t,
                                  false, rope, kv, h);
                CHECK(result.output[l][h] == expected);  // bit exact
            }
        }
    }
}

TEST_CASE("interval counters, refresh counts and staleness over 48 steps") {
    const std::size_t steps = 48;
    const std::size_t prefill_len = 192;
    const auto full = square_workload(prefill_len + steps, 1, 1, 8, 7);

    PruningPlan plan;
    plan.stages = {{1, 8, 64}, {1, 4, 32}, {1, 2, 16}};
    plan.sink_tokens = 16;
    plan.stream_tokens = 32;
    plan.refresh_intervals = {16, 8, 4};
    const RopeTable rope = build_rope_table(512, 8);
    RopePolicySet policy;
    policy.extension_enabled = false;

    DecodeEngine engine(truncate_workload(full, prefill_len, 1), plan, policy, rope,
                        StoreConfig{8, 16, 16}, CostModel{});
    engine.prefill();

    std::vector<std::size_t> refresh_counts(3, 0);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto result = engine.step(token_input_at(full, prefill_len + s));
        for (std::size_t i = 0; i < 3; ++i) {
            if (result.telemetry.refreshed[i]) ++refresh_counts[i];
            // staleness never exceeds the configured interval
            CHECK(engine.steps_taken() - engine.last_refresh(0, i) < plan.refresh_intervals[i]);
            CHECK(result.telemetry.mask_sizes[i] <= plan.stages[i].keep);
        }
        // counters track the step count modulo each interval
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(engine.counters()[i] == engine.steps_taken() % plan.refresh_intervals[i]);
        }
    }
    CHECK(refresh_counts == std::vector<std::size_t>{3, 6, 12});
    CHECK(engine.steps_taken() == steps);
}

TEST_CASE("frozen stages keep serving prefill lists at zero stage cost") {
    const auto full = square_workload(72, 1, 1);
    PruningPlan plan = decode_plan();
    const RopeTable rope = build_rope_table(256, 8);
    RopePolicySet policy;
    policy.extension_enabled = false;

    DecodeEngine engine(truncate_workload(full, 60, 1), plan, policy, rope,
                        StoreConfig{8, 16, 16}, CostModel{});
    engine.prefill();
    const auto cached_before = engine.stage_cache(0, 0);
    engine.set_frozen_stages({true, false});

    for (std::size_t s = 0; s < 8; ++s) {
        const auto result = engine.step(token_input_at(full, 60 + s));
        CHECK_FALSE(result.telemetry.refreshed[0]);
        CHECK(result.telemetry.refreshed[1]);
        CHECK(result.telemetry.stage_latency[0] == 0.0);
        CHECK(engine.last_refresh(0, 0) == 0);
    }
    CHECK(engine.stage_cache(0, 0) == cached_before);
}

TEST_CASE("prefill with covering budgets reproduces dense attention") {
    const auto wl = square_workload(64);
    PruningPlan plan;
    plan.stages = {{16, 4, 64}};  // budget >= the whole middle region
    plan.sink_tokens = 8;
    plan.stream_tokens = 16;
    const RopeTable rope = build_rope_table(256, 8);
    RopePolicySet policy;
    policy.extension_enabled = false;

    DecodeEngine engine(wl, plan, policy, rope, StoreConfig{8, 16, 16}, CostModel{});
    const auto prefill = engine.prefill();
    REQUIRE(prefill.outputs.size() == wl.num_layers);
    for (std::size_t l = 0; l < wl.num_layers; ++l) {
        const auto dense = dense_attention(wl, l);
        for (std::size_t h = 0; h < wl.num_heads; ++h) {
            for (std::size_t r = 0; r < wl.seq_len_q; ++r) {
                for (std::size_t c = 0; c < wl.head_dim; ++c) {
                    CHECK(prefill.outputs[l].heads[h].at(r, c) ==
                          doctest::Approx(dense.heads[h].at(r, c)).epsilon(1e-4));
                }
            }
        }
    }
}
