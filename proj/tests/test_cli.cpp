#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "hipprune/commands.hpp"
#include "hipprune/sparse_attention.hpp"

using namespace hipprune;
using nlohmann::json;

namespace {

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const char* name)
        : path(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() { std::filesystem::remove(path); }
};

RunConfig small_sim_config() {
    RunConfig cfg = default_config();
    cfg.synth.num_heads = 1;
    cfg.synth.num_layers = 1;
    cfg.synth.seq_len_kv = 256;
    cfg.synth.seq_len_q = 16;
    cfg.synth.head_dim = 16;
    cfg.plan.stages = {{16, 8, 64}, {8, 4, 32}};
    cfg.plan.sink_tokens = 16;
    cfg.plan.stream_tokens = 32;
    cfg.plan.refresh_intervals = {4, 2};
    cfg.store.page_size = 8;
    cfg.store.mask_capacity = 16;
    cfg.store.sa_capacity = 16;
    cfg.steps = 16;
    return cfg;
}

}  // namespace

TEST_CASE("presets") {
    RunConfig cfg;
    apply_preset(cfg, "3k");
    REQUIRE(cfg.plan.stages.size() == 3);
    CHECK(cfg.plan.stages[0].chunk_size == 256);
    CHECK(cfg.plan.stages[2].keep == 2048);
    CHECK(cfg.plan.sink_tokens == 256);
    CHECK(cfg.plan.stream_tokens == 1024);
    CHECK(cfg.plan.refresh_intervals == std::vector<std::size_t>{16, 8, 4});
    CHECK_FALSE(cfg.policy.extension_enabled);

    apply_preset(cfg, "5k");
    CHECK(cfg.plan.stages[0].chunk_size == 64);
    CHECK(cfg.plan.stages[1].keep == 16384);
    CHECK(cfg.plan.stages[2].keep == 4096);

    apply_preset(cfg, "fast");
    CHECK(cfg.plan.refresh_intervals == std::vector<std::size_t>{32, 16, 8});
    apply_preset(cfg, "flash");
    CHECK(cfg.plan.refresh_intervals == std::vector<std::size_t>{96, 24, 8});
    CHECK(cfg.plan.stages[2].keep == 2048);

    CHECK_THROWS_AS(apply_preset(cfg, "7k"), ConfigError);
}

TEST_CASE("overrides") {
    RunConfig cfg = default_config();
    apply_override(cfg, "workload.seq_kv", "4096");
    CHECK(cfg.synth.seq_len_kv == 4096);
    apply_override(cfg, "plan.stages", "32:16:512, 16:8:128");
    REQUIRE(cfg.plan.stages.size() == 2);
    CHECK(cfg.plan.stages[1].query_block == 16);
    CHECK(cfg.plan.stages[1].keep == 128);
    apply_override(cfg, "needle.position", "100");
    apply_override(cfg, "needle.strength", "50");
    REQUIRE(cfg.synth.needles.size() == 1);
    CHECK(cfg.synth.needles[0].position == 100);
    CHECK(cfg.synth.needles[0].strength == 50.0f);
    apply_override(cfg, "policy.extension", "1");
    CHECK(cfg.policy.extension_enabled);

    CHECK_THROWS_AS(apply_override(cfg, "workload.bogus", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "workload.seq_kv", "many"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "plan.stages", "64:8"), ConfigError);
}

TEST_CASE("config files") {
    TempFile tmp("hipprune_config.cfg");
    {
        std::ofstream f(tmp.path);
        f << "# comment line\n"
          << "workload.heads = 4   # trailing comment\n"
          << "\n"
          << "plan.refresh = 8,4,2\n";
    }
    RunConfig cfg = default_config();
    apply_config_file(cfg, tmp.path);
    CHECK(cfg.synth.num_heads == 4);
    CHECK(cfg.plan.refresh_intervals == std::vector<std::size_t>{8, 4, 2});

    {
        std::ofstream f(tmp.path, std::ios::trunc);
        f << "no equals sign here\n";
    }
    CHECK_THROWS_AS(apply_config_file(cfg, tmp.path), ConfigError);
    CHECK_THROWS_AS(apply_config_file(cfg, tmp.path.string() + ".does_not_exist"), ConfigError);
}

TEST_CASE("config hash is sensitive to every section") {
    const RunConfig base = default_config();
    const std::uint64_t h0 = config_hash(base);
    CHECK(config_hash(base) == h0);

    for (const char* key : {"workload.seed", "plan.sink", "store.page_size", "run.steps",
                            "policy.cutoff"}) {
        RunConfig cfg = base;
        apply_override(cfg, key, "5");
        CHECK(config_hash(cfg) != h0);
    }
    RunConfig cfg = base;
    apply_override(cfg, "cost.host", "99.5");
    CHECK(config_hash(cfg) != h0);
}

TEST_CASE("thread cap from the environment") {
    unsetenv("HIPPRUNE_THREADS");
    CHECK(effective_threads(8) == 8);
    CHECK(effective_threads(0) == 1);
    setenv("HIPPRUNE_THREADS", "2", 1);
    CHECK(effective_threads(8) == 2);
    CHECK(effective_threads(1) == 1);
    unsetenv("HIPPRUNE_THREADS");
}

TEST_CASE("generate writes verifiable dumps") {
    RunConfig cfg = small_sim_config();
    cfg.synth.needles.push_back({100, 100.0f});
    TempFile a("hipprune_gen_a.hipw");
    TempFile b("hipprune_gen_b.hipw");
    const std::uint32_t crc_a = run_generate(cfg, a.path);
    const std::uint32_t crc_b = run_generate(cfg, b.path);
    CHECK(crc_a == crc_b);

    const auto wl = load_dump(a.path);
    CHECK(dump_checksum(wl) == crc_a);
    const auto top = exact_topk(wl.q(0, 0).row_span(wl.seq_len_q - 1), wl.k(0, 0), 1);
    CHECK(top[0] == 100);

    cfg.synth.seq_len_kv = 0;
    CHECK_THROWS_AS(run_generate(cfg, a.path), std::invalid_argument);
}

TEST_CASE("sparsity report") {
    RunConfig cfg = small_sim_config();
    cfg.sparsity_topk = cfg.synth.seq_len_kv;  // keep everything
    const Report report = run_sparsity_report(cfg);
    const json out = json::parse(report.json);
    CHECK(out["command"] == "sparsity-report");
    CHECK(out["config_hash"].get<std::string>().starts_with("0x"));
    REQUIRE(out["rows"].size() == 6);  // chunk sizes 8..256
    for (const auto& row : out["rows"]) {
        CHECK(row["empty_fraction"].get<double>() == 0.0);
        CHECK(row["top_k"] == 256);
    }
    // csv: header + one line per chunk size
    CHECK(std::count(report.csv.begin(), report.csv.end(), '\n') == 7);

    cfg.sparsity_topk = 8;  // pigeonhole: at most 8 nonempty chunks
    const json tight = json::parse(run_sparsity_report(cfg).json);
    for (const auto& row : tight["rows"]) {
        const double chunks = 256.0 / row["chunk_size"].get<double>();
        CHECK(row["empty_fraction"].get<double>() >= (chunks - 8.0) / chunks - 1e-9);
    }
}

TEST_CASE("recall report") {
    RunConfig cfg = small_sim_config();
    cfg.synth.seq_len_q = 1;
    cfg.seeds = 2;

    SUBCASE("full budgets give perfect recall") {
        cfg.plan.stages = {{1, 8, 256}};  // covers any middle region
        cfg.plan.refresh_intervals = {1};
        const json out = json::parse(run_recall_report(cfg).json);
        CHECK(out["seeds"] == 2);
        REQUIRE(out["rows"].size() == 1);
        const auto& row = out["rows"][0];
        CHECK(row["mask_recall_mean"].get<double>() == doctest::Approx(1.0));
        CHECK(row["oracle_recall_mean"].get<double>() == doctest::Approx(1.0));
        CHECK(row["random_recall_mean"].get<double>() == doctest::Approx(1.0));
    }
    SUBCASE("pruned masks sit between random and the oracle") {
        cfg.plan.stages = {{1, 8, 64}, {1, 4, 32}};
        cfg.plan.refresh_intervals = {1, 1};
        const json out = json::parse(run_recall_report(cfg).json);
        const auto& row = out["rows"][0];
        const double mask_r = row["mask_recall_mean"].get<double>();
        const double oracle_r = row["oracle_recall_mean"].get<double>();
        const double random_r = row["random_recall_mean"].get<double>();
        CHECK(mask_r <= oracle_r + 1e-9);
        CHECK(out["mean_margin_over_random"].get<double>() ==
              doctest::Approx(mask_r - random_r));
    }
}

TEST_CASE("decode simulation scenarios") {
    const RunConfig cfg = small_sim_config();
    const Report report = run_decode_sim(cfg);
    const json out = json::parse(report.json);
    REQUIRE(out["scenarios"].size() == 3);  // none, s1, all for two stages
    CHECK(out["scenarios"][0]["name"] == "none");
    CHECK(out["scenarios"][1]["name"] == "s1");
    CHECK(out["scenarios"][2]["name"] == "all");

    // fully cached stages never recompute, so their stage latencies are zero
    for (const auto& latency : out["scenarios"][2]["stage_latency"]) {
        CHECK(latency.get<double>() == 0.0);
    }
    CHECK(out["scenarios"][2]["mean_step_latency"].get<double>() <
          out["scenarios"][0]["mean_step_latency"].get<double>());

    // per-scenario telemetry streams, one json object per step
    REQUIRE(report.extras.size() == 3);
    CHECK(report.extras[0].first == "none.jsonl");
    CHECK(std::count(report.extras[0].second.begin(), report.extras[0].second.end(), '\n') ==
          static_cast<std::ptrdiff_t>(cfg.steps));
    const json first_line = json::parse(report.extras[0].second.substr(
        0, report.extras[0].second.find('\n')));
    CHECK(first_line["step"] == 1);
    CHECK(first_line["refreshed"] == json::array({true, true}));

    // byte-identical rerun
    const Report again = run_decode_sim(cfg);
    CHECK(again.json == report.json);
    CHECK(again.csv == report.csv);
    CHECK(again.extras == report.extras);
}

TEST_CASE("offload report sweeps bank capacity") {
    RunConfig cfg = small_sim_config();
    cfg.capacity_sweep = {2, 4, 8, 16};
    const json out = json::parse(run_offload_report(cfg).json);
    CHECK(out["cost_ratio"].get<double>() == doctest::Approx(31.5));
    REQUIRE(out["rows"].size() == 4);
    double prev_mask = -1.0, prev_sa = -1.0;
    double prev_latency = std::numeric_limits<double>::infinity();
    for (const auto& row : out["rows"]) {
        const double mask_hr = row["mask_hit_ratio"].get<double>();
        const double sa_hr = row["sa_hit_ratio"].get<double>();
        CHECK(mask_hr >= prev_mask - 1e-12);
        CHECK(sa_hr >= prev_sa - 1e-12);
        CHECK(row["total_latency"].get<double>() <= prev_latency + 1e-9);
        prev_mask = mask_hr;
        prev_sa = sa_hr;
        prev_latency = row["total_latency"].get<double>();
    }
}

TEST_CASE("reports land next to the base path") {
    Report report;
    report.json = "{}\n";
    report.csv = "a,b\n";
    report.extras = {{"none.jsonl", "{}\n"}};
    const auto base = std::filesystem::temp_directory_path() / "hipprune_report";
    write_report(report, base);
    for (const char* suffix : {".json", ".csv", ".none.jsonl"}) {
        const auto path = base.string() + suffix;
        CHECK(std::filesystem::exists(path));
        std::filesystem::remove(path);
    }
}
