#include "hipprune/commands.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hipprune/sparse_attention.hpp"

namespace hipprune {

namespace {

using nlohmann::json;

std::string hash_hex(std::uint64_t hash) {
    std::ostringstream out;
    out << "0x" << std::hex << hash;
    return out.str();
}

json report_header(const RunConfig& config, const char* command) {
    json out;
    out["command"] = command;
    out["config_hash"] = hash_hex(config_hash(config));
    out["seed"] = config.synth.seed;
    return out;
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double stddev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double sum = 0.0;
    for (double x : xs) sum += (x - m) * (x - m);
    return std::sqrt(sum / static_cast<double>(xs.size() - 1));
}

// Scenario run shared by decode-sim and the offload sweep.
struct ScenarioResult {
    std::vector<double> stage_latency;  // summed over steps
    double bsa_latency = 0.0;
    double total_latency = 0.0;
    std::uint64_t mask_hits = 0;
    std::uint64_t mask_accesses = 0;
    std::uint64_t sa_hits = 0;
    std::uint64_t sa_accesses = 0;
    std::uint32_t output_crc = 0;
    double mean_final_mask_size = 0.0;
    std::string jsonl;
};

ScenarioResult run_scenario(const RunConfig& config, const AttentionWorkload& full,
                            const RopeTable& rope, const std::vector<bool>& frozen) {
    if (config.steps == 0 || config.steps >= full.seq_len_kv) {
        throw ConfigError("decode simulation: run.steps must be in (0, seq_kv)");
    }
    const std::size_t prefill_len = full.seq_len_kv - config.steps;
    const std::size_t q_len = std::min(config.plan.stages.front().query_block, prefill_len);
    AttentionWorkload prefix = truncate_workload(full, prefill_len, q_len);

    DecodeEngine engine(std::move(prefix), config.plan, config.policy, rope, config.store,
                        config.cost);
    engine.set_frozen_stages(frozen);
    engine.prefill();
    engine.store().reset_stats();

    ScenarioResult result;
    result.stage_latency.assign(config.plan.stages.size(), 0.0);
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    std::ostringstream stream;
    double mask_size_sum = 0.0;
    for (std::size_t t = 0; t < config.steps; ++t) {
        const TokenInput token = token_input_at(full, prefill_len + t);
        const StepResult step = engine.step(token);
        const StepTelemetry& tel = step.telemetry;
        for (std::size_t i = 0; i < tel.stage_latency.size(); ++i) {
            result.stage_latency[i] += tel.stage_latency[i];
        }
        result.bsa_latency += tel.bsa_latency;
        result.total_latency += tel.total_latency();
        result.mask_hits += tel.mask_hits;
        result.mask_accesses += tel.mask_accesses;
        result.sa_hits += tel.sa_hits;
        result.sa_accesses += tel.sa_accesses;
        mask_size_sum += static_cast<double>(tel.mask_sizes.back());
        for (const auto& layer : step.output) {
            for (const auto& row : layer) {
                crc = static_cast<std::uint32_t>(
                    crc32(crc, reinterpret_cast<const Bytef*>(row.data()),
                          static_cast<uInt>(row.size() * sizeof(float))));
            }
        }
        json line;
        line["step"] = tel.step;
        line["refreshed"] = tel.refreshed;
        line["stage_latency"] = tel.stage_latency;
        line["bsa_latency"] = tel.bsa_latency;
        line["mask_hits"] = tel.mask_hits;
        line["mask_accesses"] = tel.mask_accesses;
        line["sa_hits"] = tel.sa_hits;
        line["sa_accesses"] = tel.sa_accesses;
        line["mask_sizes"] = tel.mask_sizes;
        stream << line.dump() << "\n";
    }
    result.output_crc = crc;
    result.mean_final_mask_size = mask_size_sum / static_cast<double>(config.steps);
    result.jsonl = stream.str();
    return result;
}

json scenario_json(const std::string& name, const std::vector<bool>& frozen,
                   const ScenarioResult& r, std::size_t steps) {
    json out;
    out["name"] = name;
    out["frozen_stages"] = frozen;
    out["mean_step_latency"] = r.total_latency / static_cast<double>(steps);
    out["stage_latency"] = r.stage_latency;
    out["bsa_latency"] = r.bsa_latency;
    out["mask_hits"] = r.mask_hits;
    out["mask_accesses"] = r.mask_accesses;
    out["mask_hit_ratio"] =
        r.mask_accesses
            ? json(static_cast<double>(r.mask_hits) / static_cast<double>(r.mask_accesses))
            : json();
    out["sa_hits"] = r.sa_hits;
    out["sa_accesses"] = r.sa_accesses;
    out["sa_hit_ratio"] =
        r.sa_accesses ? json(static_cast<double>(r.sa_hits) / static_cast<double>(r.sa_accesses))
                      : json();
    out["mean_final_mask_size"] = r.mean_final_mask_size;
    out["output_crc"] = r.output_crc;
    return out;
}

// Keys truncated to the causal prefix when the query is not the last row.
DenseMatrix causal_keys(const DenseMatrix& keys, std::size_t visible) {
    if (visible == keys.rows) return keys;
    DenseMatrix out(visible, keys.cols);
    std::copy(keys.data.begin(), keys.data.begin() + visible * keys.cols, out.data.begin());
    return out;
}

}  // namespace

std::uint32_t run_generate(const RunConfig& config, const std::filesystem::path& out) {
    const AttentionWorkload workload = make_workload(config);
    workload.validate();
    save_dump(workload, out);
    return dump_checksum(workload);
}

Report run_sparsity_report(const RunConfig& config) {
    const AttentionWorkload workload = make_workload(config);
    const std::size_t k = std::min(config.sparsity_topk, workload.seq_len_kv);
    static constexpr std::size_t kChunkSizes[] = {8, 16, 32, 64, 128, 256};
    static constexpr double kShareEdges[] = {0.125, 0.25, 0.5, 1.0};

    json rows = json::array();
    std::ostringstream csv;
    csv << "chunk_size,empty_fraction,share_le_0.125,share_le_0.25,share_le_0.5,share_le_1\n";
    for (std::size_t chunk_size : kChunkSizes) {
        if (chunk_size > workload.seq_len_kv) continue;
        std::vector<double> empties;
        double bins[4] = {0, 0, 0, 0};
        std::size_t nonempty_total = 0;
        for (std::size_t l = 0; l < workload.num_layers; ++l) {
            for (std::size_t h = 0; h < workload.num_heads; ++h) {
                const auto q = workload.q(l, h).row_span(workload.seq_len_q - 1);
                const ChunkSparsity cs =
                    chunk_sparsity_histogram(q, workload.k(l, h), k, chunk_size);
                empties.push_back(cs.empty_fraction);
                for (std::size_t count : cs.chunk_counts) {
                    if (count == 0) continue;
                    const double share = static_cast<double>(count) / static_cast<double>(k);
                    std::size_t bin = 3;
                    for (std::size_t b = 0; b < 4; ++b) {
                        if (share <= kShareEdges[b]) {
                            bin = b;
                            break;
                        }
                    }
                    bins[bin] += 1.0;
                    ++nonempty_total;
                }
            }
        }
        json row;
        row["chunk_size"] = chunk_size;
        row["top_k"] = k;
        row["empty_fraction"] = mean(empties);
        json shares = json::array();
        for (double b : bins) {
            shares.push_back(nonempty_total ? b / static_cast<double>(nonempty_total) : 0.0);
        }
        row["nonempty_share_bins"] = shares;
        rows.push_back(row);
        csv << chunk_size << "," << mean(empties);
        for (double b : bins) {
            csv << "," << (nonempty_total ? b / static_cast<double>(nonempty_total) : 0.0);
        }
        csv << "\n";
    }

    json out = report_header(config, "sparsity-report");
    out["rows"] = rows;
    return {out.dump(2) + "\n", csv.str(), {}};
}

Report run_recall_report(const RunConfig& config) {
    const std::size_t seeds = config.dump_path.empty() ? std::max<std::size_t>(config.seeds, 1) : 1;
    const std::size_t threads = effective_threads(config.threads);

    std::size_t num_layers = 0;
    // per layer, per seed means
    std::vector<std::vector<double>> mask_by_layer, oracle_by_layer, random_by_layer;
    std::vector<double> budgets;

    for (std::size_t s = 0; s < seeds; ++s) {
        RunConfig cfg = config;
        cfg.synth.seed = config.synth.seed + s;
        const AttentionWorkload workload = make_workload(cfg);
        const RopeTable rope = build_rope_table(workload.seq_len_kv + 2, workload.head_dim);
        if (num_layers == 0) {
            num_layers = workload.num_layers;
            mask_by_layer.assign(num_layers, {});
            oracle_by_layer.assign(num_layers, {});
            random_by_layer.assign(num_layers, {});
        }
        for (std::size_t l = 0; l < workload.num_layers; ++l) {
            const SparseBlockMask mask = build_mask(cfg.plan, workload, l, cfg.policy, rope,
                                                    nullptr, nullptr, threads);
            std::vector<double> mask_r, oracle_r, random_r;
            for (std::size_t m = 0; m < mask.num_blocks(); ++m) {
                const std::size_t row =
                    std::min((m + 1) * mask.block_size, workload.seq_len_q) - 1;
                const std::size_t pos = mask.query_offset + row;
                const std::vector<std::size_t> selected = selected_indices(mask, row);
                budgets.push_back(static_cast<double>(selected.size()));
                for (std::size_t h = 0; h < workload.num_heads; ++h) {
                    const auto q = workload.q(l, h).row_span(row);
                    const DenseMatrix keys = causal_keys(workload.k(l, h), pos + 1);
                    mask_r.push_back(attention_recall(selected, q, keys));
                    const auto top = exact_topk(q, keys, selected.size());
                    oracle_r.push_back(attention_recall(top, q, keys));
                    std::mt19937_64 rng(cfg.synth.seed ^ (l * 0x9e3779b97f4a7c15ULL) ^
                                        (m << 16) ^ h);
                    std::vector<std::size_t> all(pos + 1);
                    std::iota(all.begin(), all.end(), std::size_t{0});
                    std::vector<std::size_t> sample;
                    std::sample(all.begin(), all.end(), std::back_inserter(sample),
                                selected.size(), rng);
                    random_r.push_back(attention_recall(sample, q, keys));
                }
            }
            mask_by_layer[l].push_back(mean(mask_r));
            oracle_by_layer[l].push_back(mean(oracle_r));
            random_by_layer[l].push_back(mean(random_r));
        }
    }

    json rows = json::array();
    std::ostringstream csv;
    csv << "layer,budget_mean,mask_recall_mean,mask_recall_std,oracle_recall_mean,"
           "random_recall_mean,random_recall_std\n";
    std::vector<double> margins;
    for (std::size_t l = 0; l < num_layers; ++l) {
        json row;
        row["layer"] = l;
        row["budget_mean"] = mean(budgets);
        row["mask_recall_mean"] = mean(mask_by_layer[l]);
        row["mask_recall_std"] = stddev(mask_by_layer[l]);
        row["oracle_recall_mean"] = mean(oracle_by_layer[l]);
        row["random_recall_mean"] = mean(random_by_layer[l]);
        row["random_recall_std"] = stddev(random_by_layer[l]);
        rows.push_back(row);
        margins.push_back(mean(mask_by_layer[l]) - mean(random_by_layer[l]));
        csv << l << "," << mean(budgets) << "," << mean(mask_by_layer[l]) << ","
            << stddev(mask_by_layer[l]) << "," << mean(oracle_by_layer[l]) << ","
            << mean(random_by_layer[l]) << "," << stddev(random_by_layer[l]) << "\n";
    }

    json out = report_header(config, "recall-report");
    out["seeds"] = seeds;
    out["rows"] = rows;
    out["mean_margin_over_random"] = mean(margins);
    return {out.dump(2) + "\n", csv.str(), {}};
}

Report run_decode_sim(const RunConfig& config) {
    const AttentionWorkload full = [&] {
        if (!config.dump_path.empty()) return load_dump(config.dump_path);
        SyntheticConfig synth = config.synth;
        synth.seq_len_q = synth.seq_len_kv;  // one query per position for decode slicing
        return generate_synthetic(synth);
    }();
    const RopeTable rope = build_rope_table(full.seq_len_kv + 2, full.head_dim);

    // Scenario "sK" freezes stages 1..K at their prefill-time index lists.
    const std::size_t n = config.plan.stages.size();
    std::vector<std::pair<std::string, std::vector<bool>>> scenarios;
    for (std::size_t cached = 0; cached <= n; ++cached) {
        std::vector<bool> frozen(n, false);
        std::string name;
        if (cached == 0) {
            name = "none";
        } else if (cached == n) {
            name = "all";
        } else {
            name = "s1";
            for (std::size_t i = 1; i < cached; ++i) name += std::to_string(i + 1);
        }
        for (std::size_t i = 0; i < cached; ++i) frozen[i] = true;
        scenarios.emplace_back(std::move(name), std::move(frozen));
    }

    json summary = report_header(config, "decode-sim");
    summary["steps"] = config.steps;
    json rows = json::array();
    std::ostringstream csv;
    csv << "scenario,mean_step_latency,mask_hit_ratio,sa_hit_ratio,bsa_latency";
    for (std::size_t i = 0; i < n; ++i) csv << ",stage" << (i + 1) << "_latency";
    csv << "\n";
    Report report;
    for (const auto& [name, frozen] : scenarios) {
        const ScenarioResult r = run_scenario(config, full, rope, frozen);
        rows.push_back(scenario_json(name, frozen, r, config.steps));
        csv << name << "," << r.total_latency / static_cast<double>(config.steps) << ",";
        if (r.mask_accesses) {
            csv << static_cast<double>(r.mask_hits) / static_cast<double>(r.mask_accesses);
        }
        csv << ",";
        if (r.sa_accesses) {
            csv << static_cast<double>(r.sa_hits) / static_cast<double>(r.sa_accesses);
        }
        csv << "," << r.bsa_latency;
        for (double s : r.stage_latency) csv << "," << s;
        csv << "\n";
        report.extras.emplace_back(name + ".jsonl", r.jsonl);
    }
    summary["scenarios"] = rows;
    report.json = summary.dump(2) + "\n";
    report.csv = csv.str();
    return report;
}

Report run_offload_report(const RunConfig& config) {
    const AttentionWorkload full = [&] {
        if (!config.dump_path.empty()) return load_dump(config.dump_path);
        SyntheticConfig synth = config.synth;
        synth.seq_len_q = synth.seq_len_kv;
        return generate_synthetic(synth);
    }();
    const RopeTable rope = build_rope_table(full.seq_len_kv + 2, full.head_dim);
    const std::vector<bool> frozen(config.plan.stages.size(), false);

    json rows = json::array();
    std::ostringstream csv;
    csv << "capacity_pages,mask_hit_ratio,sa_hit_ratio,total_latency\n";
    for (std::size_t capacity : config.capacity_sweep) {
        RunConfig cfg = config;
        cfg.store.mask_capacity = capacity;
        cfg.store.sa_capacity = capacity;
        const ScenarioResult r = run_scenario(cfg, full, rope, frozen);
        json row;
        row["capacity_pages"] = capacity;
        row["mask_hits"] = r.mask_hits;
        row["mask_accesses"] = r.mask_accesses;
        row["mask_hit_ratio"] =
            r.mask_accesses
                ? json(static_cast<double>(r.mask_hits) / static_cast<double>(r.mask_accesses))
                : json();
        row["sa_hits"] = r.sa_hits;
        row["sa_accesses"] = r.sa_accesses;
        row["sa_hit_ratio"] =
            r.sa_accesses
                ? json(static_cast<double>(r.sa_hits) / static_cast<double>(r.sa_accesses))
                : json();
        row["total_latency"] = r.total_latency;
        rows.push_back(row);
        csv << capacity << ",";
        if (r.mask_accesses) {
            csv << static_cast<double>(r.mask_hits) / static_cast<double>(r.mask_accesses);
        }
        csv << ",";
        if (r.sa_accesses) {
            csv << static_cast<double>(r.sa_hits) / static_cast<double>(r.sa_accesses);
        }
        csv << "," << r.total_latency << "\n";
    }

    json out = report_header(config, "offload-report");
    out["cost_ratio"] = config.cost.host_access_cost / config.cost.device_access_cost;
    out["rows"] = rows;
    return {out.dump(2) + "\n", csv.str(), {}};
}

void write_report(const Report& report, const std::filesystem::path& base) {
    auto write = [](const std::filesystem::path& path, const std::string& content) {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw std::runtime_error("cannot open for writing: " + path.string());
        }
        os << content;
        if (!os) {
            throw std::runtime_error("write failure: " + path.string());
        }
    };
    write(base.string() + ".json", report.json);
    write(base.string() + ".csv", report.csv);
    for (const auto& [suffix, content] : report.extras) {
        write(base.string() + "." + suffix, content);
    }
}

}  // namespace hipprune
