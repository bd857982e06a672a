#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hipprune/config.hpp"

namespace hipprune {

// JSON (machine) + CSV (plot-ready) renderings of one report, plus any
// per-scenario side files (telemetry streams). Pure functions of the config,
// so byte-identical reruns are testable without touching the filesystem.
struct Report {
    std::string json;
    std::string csv;
    std::vector<std::pair<std::string, std::string>> extras;  // suffix -> content
};

// Writes a HIPW dump and returns its payload checksum.
std::uint32_t run_generate(const RunConfig& config, const std::filesystem::path& out);

// Empty-chunk fractions and top-k share histograms over a chunk-size sweep.
Report run_sparsity_report(const RunConfig& config);

// Mask recall vs exact top-k oracle vs random equal-budget baseline, per layer.
Report run_recall_report(const RunConfig& config);

// Prefill + decode steps under the four cached-stage scenarios
// (none, s1, s1s2, all), with per-step telemetry and per-scenario summaries.
Report run_decode_sim(const RunConfig& config);

// Hit ratios and modeled latency across a bank-capacity sweep.
Report run_offload_report(const RunConfig& config);

// base.json / base.csv / base.<suffix> next to each other.
void write_report(const Report& report, const std::filesystem::path& base);

}  // namespace hipprune
