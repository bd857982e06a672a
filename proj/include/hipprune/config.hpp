#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hipprune/decode.hpp"
#include "hipprune/kv_store.hpp"
#include "hipprune/pruning.hpp"
#include "hipprune/rope_policy.hpp"
#include "hipprune/workload.hpp"

namespace hipprune {

// Everything a command needs, assembled from preset + config file + flag
// overrides. Exactly one workload source: dump_path empty means synthetic.
struct RunConfig {
    SyntheticConfig synth;
    std::string dump_path;
    std::string preset = "3k";
    PruningPlan plan;
    RopePolicySet policy;
    StoreConfig store;
    CostModel cost;
    std::size_t steps = 48;
    std::size_t seeds = 20;
    std::size_t sparsity_topk = 2048;
    std::vector<std::size_t> capacity_sweep;
    std::size_t threads = 1;
};

// Named plan/policy bundles: "3k", "5k", "fast", "flash".
void apply_preset(RunConfig& config, const std::string& name);

RunConfig default_config();

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value, one per line, '#' comments. Unknown keys are errors.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

// Canonical flat rendering of the config; its FNV-1a hash is embedded in every
// report so runs are traceable to their exact settings.
std::string canonical_config(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);

// HIPPRUNE_THREADS caps the configured worker count when set.
std::size_t effective_threads(std::size_t configured);

// Workload per the config: load the dump or generate synthetically (needles
// included). `seed_override` replaces the synthetic seed when nonzero-length
// reports sweep seeds.
AttentionWorkload make_workload(const RunConfig& config);

}  // namespace hipprune
