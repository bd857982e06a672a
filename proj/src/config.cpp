#include "hipprune/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hipprune {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an unsigned integer: '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto& part : split(value, ',')) {
        out.push_back(static_cast<std::size_t>(parse_u64(key, part)));
    }
    return out;
}

NeedleSpec& single_needle(RunConfig& config) {
    if (config.synth.needles.empty()) config.synth.needles.push_back({});
    return config.synth.needles.front();
}

}  // namespace

void apply_preset(RunConfig& config, const std::string& name) {
    PruningPlan plan;
    plan.sink_tokens = 256;
    plan.stream_tokens = 1024;
    if (name == "3k" || name == "fast" || name == "flash") {
        plan.stages = {{64, 256, 32768}, {64, 32, 8192}, {64, 8, 2048}};
    } else if (name == "5k") {
        plan.stages = {{64, 64, 32768}, {64, 32, 16384}, {64, 16, 4096}};
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected 3k, 5k, fast, flash)");
    }
    if (name == "fast") {
        plan.refresh_intervals = {32, 16, 8};
    } else if (name == "flash") {
        plan.refresh_intervals = {96, 24, 8};
    } else {
        plan.refresh_intervals = {16, 8, 4};
    }
    config.plan = std::move(plan);
    config.policy = RopePolicySet{};
    config.policy.extension_enabled = false;
    config.preset = name;
}

RunConfig default_config() {
    RunConfig config;
    config.synth.num_heads = 2;
    config.synth.num_layers = 2;
    config.synth.seq_len_kv = 8192;
    config.synth.seq_len_q = 64;
    config.synth.head_dim = 64;
    config.synth.locality_scale = 64.0;
    config.synth.seed = 1;
    config.store.page_size = 64;
    config.store.mask_capacity = 128;
    config.store.sa_capacity = 64;
    config.capacity_sweep = {8, 16, 32, 64, 128};
    apply_preset(config, "3k");
    return config;
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
    if (key == "workload.heads") {
        config.synth.num_heads = parse_u64(key, value);
    } else if (key == "workload.layers") {
        config.synth.num_layers = parse_u64(key, value);
    } else if (key == "workload.seq_kv") {
        config.synth.seq_len_kv = parse_u64(key, value);
    } else if (key == "workload.seq_q") {
        config.synth.seq_len_q = parse_u64(key, value);
    } else if (key == "workload.dim") {
        config.synth.head_dim = parse_u64(key, value);
    } else if (key == "workload.locality") {
        config.synth.locality_scale = parse_double(key, value);
    } else if (key == "workload.seed") {
        config.synth.seed = parse_u64(key, value);
    } else if (key == "workload.dump") {
        config.dump_path = value;
    } else if (key == "needle.position") {
        single_needle(config).position = parse_u64(key, value);
    } else if (key == "needle.strength") {
        single_needle(config).strength = static_cast<float>(parse_double(key, value));
    } else if (key == "plan.preset") {
        apply_preset(config, value);
    } else if (key == "plan.sink") {
        config.plan.sink_tokens = parse_u64(key, value);
    } else if (key == "plan.stream") {
        config.plan.stream_tokens = parse_u64(key, value);
    } else if (key == "plan.stages") {
        std::vector<StageConfig> stages;
        for (const auto& part : split(value, ',')) {
            const auto fields = split(part, ':');
            if (fields.size() != 3) {
                throw ConfigError("plan.stages: expected bq:lc:k, got '" + part + "'");
            }
            StageConfig s;
            s.query_block = parse_u64(key, fields[0]);
            s.chunk_size = parse_u64(key, fields[1]);
            s.keep = parse_u64(key, fields[2]);
            stages.push_back(s);
        }
        config.plan.stages = std::move(stages);
    } else if (key == "plan.refresh") {
        config.plan.refresh_intervals = parse_size_list(key, value);
    } else if (key == "policy.extension") {
        config.policy.extension_enabled = parse_u64(key, value) != 0;
    } else if (key == "policy.cutoff") {
        config.policy.early_layer_cutoff = parse_u64(key, value);
    } else if (key == "store.page_size") {
        config.store.page_size = parse_u64(key, value);
    } else if (key == "store.mask_capacity") {
        config.store.mask_capacity = parse_u64(key, value);
    } else if (key == "store.sa_capacity") {
        config.store.sa_capacity = parse_u64(key, value);
    } else if (key == "cost.device") {
        config.cost.device_access_cost = parse_double(key, value);
    } else if (key == "cost.host") {
        config.cost.host_access_cost = parse_double(key, value);
    } else if (key == "run.steps") {
        config.steps = parse_u64(key, value);
    } else if (key == "run.seeds") {
        config.seeds = parse_u64(key, value);
    } else if (key == "run.threads") {
        config.threads = parse_u64(key, value);
    } else if (key == "run.sparsity_topk") {
        config.sparsity_topk = parse_u64(key, value);
    } else if (key == "run.capacity_sweep") {
        config.capacity_sweep = parse_size_list(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key = value");
        }
        apply_override(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string canonical_config(const RunConfig& c) {
    std::ostringstream out;
    out << "cost.device=" << c.cost.device_access_cost << "\n";
    out << "cost.host=" << c.cost.host_access_cost << "\n";
    for (std::size_t i = 0; i < c.synth.needles.size(); ++i) {
        out << "needle." << i << "=" << c.synth.needles[i].position << ":"
            << c.synth.needles[i].strength << "\n";
    }
    out << "plan.preset=" << c.preset << "\n";
    out << "plan.refresh=";
    for (std::size_t i = 0; i < c.plan.refresh_intervals.size(); ++i) {
        out << (i ? "," : "") << c.plan.refresh_intervals[i];
    }
    out << "\n";
    out << "plan.sink=" << c.plan.sink_tokens << "\n";
    out << "plan.stages=";
    for (std::size_t i = 0; i < c.plan.stages.size(); ++i) {
        out << (i ? "," : "") << c.plan.stages[i].query_block << ":" << c.plan.stages[i].chunk_size
            << ":" << c.plan.stages[i].keep;
    }
    out << "\n";
    out << "plan.stream=" << c.plan.stream_tokens << "\n";
    out << "policy.cutoff=" << c.policy.early_layer_cutoff << "\n";
    out << "policy.extension=" << (c.policy.extension_enabled ? 1 : 0) << "\n";
    out << "run.capacity_sweep=";
    for (std::size_t i = 0; i < c.capacity_sweep.size(); ++i) {
        out << (i ? "," : "") << c.capacity_sweep[i];
    }
    out << "\n";
    out << "run.seeds=" << c.seeds << "\n";
    out << "run.sparsity_topk=" << c.sparsity_topk << "\n";
    out << "run.steps=" << c.steps << "\n";
    out << "run.threads=" << c.threads << "\n";
    out << "store.mask_capacity=" << c.store.mask_capacity << "\n";
    out << "store.page_size=" << c.store.page_size << "\n";
    out << "store.sa_capacity=" << c.store.sa_capacity << "\n";
    out << "workload.dim=" << c.synth.head_dim << "\n";
    out << "workload.dump=" << c.dump_path << "\n";
    out << "workload.heads=" << c.synth.num_heads << "\n";
    out << "workload.layers=" << c.synth.num_layers << "\n";
    out << "workload.locality=" << c.synth.locality_scale << "\n";
    out << "workload.seed=" << c.synth.seed << "\n";
    out << "workload.seq_kv=" << c.synth.seq_len_kv << "\n";
    out << "workload.seq_q=" << c.synth.seq_len_q << "\n";
    return out.str();
}

std::uint64_t config_hash(const RunConfig& config) {
    const std::string text = canonical_config(config);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::size_t effective_threads(std::size_t configured) {
    std::size_t limit = configured == 0 ? 1 : configured;
    if (const char* env = std::getenv("HIPPRUNE_THREADS")) {
        const std::uint64_t cap = parse_u64("HIPPRUNE_THREADS", env);
        if (cap > 0) limit = std::min<std::size_t>(limit, cap);
    }
    return limit;
}

AttentionWorkload make_workload(const RunConfig& config) {
    if (!config.dump_path.empty()) {
        return load_dump(config.dump_path);
    }
    return generate_synthetic(config.synth);
}

}  // namespace hipprune
