#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "hipprune/commands.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out = "report";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t steps = 0;
    bool steps_set = false;
    std::string needle;
    std::string capacity_sweep;
    std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key = value config file");
    cmd->add_option("--preset", args.preset, "plan preset: 3k, 5k, fast, flash");
    cmd->add_option("--seed", args.seed, "workload seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--out", args.out, "output base path");
    cmd->add_option("--steps", args.steps, "decode steps")->each([&](const std::string&) {
        args.steps_set = true;
    });
    cmd->add_option("--needle", args.needle, "POS:STRENGTH planted retrieval target");
    cmd->add_option("--capacity-sweep", args.capacity_sweep, "comma-separated page capacities");
    cmd->add_option("--threads", args.threads, "worker cap (HIPPRUNE_THREADS also applies)");
    cmd->add_option("--set", args.overrides, "extra key=value overrides")->take_all();
}

hipprune::RunConfig build_config(const CommonArgs& args) {
    hipprune::RunConfig config = hipprune::default_config();
    if (!args.preset.empty()) hipprune::apply_preset(config, args.preset);
    if (!args.config_path.empty()) hipprune::apply_config_file(config, args.config_path);
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw hipprune::ConfigError("--set expects key=value, got '" + kv + "'");
        }
        hipprune::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed_set) {
        hipprune::apply_override(config, "workload.seed", std::to_string(args.seed));
    }
    if (args.steps_set) {
        hipprune::apply_override(config, "run.steps", std::to_string(args.steps));
    }
    if (!args.needle.empty()) {
        const auto colon = args.needle.find(':');
        if (colon == std::string::npos) {
            throw hipprune::ConfigError("--needle expects POS:STRENGTH");
        }
        hipprune::apply_override(config, "needle.position", args.needle.substr(0, colon));
        hipprune::apply_override(config, "needle.strength", args.needle.substr(colon + 1));
    }
    if (!args.capacity_sweep.empty()) {
        hipprune::apply_override(config, "run.capacity_sweep", args.capacity_sweep);
    }
    if (args.threads != 0) {
        hipprune::apply_override(config, "run.threads", std::to_string(args.threads));
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical context pruning engine"};
    app.require_subcommand(1);

    CommonArgs gen_args, sparsity_args, recall_args, decode_args, offload_args;
    CLI::App* gen = app.add_subcommand("generate", "write a synthetic workload dump");
    add_common(gen, gen_args);
    CLI::App* sparsity = app.add_subcommand("sparsity-report", "top-k chunk sparsity sweep");
    add_common(sparsity, sparsity_args);
    CLI::App* recall = app.add_subcommand("recall-report", "mask recall vs oracle and random");
    add_common(recall, recall_args);
    CLI::App* decode = app.add_subcommand("decode-sim", "stage-cached decoding simulation");
    add_common(decode, decode_args);
    CLI::App* offload = app.add_subcommand("offload-report", "bank capacity sweep");
    add_common(offload, offload_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto config = build_config(gen_args);
            const std::string path =
                gen_args.out == "report" ? "workload.hipw" : gen_args.out;
            const std::uint32_t crc = hipprune::run_generate(config, path);
            std::cout << path << " crc32=" << crc << "\n";
        } else if (sparsity->parsed()) {
            const auto config = build_config(sparsity_args);
            hipprune::write_report(hipprune::run_sparsity_report(config), sparsity_args.out);
        } else if (recall->parsed()) {
            const auto config = build_config(recall_args);
            hipprune::write_report(hipprune::run_recall_report(config), recall_args.out);
        } else if (decode->parsed()) {
            const auto config = build_config(decode_args);
            hipprune::write_report(hipprune::run_decode_sim(config), decode_args.out);
        } else if (offload->parsed()) {
            const auto config = build_config(offload_args);
            hipprune::write_report(hipprune::run_offload_report(config), offload_args.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
