#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hipprune/commands.hpp"
#include "hipprune/decode.hpp"
#include "hipprune/sparse_attention.hpp"

namespace py = pybind11;
using namespace hipprune;

namespace {

py::array_t<float> matrix_to_numpy(const DenseMatrix& m) {
    py::array_t<float> out({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

DenseMatrix numpy_to_matrix(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) {
        throw std::invalid_argument("expected a 2-d float array");
    }
    DenseMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
    return m;
}

RunConfig config_from_overrides(const std::vector<std::string>& overrides) {
    RunConfig cfg = default_config();
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override must be key=value: '" + kv + "'");
        }
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

AttentionWorkload generate(std::size_t heads, std::size_t layers, std::size_t seq_kv,
                           std::size_t seq_q, std::size_t dim, double locality,
                           std::uint64_t seed,
                           const std::vector<std::pair<std::size_t, float>>& needles) {
    SyntheticConfig cfg;
    cfg.num_heads = heads;
    cfg.num_layers = layers;
    cfg.seq_len_kv = seq_kv;
    cfg.seq_len_q = seq_q;
    cfg.head_dim = dim;
    cfg.locality_scale = locality;
    cfg.seed = seed;
    for (const auto& [position, strength] : needles) {
        cfg.needles.push_back({position, strength});
    }
    return generate_synthetic(cfg);
}

PruningPlan plan_from_args(const std::string& preset,
                           const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>&
                               stages,
                           std::size_t sink, std::size_t stream) {
    RunConfig cfg;
    apply_preset(cfg, preset);
    PruningPlan plan = cfg.plan;
    if (!stages.empty()) {
        plan.stages.clear();
        for (const auto& [bq, lc, keep] : stages) plan.stages.push_back({bq, lc, keep});
        plan.refresh_intervals.clear();
    }
    if (sink != static_cast<std::size_t>(-1)) plan.sink_tokens = sink;
    if (stream != static_cast<std::size_t>(-1)) plan.stream_tokens = stream;
    return plan;
}

}  // namespace

PYBIND11_MODULE(_hipprune, m) {
    m.doc() = "Hierarchical context pruning engine with block-sparse attention, "
              "stage-cached decoding and a simulated paged KV cache";

    py::class_<AttentionWorkload>(m, "Workload")
        .def_property_readonly("num_heads", [](const AttentionWorkload& w) { return w.num_heads; })
        .def_property_readonly("num_layers",
                               [](const AttentionWorkload& w) { return w.num_layers; })
        .def_property_readonly("seq_len_q", [](const AttentionWorkload& w) { return w.seq_len_q; })
        .def_property_readonly("seq_len_kv",
                               [](const AttentionWorkload& w) { return w.seq_len_kv; })
        .def_property_readonly("head_dim", [](const AttentionWorkload& w) { return w.head_dim; })
        .def("q", [](const AttentionWorkload& w, std::size_t l, std::size_t h) {
            return matrix_to_numpy(w.q(l, h));
        })
        .def("k", [](const AttentionWorkload& w, std::size_t l, std::size_t h) {
            return matrix_to_numpy(w.k(l, h));
        })
        .def("v", [](const AttentionWorkload& w, std::size_t l, std::size_t h) {
            return matrix_to_numpy(w.v(l, h));
        });

    py::class_<SparseBlockMask>(m, "SparseBlockMask")
        .def_readonly("block_size", &SparseBlockMask::block_size)
        .def_readonly("sink_tokens", &SparseBlockMask::sink_tokens)
        .def_readonly("stream_tokens", &SparseBlockMask::stream_tokens)
        .def_readonly("query_offset", &SparseBlockMask::query_offset)
        .def_readonly("indices", &SparseBlockMask::indices);

    m.def("generate", &generate, py::arg("heads") = 1, py::arg("layers") = 1,
          py::arg("seq_kv") = 1024, py::arg("seq_q") = 64, py::arg("dim") = 32,
          py::arg("locality") = 64.0, py::arg("seed") = 1,
          py::arg("needles") = std::vector<std::pair<std::size_t, float>>{});

    m.def("save_dump",
          [](const AttentionWorkload& w, const std::string& path) { save_dump(w, path); });
    m.def("load_dump", [](const std::string& path) { return load_dump(path); });
    m.def("dump_checksum", [](const AttentionWorkload& w) { return dump_checksum(w); });

    m.def(
        "build_mask",
        [](const AttentionWorkload& workload, std::size_t layer, const std::string& preset,
           const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& stages,
           std::size_t sink, std::size_t stream, bool extension, std::size_t threads) {
            const PruningPlan plan = plan_from_args(preset, stages, sink, stream);
            RopePolicySet policy;
            policy.extension_enabled = extension;
            const RopeTable rope = build_rope_table(workload.seq_len_kv + 2, workload.head_dim);
            return build_mask(plan, workload, layer, policy, rope, nullptr, nullptr, threads);
        },
        py::arg("workload"), py::arg("layer") = 0, py::arg("preset") = "3k",
        py::arg("stages") = std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>{},
        py::arg("sink") = static_cast<std::size_t>(-1),
        py::arg("stream") = static_cast<std::size_t>(-1), py::arg("extension") = false,
        py::arg("threads") = 1);

    m.def(
        "dense_attention",
        [](const AttentionWorkload& workload, std::size_t layer) {
            const AttentionOutput out = dense_attention(workload, layer);
            std::vector<py::array_t<float>> heads;
            for (const auto& head : out.heads) heads.push_back(matrix_to_numpy(head));
            return heads;
        },
        py::arg("workload"), py::arg("layer") = 0);

    m.def(
        "block_sparse_attention",
        [](const AttentionWorkload& workload, std::size_t layer, const SparseBlockMask& mask,
           bool extension) {
            RopePolicySet policy;
            policy.extension_enabled = extension;
            const RopeTable rope = build_rope_table(workload.seq_len_kv + 2, workload.head_dim);
            DirectKeySource kv(workload, layer);
            const AttentionOutput out =
                block_sparse_attention(workload, layer, mask, policy, rope, kv);
            std::vector<py::array_t<float>> heads;
            for (const auto& head : out.heads) heads.push_back(matrix_to_numpy(head));
            return heads;
        },
        py::arg("workload"), py::arg("layer"), py::arg("mask"), py::arg("extension") = false);

    m.def("selected_indices", &selected_indices, py::arg("mask"), py::arg("row"));

    m.def(
        "exact_topk",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& query,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& keys,
           std::size_t k) {
            const DenseMatrix key_matrix = numpy_to_matrix(keys);
            std::vector<float> q(query.data(), query.data() + query.size());
            return exact_topk(q, key_matrix, k);
        },
        py::arg("query"), py::arg("keys"), py::arg("k"));

    m.def(
        "attention_recall",
        [](const std::vector<std::size_t>& selected,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& query,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& keys) {
            const DenseMatrix key_matrix = numpy_to_matrix(keys);
            std::vector<float> q(query.data(), query.data() + query.size());
            return attention_recall(selected, q, key_matrix);
        },
        py::arg("selected"), py::arg("query"), py::arg("keys"));

    m.def(
        "run_report",
        [](const std::string& command, const std::vector<std::string>& overrides) {
            const RunConfig cfg = config_from_overrides(overrides);
            Report report;
            if (command == "sparsity-report") {
                report = run_sparsity_report(cfg);
            } else if (command == "recall-report") {
                report = run_recall_report(cfg);
            } else if (command == "decode-sim") {
                report = run_decode_sim(cfg);
            } else if (command == "offload-report") {
                report = run_offload_report(cfg);
            } else {
                throw std::invalid_argument("unknown report command '" + command + "'");
            }
            py::dict out;
            out["json"] = report.json;
            out["csv"] = report.csv;
            py::dict extras;
            for (const auto& [suffix, content] : report.extras) {
                extras[py::str(suffix)] = content;
            }
            out["extras"] = extras;
            return out;
        },
        py::arg("command"), py::arg("overrides") = std::vector<std::string>{});

    m.def(
        "config_hash",
        [](const std::vector<std::string>& overrides) {
            return config_hash(config_from_overrides(overrides));
        },
        py::arg("overrides") = std::vector<std::string>{});
}
