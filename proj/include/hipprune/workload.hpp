#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "hipprune/tensor.hpp"

namespace hipprune {

// Q/K/V tensors for one attention problem, indexed [layer][head].
// Queries are T_q x d, keys/values T_kv x d. Immutable once built except for
// the decode engine, which appends rows as tokens arrive.
struct AttentionWorkload {
    std::size_t num_heads = 0;
    std::size_t num_layers = 0;
    std::size_t seq_len_q = 0;
    std::size_t seq_len_kv = 0;
    std::size_t head_dim = 0;
    std::vector<std::vector<DenseMatrix>> queries;
    std::vector<std::vector<DenseMatrix>> keys;
    std::vector<std::vector<DenseMatrix>> values;

    const DenseMatrix& q(std::size_t layer, std::size_t head) const { return queries[layer][head]; }
    const DenseMatrix& k(std::size_t layer, std::size_t head) const { return keys[layer][head]; }
    const DenseMatrix& v(std::size_t layer, std::size_t head) const { return values[layer][head]; }

    void validate() const;

    bool operator==(const AttentionWorkload&) const = default;
};

struct NeedleSpec {
    std::size_t position = 0;
    float strength = 0.0f;
};

struct SyntheticConfig {
    std::size_t num_heads = 1;
    std::size_t num_layers = 1;
    std::size_t seq_len_q = 0;   // 0 means seq_len_kv
    std::size_t seq_len_kv = 0;
    std::size_t head_dim = 0;
    double locality_scale = 64.0;
    std::vector<NeedleSpec> needles;
    std::uint64_t seed = 0;
};

// Deterministic in config (seed included). Keys are Gaussian noise smoothed by
// a moving average of window locality_scale along the sequence, then per-row
// renormalized to norm sqrt(d), so nearby keys correlate and top-k attention
// mass clusters into chunks. Queries and values are drawn independently per row.
AttentionWorkload generate_synthetic(const SyntheticConfig& config);

// Replaces the key at `position` in every head of `layer` with
// strength * (unit vector along the mean final-query direction).
void plant_needle(AttentionWorkload& workload, std::size_t layer, std::size_t position,
                  float strength);

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// HIPW dump: little-endian; magic "HIPW", version u32, H/L/T_q/T_kv/d as u64,
// per-layer per-head Q, K, V payloads as raw row-major f32, CRC-32 over the payload.
void save_dump(const AttentionWorkload& workload, const std::filesystem::path& path);
AttentionWorkload load_dump(const std::filesystem::path& path);

// CRC-32 of the payload section, as stored in the dump trailer.
std::uint32_t dump_checksum(const AttentionWorkload& workload);

}  // namespace hipprune
