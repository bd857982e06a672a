#include "hipprune/workload.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

namespace hipprune {

namespace {

constexpr char kMagic[4] = {'H', 'I', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t layer, std::uint64_t head,
                       std::uint64_t kind) {
    return splitmix64(splitmix64(splitmix64(seed ^ (layer << 1)) ^ (head << 1)) ^ kind);
}

DenseMatrix random_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    DenseMatrix m(rows, cols);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (float& v : m.data) v = dist(rng);
    return m;
}

// Box-filter smoothing along the sequence axis with clamped boundaries,
// then per-row renormalization to norm sqrt(d).
DenseMatrix smooth_keys(const DenseMatrix& noise, double locality_scale) {
    const std::size_t rows = noise.rows;
    const std::size_t cols = noise.cols;
    std::size_t half = rows;
    if (locality_scale < static_cast<double>(rows)) {
        half = static_cast<std::size_t>(locality_scale);
    }
    DenseMatrix out(rows, cols);
    // Column-wise prefix sums in double to keep the smoothing exact enough
    // that the infinite-scale limit collapses rows to equality.
    std::vector<double> prefix(rows + 1, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) {
            prefix[r + 1] = prefix[r] + static_cast<double>(noise.at(r, c));
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t lo = r >= half ? r - half : 0;
            const std::size_t hi = std::min(rows - 1, r + half);
            const double sum = prefix[hi + 1] - prefix[lo];
            out.at(r, c) = static_cast<float>(sum / static_cast<double>(hi - lo + 1));
        }
    }
    const double target = std::sqrt(static_cast<double>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        double norm_sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            norm_sq += static_cast<double>(out.at(r, c)) * out.at(r, c);
        }
        if (norm_sq > 0.0) {
            const float scale = static_cast<float>(target / std::sqrt(norm_sq));
            for (std::size_t c = 0; c < cols; ++c) out.at(r, c) *= scale;
        }
    }
    return out;
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is, const char* section) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(std::string("truncated ") + section);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is, const char* section) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError(std::string("truncated ") + section);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t crc_update(std::uint32_t crc, const DenseMatrix& m) {
    return static_cast<std::uint32_t>(
        crc32(crc, reinterpret_cast<const Bytef*>(m.data.data()),
              static_cast<uInt>(m.data.size() * sizeof(float))));
}

}  // namespace

void AttentionWorkload::validate() const {
    if (num_heads == 0 || num_layers == 0 || head_dim == 0 || seq_len_kv == 0) {
        throw std::invalid_argument("AttentionWorkload: zero dimension");
    }
    if (seq_len_q > seq_len_kv) {
        throw std::invalid_argument("AttentionWorkload: seq_len_q > seq_len_kv");
    }
    auto check = [&](const std::vector<std::vector<DenseMatrix>>& t, std::size_t rows,
                     const char* name) {
        if (t.size() != num_layers) {
            throw std::invalid_argument(std::string("AttentionWorkload: bad layer count in ") + name);
        }
        for (const auto& per_layer : t) {
            if (per_layer.size() != num_heads) {
                throw std::invalid_argument(std::string("AttentionWorkload: bad head count in ") +
                                            name);
            }
            for (const auto& m : per_layer) {
                if (m.rows != rows || m.cols != head_dim) {
                    throw std::invalid_argument(std::string("AttentionWorkload: bad shape in ") +
                                                name);
                }
                m.validate_finite();
            }
        }
    };
    check(queries, seq_len_q, "queries");
    check(keys, seq_len_kv, "keys");
    check(values, seq_len_kv, "values");
}

AttentionWorkload generate_synthetic(const SyntheticConfig& config) {
    SyntheticConfig cfg = config;
    if (cfg.seq_len_q == 0) cfg.seq_len_q = cfg.seq_len_kv;
    if (cfg.num_heads == 0 || cfg.num_layers == 0 || cfg.seq_len_q == 0 || cfg.seq_len_kv == 0 ||
        cfg.head_dim == 0) {
        throw std::invalid_argument("generate_synthetic: zero dimension in config");
    }
    if (!(cfg.locality_scale > 0.0)) {
        throw std::invalid_argument("generate_synthetic: locality_scale must be positive");
    }
    for (const auto& n : cfg.needles) {
        if (n.position >= cfg.seq_len_kv) {
            throw std::out_of_range("generate_synthetic: needle position out of range");
        }
    }

    AttentionWorkload wl;
    wl.num_heads = cfg.num_heads;
    wl.num_layers = cfg.num_layers;
    wl.seq_len_q = cfg.seq_len_q;
    wl.seq_len_kv = cfg.seq_len_kv;
    wl.head_dim = cfg.head_dim;
    wl.queries.resize(cfg.num_layers);
    wl.keys.resize(cfg.num_layers);
    wl.values.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            wl.queries[l].push_back(
                random_normal(cfg.seq_len_q, cfg.head_dim, sub_seed(cfg.seed, l, h, 1)));
            DenseMatrix noise =
                random_normal(cfg.seq_len_kv, cfg.head_dim, sub_seed(cfg.seed, l, h, 2));
            wl.keys[l].push_back(smooth_keys(noise, cfg.locality_scale));
            wl.values[l].push_back(
                random_normal(cfg.seq_len_kv, cfg.head_dim, sub_seed(cfg.seed, l, h, 3)));
        }
    }
    for (const auto& n : cfg.needles) {
        for (std::size_t l = 0; l < cfg.num_layers; ++l) {
            plant_needle(wl, l, n.position, n.strength);
        }
    }
    return wl;
}

void plant_needle(AttentionWorkload& workload, std::size_t layer, std::size_t position,
                  float strength) {
    if (layer >= workload.num_layers) {
        throw std::out_of_range("plant_needle: layer out of range");
    }
    if (position >= workload.seq_len_kv) {
        throw std::out_of_range("plant_needle: position " + std::to_string(position) +
                                " >= seq_len_kv " + std::to_string(workload.seq_len_kv));
    }
    if (workload.seq_len_q == 0) {
        throw std::invalid_argument("plant_needle: workload has no queries");
    }
    const std::size_t d = workload.head_dim;
    std::vector<double> mean(d, 0.0);
    for (std::size_t h = 0; h < workload.num_heads; ++h) {
        const float* last_q = workload.q(layer, h).row(workload.seq_len_q - 1);
        for (std::size_t c = 0; c < d; ++c) mean[c] += last_q[c];
    }
    double norm_sq = 0.0;
    for (double v : mean) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    for (std::size_t h = 0; h < workload.num_heads; ++h) {
        float* key = workload.keys[layer][h].row(position);
        for (std::size_t c = 0; c < d; ++c) {
            key[c] = norm > 0.0
                         ? static_cast<float>(static_cast<double>(strength) * mean[c] / norm)
                         : 0.0f;
        }
    }
}

std::uint32_t dump_checksum(const AttentionWorkload& workload) {
    std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
    for (std::size_t l = 0; l < workload.num_layers; ++l) {
        for (std::size_t h = 0; h < workload.num_heads; ++h) {
            crc = crc_update(crc, workload.q(l, h));
            crc = crc_update(crc, workload.k(l, h));
            crc = crc_update(crc, workload.v(l, h));
        }
    }
    return crc;
}

void save_dump(const AttentionWorkload& workload, const std::filesystem::path& path) {
    workload.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u64(os, workload.num_heads);
    write_u64(os, workload.num_layers);
    write_u64(os, workload.seq_len_q);
    write_u64(os, workload.seq_len_kv);
    write_u64(os, workload.head_dim);
    auto write_mat = [&](const DenseMatrix& m) {
        os.write(reinterpret_cast<const char*>(m.data.data()),
                 static_cast<std::streamsize>(m.data.size() * sizeof(float)));
    };
    for (std::size_t l = 0; l < workload.num_layers; ++l) {
        for (std::size_t h = 0; h < workload.num_heads; ++h) {
            write_mat(workload.q(l, h));
            write_mat(workload.k(l, h));
            write_mat(workload.v(l, h));
        }
    }
    write_u32(os, dump_checksum(workload));
    if (!os) {
        throw FormatError("write failure: " + path.string());
    }
}

AttentionWorkload load_dump(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw FormatError("cannot open for reading: " + path.string());
    }
    char magic[4];
    if (!is.read(magic, 4)) {
        throw FormatError("truncated header");
    }
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("magic mismatch in header");
    }
    const std::uint32_t version = read_u32(is, "header");
    if (version != kVersion) {
        throw FormatError("unsupported version " + std::to_string(version) + " in header");
    }
    AttentionWorkload wl;
    wl.num_heads = read_u64(is, "header");
    wl.num_layers = read_u64(is, "header");
    wl.seq_len_q = read_u64(is, "header");
    wl.seq_len_kv = read_u64(is, "header");
    wl.head_dim = read_u64(is, "header");
    if (wl.num_heads == 0 || wl.num_layers == 0 || wl.seq_len_kv == 0 || wl.head_dim == 0) {
        throw FormatError("zero dimension in header");
    }
    auto read_mat = [&](std::size_t rows) {
        DenseMatrix m(rows, wl.head_dim);
        if (!is.read(reinterpret_cast<char*>(m.data.data()),
                     static_cast<std::streamsize>(m.data.size() * sizeof(float)))) {
            throw FormatError("truncated payload");
        }
        return m;
    };
    wl.queries.resize(wl.num_layers);
    wl.keys.resize(wl.num_layers);
    wl.values.resize(wl.num_layers);
    for (std::size_t l = 0; l < wl.num_layers; ++l) {
        for (std::size_t h = 0; h < wl.num_heads; ++h) {
            wl.queries[l].push_back(read_mat(wl.seq_len_q));
            wl.keys[l].push_back(read_mat(wl.seq_len_kv));
            wl.values[l].push_back(read_mat(wl.seq_len_kv));
        }
    }
    const std::uint32_t stored = read_u32(is, "checksum");
    if (stored != dump_checksum(wl)) {
        throw FormatError("checksum mismatch in payload");
    }
    return wl;
}

}  // namespace hipprune
