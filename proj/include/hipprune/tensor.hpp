#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hipprune {

// Row-major float32 matrix. All entries must be finite.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float* row(std::size_t r) { return data.data() + r * cols; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }
    std::span<const float> row_span(std::size_t r) const { return {row(r), cols}; }

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    void append_row(std::span<const float> values);

    // Throws std::invalid_argument if any entry is NaN/Inf or the size is off.
    void validate_finite() const;

    bool operator==(const DenseMatrix&) const = default;
};

// Precomputed cos/sin tables for rotary embeddings, half-split pairing:
// dimension i pairs with i + head_dim/2, angle(p, i) = p * theta_base^(-2i/head_dim).
struct RopeTable {
    std::size_t max_position = 0;
    std::size_t head_dim = 0;
    float theta_base = 10000.0f;
    DenseMatrix cos_tab;  // max_position x head_dim/2
    DenseMatrix sin_tab;  // max_position x head_dim/2
};

RopeTable build_rope_table(std::size_t max_position, std::size_t head_dim,
                           float theta_base = 10000.0f);

// Rotates each (x_i, x_{i+d/2}) pair by the position angle. Norm preserving.
void apply_rope_inplace(std::span<float> vec, std::size_t position, const RopeTable& table);
std::vector<float> apply_rope(std::span<const float> vec, std::size_t position,
                              const RopeTable& table);

// Sequential left-to-right float32 dot product. The fixed accumulation order is
// the determinism contract for every score computed in the engine.
float dot_f32(std::span<const float> a, std::span<const float> b);

// max over rows t of qblock_t . key
float block_scores(const DenseMatrix& qblock, std::span<const float> key);

}  // namespace hipprune
