#include "hipprune/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hipprune {

void DenseMatrix::append_row(std::span<const float> values) {
    if (values.size() != cols) {
        throw std::invalid_argument("append_row: expected " + std::to_string(cols) +
                                    " values, got " + std::to_string(values.size()));
    }
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
}

void DenseMatrix::validate_finite() const {
    if (data.size() != rows * cols) {
        throw std::invalid_argument("DenseMatrix: data length " + std::to_string(data.size()) +
                                    " != rows*cols " + std::to_string(rows * cols));
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("DenseMatrix: non-finite entry");
        }
    }
}

RopeTable build_rope_table(std::size_t max_position, std::size_t head_dim, float theta_base) {
    if (head_dim == 0 || head_dim % 2 != 0) {
        throw std::invalid_argument("build_rope_table: head_dim must be even and positive, got " +
                                    std::to_string(head_dim));
    }
    if (max_position == 0) {
        throw std::invalid_argument("build_rope_table: max_position must be >= 1");
    }
    if (!(theta_base > 0.0f)) {
        throw std::invalid_argument("build_rope_table: theta_base must be positive");
    }
    RopeTable table;
    table.max_position = max_position;
    table.head_dim = head_dim;
    table.theta_base = theta_base;
    const std::size_t half = head_dim / 2;
    table.cos_tab = DenseMatrix(max_position, half);
    table.sin_tab = DenseMatrix(max_position, half);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::pow(static_cast<double>(theta_base),
                     -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
        for (std::size_t p = 0; p < max_position; ++p) {
            const double angle = static_cast<double>(p) * freq;
            table.cos_tab.at(p, i) = static_cast<float>(std::cos(angle));
            table.sin_tab.at(p, i) = static_cast<float>(std::sin(angle));
        }
    }
    return table;
}

void apply_rope_inplace(std::span<float> vec, std::size_t position, const RopeTable& table) {
    if (vec.size() != table.head_dim) {
        throw std::invalid_argument("apply_rope: vector length " + std::to_string(vec.size()) +
                                    " != head_dim " + std::to_string(table.head_dim));
    }
    if (position >= table.max_position) {
        throw std::out_of_range("apply_rope: position " + std::to_string(position) +
                                " >= max_position " + std::to_string(table.max_position));
    }
    const std::size_t half = table.head_dim / 2;
    const float* c = table.cos_tab.row(position);
    const float* s = table.sin_tab.row(position);
    for (std::size_t i = 0; i < half; ++i) {
        const float x = vec[i];
        const float y = vec[i + half];
        vec[i] = x * c[i] - y * s[i];
        vec[i + half] = x * s[i] + y * c[i];
    }
}

std::vector<float> apply_rope(std::span<const float> vec, std::size_t position,
                              const RopeTable& table) {
    std::vector<float> out(vec.begin(), vec.end());
    apply_rope_inplace(out, position, table);
    return out;
}

float dot_f32(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("dot_f32: length mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    }
    float acc = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

float block_scores(const DenseMatrix& qblock, std::span<const float> key) {
    if (qblock.cols != key.size()) {
        throw std::invalid_argument("block_scores: qblock cols " + std::to_string(qblock.cols) +
                                    " != key length " + std::to_string(key.size()));
    }
    if (qblock.rows == 0) {
        throw std::invalid_argument("block_scores: empty query block");
    }
    float best = dot_f32(qblock.row_span(0), key);
    for (std::size_t t = 1; t < qblock.rows; ++t) {
        const float s = dot_f32(qblock.row_span(t), key);
        if (s > best) best = s;
    }
    return best;
}

}  // namespace hipprune
