#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hipprune/workload.hpp"

namespace hipprune {

// Resolves (head, token) to key/value rows for one layer. Implementations may
// record accesses (for access-bound checks or page accounting).
class KeySource {
   public:
    virtual ~KeySource() = default;
    virtual std::span<const float> key_row(std::size_t head, std::size_t token) = 0;
    virtual std::span<const float> value_row(std::size_t head, std::size_t token) = 0;
};

// Reads straight from a workload. Optionally logs every (head, token) key read.
class DirectKeySource final : public KeySource {
   public:
    DirectKeySource(const AttentionWorkload& workload, std::size_t layer, bool log_reads = false)
        : workload_(&workload), layer_(layer), log_reads_(log_reads) {}

    std::span<const float> key_row(std::size_t head, std::size_t token) override {
        if (log_reads_) reads_.emplace_back(head, token);
        return workload_->k(layer_, head).row_span(token);
    }
    std::span<const float> value_row(std::size_t head, std::size_t token) override {
        return workload_->v(layer_, head).row_span(token);
    }

    const std::vector<std::pair<std::size_t, std::size_t>>& reads() const { return reads_; }
    void clear_reads() { reads_.clear(); }

   private:
    const AttentionWorkload* workload_;
    std::size_t layer_;
    bool log_reads_;
    std::vector<std::pair<std::size_t, std::size_t>> reads_;
};

}  // namespace hipprune
