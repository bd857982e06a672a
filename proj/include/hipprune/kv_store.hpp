#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hipprune/key_source.hpp"
#include "hipprune/workload.hpp"

namespace hipprune {

enum class BankId { Mask = 0, Sa = 1 };

struct BankStats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;

    std::uint64_t accesses() const { return hits + misses; }
    // absent while no accesses were recorded
    std::optional<double> hit_ratio() const;
};

// Time units per page access; host defaults to 31.5x the device cost.
struct CostModel {
    double device_access_cost = 1.0;
    double host_access_cost = 31.5;

    void validate() const;
};

double modeled_latency(double hit_ratio, const CostModel& cost, std::uint64_t page_accesses);

// Thrown when a commit receives more missing pages than a bank can hold; the
// pages that did not fit are listed.
struct PartialCommitError : std::runtime_error {
    std::vector<std::uint64_t> uncached;

    explicit PartialCommitError(std::vector<std::uint64_t> pages);
};

// Simulated two-tier paged KV cache. The host tier (the workload) is
// authoritative for data; banks track page residency only. A page covers
// page_size consecutive token rows of one layer, all heads.
class TieredKvStore {
   public:
    TieredKvStore(const AttentionWorkload& host, std::size_t page_size, std::size_t mask_capacity,
                  std::size_t sa_capacity);

    std::size_t page_size() const { return page_size_; }
    const AttentionWorkload& host() const { return *host_; }

    std::uint64_t page_of(std::size_t layer, std::size_t token) const;

    struct AccessResult {
        std::vector<std::uint64_t> resident;
        std::vector<std::uint64_t> missing;
    };

    // Partitions the pages into resident/missing, refreshing recency and
    // counting one hit or miss per page. Bank contents are not modified.
    AccessResult access_pages(BankId bank, std::span<const std::uint64_t> pages);

    // Covering page set of the tokens in first-touch order, then access_pages.
    AccessResult access_tokens(BankId bank, std::size_t layer,
                               std::span<const std::size_t> tokens);

    // Inserts missing pages, evicting least-recently-used pages on pressure.
    // Returns the evicted pages. Throws PartialCommitError when the batch
    // exceeds the bank capacity (the overflow stays uncached).
    std::vector<std::uint64_t> commit(BankId bank, std::span<const std::uint64_t> missing);

    BankStats stats(BankId bank) const;
    void reset_stats();

    std::size_t capacity(BankId id) const { return bank(id).capacity; }
    std::size_t resident_count(BankId bank) const;
    bool is_resident(BankId bank, std::uint64_t page) const;
    // Resident pages in most-recent-first order.
    std::vector<std::uint64_t> recency_order(BankId bank) const;

    // Verifies the page-table / slot bijection and the LRU queue contents.
    void check_consistency() const;

   private:
    struct Bank {
        std::size_t capacity = 0;
        std::vector<std::optional<std::uint64_t>> slots;
        std::vector<std::size_t> free_slots;
        std::unordered_map<std::uint64_t, std::size_t> page_table;  // page -> slot
        std::list<std::uint64_t> lru;                               // front = most recent
        std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> lru_pos;
        BankStats stats;
    };

    Bank& bank(BankId id) { return banks_[static_cast<std::size_t>(id)]; }
    const Bank& bank(BankId id) const { return banks_[static_cast<std::size_t>(id)]; }

    const AttentionWorkload* host_;
    std::size_t page_size_;
    Bank banks_[2];
};

// KeySource over one layer of the store's host tier, with page accounting
// against one bank. Each page is counted at most once per phase; misses
// accumulate until the engine drains them for the step-end commit. Data always
// comes from the host tier, so resolution is never stale.
class KvView final : public KeySource {
   public:
    KvView(TieredKvStore& store, BankId bank, std::size_t layer)
        : store_(&store), bank_(bank), layer_(layer) {}

    std::span<const float> key_row(std::size_t head, std::size_t token) override;
    // Mask-bank views reject value reads: selection never touches V.
    std::span<const float> value_row(std::size_t head, std::size_t token) override;

    // Starts a new accounting phase (one pruning stage or one BSA pass).
    void begin_phase();
    std::uint64_t phase_accesses() const { return phase_accesses_; }
    std::uint64_t phase_hits() const { return phase_hits_; }

    // Missing pages collected since the last drain, in first-miss order.
    std::vector<std::uint64_t> drain_missing();

    // Every token index resolved through this view (for access accounting).
    const std::vector<std::size_t>& touched_tokens() const { return touched_tokens_; }
    void clear_touched();

   private:
    void account(std::size_t token);

    TieredKvStore* store_;
    BankId bank_;
    std::size_t layer_;
    std::unordered_set<std::uint64_t> seen_this_phase_;
    std::unordered_set<std::uint64_t> pending_set_;
    std::vector<std::uint64_t> pending_missing_;
    std::uint64_t phase_accesses_ = 0;
    std::uint64_t phase_hits_ = 0;
    std::vector<std::size_t> touched_tokens_;
};

}  // namespace hipprune
