#include "hipprune/kv_store.hpp"

#include <algorithm>
#include <string>

#include "hipprune/errors.hpp"

namespace hipprune {

std::optional<double> BankStats::hit_ratio() const {
    if (accesses() == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(accesses());
}

void CostModel::validate() const {
    if (!(device_access_cost > 0.0) || host_access_cost < device_access_cost) {
        throw std::invalid_argument("CostModel: require host >= device > 0");
    }
}

double modeled_latency(double hit_ratio, const CostModel& cost, std::uint64_t page_accesses) {
    cost.validate();
    if (hit_ratio < 0.0 || hit_ratio > 1.0) {
        throw std::invalid_argument("modeled_latency: hit ratio outside [0,1]");
    }
    return static_cast<double>(page_accesses) *
           (hit_ratio * cost.device_access_cost + (1.0 - hit_ratio) * cost.host_access_cost);
}

PartialCommitError::PartialCommitError(std::vector<std::uint64_t> pages)
    : std::runtime_error("commit batch exceeds bank capacity, " + std::to_string(pages.size()) +
                         " pages left uncached"),
      uncached(std::move(pages)) {}

TieredKvStore::TieredKvStore(const AttentionWorkload& host, std::size_t page_size,
                             std::size_t mask_capacity, std::size_t sa_capacity)
    : host_(&host), page_size_(page_size) {
    if (page_size == 0) {
        throw std::invalid_argument("TieredKvStore: page size must be >= 1");
    }
    banks_[0].capacity = mask_capacity;
    banks_[1].capacity = sa_capacity;
    for (auto& b : banks_) {
        b.slots.assign(b.capacity, std::nullopt);
        b.free_slots.resize(b.capacity);
        for (std::size_t i = 0; i < b.capacity; ++i) b.free_slots[i] = b.capacity - 1 - i;
    }
}

std::uint64_t TieredKvStore::page_of(std::size_t layer, std::size_t token) const {
    if (layer >= host_->num_layers) {
        throw std::out_of_range("page_of: layer out of range");
    }
    return (static_cast<std::uint64_t>(layer) << 32) |
           static_cast<std::uint64_t>(token / page_size_);
}

TieredKvStore::AccessResult TieredKvStore::access_pages(BankId id,
                                                        std::span<const std::uint64_t> pages) {
    Bank& b = bank(id);
    AccessResult out;
    for (std::uint64_t page : pages) {
        auto it = b.lru_pos.find(page);
        if (it != b.lru_pos.end()) {
            ++b.stats.hits;
            b.lru.splice(b.lru.begin(), b.lru, it->second);
            out.resident.push_back(page);
        } else {
            ++b.stats.misses;
            out.missing.push_back(page);
        }
    }
    return out;
}

TieredKvStore::AccessResult TieredKvStore::access_tokens(BankId id, std::size_t layer,
                                                         std::span<const std::size_t> tokens) {
    std::vector<std::uint64_t> pages;
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t token : tokens) {
        const std::uint64_t page = page_of(layer, token);
        if (seen.insert(page).second) pages.push_back(page);
    }
    return access_pages(id, pages);
}

std::vector<std::uint64_t> TieredKvStore::commit(BankId id,
                                                 std::span<const std::uint64_t> missing) {
    Bank& b = bank(id);
    std::vector<std::uint64_t> evicted;
    std::size_t count = 0;
    for (std::uint64_t page : missing) {
        if (b.lru_pos.contains(page)) {
            throw ContractViolation("commit: page already resident");
        }
        if (count == b.capacity) {
            throw PartialCommitError(
                std::vector<std::uint64_t>(missing.begin() + count, missing.end()));
        }
        if (b.free_slots.empty()) {
            const std::uint64_t victim = b.lru.back();
            b.lru.pop_back();
            b.lru_pos.erase(victim);
            const std::size_t slot = b.page_table.at(victim);
            b.page_table.erase(victim);
            b.slots[slot] = std::nullopt;
            b.free_slots.push_back(slot);
            ++b.stats.evictions;
            evicted.push_back(victim);
        }
        const std::size_t slot = b.free_slots.back();
        b.free_slots.pop_back();
        b.slots[slot] = page;
        b.page_table[page] = slot;
        b.lru.push_front(page);
        b.lru_pos[page] = b.lru.begin();
        ++count;
    }
    return evicted;
}

BankStats TieredKvStore::stats(BankId id) const { return bank(id).stats; }

void TieredKvStore::reset_stats() {
    for (auto& b : banks_) b.stats = BankStats{};
}

std::size_t TieredKvStore::resident_count(BankId id) const { return bank(id).page_table.size(); }

bool TieredKvStore::is_resident(BankId id, std::uint64_t page) const {
    return bank(id).page_table.contains(page);
}

std::vector<std::uint64_t> TieredKvStore::recency_order(BankId id) const {
    const Bank& b = bank(id);
    return {b.lru.begin(), b.lru.end()};
}

void TieredKvStore::check_consistency() const {
    for (const auto& b : banks_) {
        if (b.page_table.size() + b.free_slots.size() != b.capacity) {
            throw ContractViolation("kv store: slot accounting broken");
        }
        for (const auto& [page, slot] : b.page_table) {
            if (slot >= b.capacity || !b.slots[slot] || *b.slots[slot] != page) {
                throw ContractViolation("kv store: page table / slot mismatch");
            }
        }
        if (b.lru.size() != b.page_table.size() || b.lru_pos.size() != b.page_table.size()) {
            throw ContractViolation("kv store: LRU queue size mismatch");
        }
        for (std::uint64_t page : b.lru) {
            if (!b.page_table.contains(page)) {
                throw ContractViolation("kv store: LRU queue holds a non-resident page");
            }
        }
    }
}

std::span<const float> KvView::key_row(std::size_t head, std::size_t token) {
    account(token);
    return store_->host().k(layer_, head).row_span(token);
}

std::span<const float> KvView::value_row(std::size_t head, std::size_t token) {
    if (bank_ == BankId::Mask) {
        throw std::logic_error("KvView: mask bank views hold keys only");
    }
    account(token);
    return store_->host().v(layer_, head).row_span(token);
}

void KvView::begin_phase() {
    seen_this_phase_.clear();
    phase_accesses_ = 0;
    phase_hits_ = 0;
}

std::vector<std::uint64_t> KvView::drain_missing() {
    std::vector<std::uint64_t> out = std::move(pending_missing_);
    pending_missing_.clear();
    pending_set_.clear();
    return out;
}

void KvView::clear_touched() { touched_tokens_.clear(); }

void KvView::account(std::size_t token) {
    touched_tokens_.push_back(token);
    const std::uint64_t page = store_->page_of(layer_, token);
    if (!seen_this_phase_.insert(page).second) return;
    ++phase_accesses_;
    const std::uint64_t pages[1] = {page};
    const auto result = store_->access_pages(bank_, pages);
    if (result.resident.empty()) {
        if (pending_set_.insert(page).second) pending_missing_.push_back(page);
    } else {
        ++phase_hits_;
    }
}

}  // namespace hipprune
