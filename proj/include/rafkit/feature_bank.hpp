#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace raf {

// Expression coefficient vector. Stored as f32 on disk, held as f64 in
// memory; all metric accumulation runs in f64.
using FeatureVector = std::vector<double>;

struct BankEntry {
    std::string identity_id;
    std::string frame_id;
    FeatureVector feature;
};

// Identity-tagged expression feature collection. Immutable after
// construction/load; concurrent reads are safe.
class ExpressionBank {
public:
    ExpressionBank() = default;
    ExpressionBank(std::size_t dim, std::vector<BankEntry> entries);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    const BankEntry& entry(std::size_t i) const { return entries_[i]; }
    const std::vector<BankEntry>& entries() const noexcept { return entries_; }
    std::span<const double> feature(std::size_t i) const {
        return {entries_[i].feature.data(), dim_};
    }

private:
    std::size_t dim_ = 0;
    std::vector<BankEntry> entries_;
};

struct BankStats {
    std::size_t identity_count = 0;
    std::map<std::string, std::size_t> frames_per_identity;
    // Arithmetic mean of Euclidean norms; absent for an empty bank.
    std::optional<double> mean_feature_norm;
};

// Builds a bank from records in input order. Throws DimensionMismatch,
// NonFiniteFeature, or DuplicateKey on the first violating record.
ExpressionBank ingest_records(std::vector<BankEntry> records, std::size_t dim);

// Keeps at most per_identity frames for each identity, chosen by a seeded
// uniform draw without replacement. Retained entries stay in bank order;
// the draw is keyed by (seed, identity) so it does not depend on how other
// identities are processed.
ExpressionBank subsample_per_identity(const ExpressionBank& bank, std::size_t per_identity,
                                      std::uint64_t seed);

BankStats bank_stats(const ExpressionBank& bank);

// Binary bank format "RAFB": little-endian header (version u32 = 1, dim u32,
// entry count u64), a count-prefixed string table of length-prefixed
// identity/frame ids in entry order, then the feature matrix row-major f32.
void save_bank(const ExpressionBank& bank, const std::string& path);
ExpressionBank load_bank(const std::string& path);

// save + load, the round-trip contract in one call.
ExpressionBank persist_roundtrip(const ExpressionBank& bank, const std::string& path);

// CSV with header `identity_id,frame_id,f0,...,f{d-1}`, or JSON-lines with
// fields identity_id / frame_id / feature. Picks the parser by extension
// (.jsonl/.ndjson vs anything else).
ExpressionBank ingest_file(const std::string& path, std::size_t dim);
ExpressionBank ingest_csv(const std::string& path, std::size_t dim);
ExpressionBank ingest_jsonl(const std::string& path, std::size_t dim);

}  // namespace raf
