#include "rafkit/feature_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "rafkit/errors.hpp"
#include "rafkit/io_util.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {
constexpr char kMagic[4] = {'R', 'A', 'F', 'B'};
constexpr std::uint32_t kFormatVersion = 1;
}  // namespace

ExpressionBank::ExpressionBank(std::size_t dim, std::vector<BankEntry> entries)
    : dim_(dim), entries_(std::move(entries)) {}

ExpressionBank ingest_records(std::vector<BankEntry> records, std::size_t dim) {
    if (dim < 1) throw dimension_mismatch("bank dimension must be >= 1");
    std::unordered_set<std::string> seen;
    seen.reserve(records.size());
    for (const auto& rec : records) {
        if (rec.identity_id.empty() || rec.frame_id.empty()) {
            throw Error(ErrorCategory::Data, "EmptyToken", "empty identity_id or frame_id");
        }
        if (rec.feature.size() != dim) {
            throw dimension_mismatch("feature length " + std::to_string(rec.feature.size()) +
                                     " for (" + rec.identity_id + "," + rec.frame_id +
                                     "), expected " + std::to_string(dim));
        }
        for (double v : rec.feature) {
            if (!std::isfinite(v)) {
                throw non_finite_feature("non-finite value in (" + rec.identity_id + "," +
                                         rec.frame_id + ")");
            }
        }
        std::string key = rec.identity_id + "\x1f" + rec.frame_id;
        if (!seen.insert(std::move(key)).second) {
            throw duplicate_key("(" + rec.identity_id + "," + rec.frame_id + ") repeats");
        }
    }
    return ExpressionBank(dim, std::move(records));
}

ExpressionBank subsample_per_identity(const ExpressionBank& bank, std::size_t per_identity,
                                      std::uint64_t seed) {
    if (per_identity < 1) throw usage_error("per_identity must be >= 1");
    if (bank.empty()) return bank;

    // Entry indices per identity, in bank order.
    std::unordered_map<std::string, std::vector<std::size_t>> by_identity;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        by_identity[bank.entry(i).identity_id].push_back(i);
    }

    std::vector<bool> keep(bank.size(), false);
    for (auto& [identity, indices] : by_identity) {
        if (indices.size() <= per_identity) {
            for (std::size_t i : indices) keep[i] = true;
            continue;
        }
        // Partial Fisher-Yates over this identity's slots; keyed by the
        // identity so the draw is independent of map iteration order.
        CounterRng rng(seed, stream_id(RngPurpose::Subsample, fnv1a(identity)));
        std::vector<std::size_t> slots(indices.size());
        std::iota(slots.begin(), slots.end(), 0);
        for (std::size_t k = 0; k < per_identity; ++k) {
            std::size_t j = k + rng.next_below(slots.size() - k);
            std::swap(slots[k], slots[j]);
            keep[indices[slots[k]]] = true;
        }
    }

    std::vector<BankEntry> kept;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        if (keep[i]) kept.push_back(bank.entry(i));
    }
    return ExpressionBank(bank.dim(), std::move(kept));
}

BankStats bank_stats(const ExpressionBank& bank) {
    BankStats stats;
    if (bank.empty()) return stats;
    double norm_sum = 0.0;
    for (const auto& e : bank.entries()) {
        stats.frames_per_identity[e.identity_id] += 1;
        double sq = 0.0;
        for (double v : e.feature) sq += v * v;
        norm_sum += std::sqrt(sq);
    }
    stats.identity_count = stats.frames_per_identity.size();
    stats.mean_feature_norm = norm_sum / static_cast<double>(bank.size());
    return stats;
}

void save_bank(const ExpressionBank& bank, const std::string& path) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(bank.dim()));
    w.u64(bank.size());
    w.u64(2 * bank.size());  // string-table count: identity + frame per entry
    for (const auto& e : bank.entries()) {
        w.lp_string(e.identity_id);
        w.lp_string(e.frame_id);
    }
    for (const auto& e : bank.entries()) {
        for (double v : e.feature) w.f32(static_cast<float>(v));
    }
    atomic_write_file(path, w.take());
}

ExpressionBank load_bank(const std::string& path) {
    std::string data = read_file_bytes(path);
    if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw bad_magic(path + " is not a RAFB bank file");
    }
    ByteReader r(data);
    char magic[4];
    r.bytes(magic, 4);
    std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw version_mismatch("bank format version " + std::to_string(version) +
                               ", expected " + std::to_string(kFormatVersion));
    }
    std::uint32_t dim = r.u32();
    std::uint64_t count = r.u64();
    std::uint64_t string_count = r.u64();
    if (string_count != 2 * count) {
        throw truncated_file("string table count mismatch");
    }
    std::vector<BankEntry> entries(count);
    for (auto& e : entries) {
        e.identity_id = r.lp_string();
        e.frame_id = r.lp_string();
    }
    for (auto& e : entries) {
        e.feature.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) e.feature[j] = static_cast<double>(r.f32());
    }
    return ExpressionBank(dim, std::move(entries));
}

ExpressionBank persist_roundtrip(const ExpressionBank& bank, const std::string& path) {
    save_bank(bank, path);
    return load_bank(path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_number(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCategory::Data, "BadNumber", "cannot parse '" + s + "' in " + where);
    }
}

}  // namespace

ExpressionBank ingest_csv(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw truncated_file(path + " is empty");
    auto header = split_csv_line(line);
    if (header.size() != dim + 2 || header[0] != "identity_id" || header[1] != "frame_id") {
        throw dimension_mismatch(path + ": expected header identity_id,frame_id,f0,...,f" +
                                 std::to_string(dim - 1));
    }
    std::vector<BankEntry> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != dim + 2) {
            throw dimension_mismatch(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(dim + 2) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        BankEntry e;
        e.identity_id = fields[0];
        e.frame_id = fields[1];
        e.feature.reserve(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            e.feature.push_back(
                parse_number(fields[j + 2], path + ":" + std::to_string(lineno)));
        }
        records.push_back(std::move(e));
    }
    return ingest_records(std::move(records), dim);
}

ExpressionBank ingest_jsonl(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::vector<BankEntry> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCategory::Data, "BadJson",
                        path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        if (!obj.contains("identity_id") || !obj.contains("frame_id") ||
            !obj.contains("feature")) {
            throw Error(ErrorCategory::Data, "BadJson",
                        path + ":" + std::to_string(lineno) +
                            ": need identity_id, frame_id, feature");
        }
        BankEntry e;
        e.identity_id = obj["identity_id"].get<std::string>();
        e.frame_id = obj["frame_id"].get<std::string>();
        e.feature = obj["feature"].get<std::vector<double>>();
        records.push_back(std::move(e));
    }
    return ingest_records(std::move(records), dim);
}

ExpressionBank ingest_file(const std::string& path, std::size_t dim) {
    auto ends_with = [&](const char* suffix) {
        std::string s(suffix);
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".jsonl") || ends_with(".ndjson")) return ingest_jsonl(path, dim);
    return ingest_csv(path, dim);
}

}  // namespace raf
