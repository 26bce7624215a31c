#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "rafkit/errors.hpp"
#include "rafkit/feature_bank.hpp"
#include "rafkit/io_util.hpp"
#include "rafkit/rng.hpp"

using namespace raf;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "rafkit_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

// Random bank with float-representable features, so save/load round-trips
// compare equal at stored precision.
ExpressionBank random_bank(std::size_t identities, std::size_t frames, std::size_t dim,
                           std::uint64_t seed) {
    std::vector<BankEntry> entries;
    CounterRng rng(seed, stream_id(RngPurpose::Generic, 77));
    for (std::size_t id = 0; id < identities; ++id) {
        for (std::size_t f = 0; f < frames; ++f) {
            BankEntry e;
            e.identity_id = "id" + std::to_string(id);
            e.frame_id = "f" + std::to_string(f);
            for (std::size_t k = 0; k < dim; ++k) {
                e.feature.push_back(static_cast<float>(2.0 * rng.next_double() - 1.0));
            }
            entries.push_back(std::move(e));
        }
    }
    return ingest_records(std::move(entries), dim);
}

}  // namespace

TEST_CASE("ingest_records keeps order and counts") {
    auto bank = ingest_records({{"A", "f1", {0, 0, 1}}, {"B", "f1", {1, 0, 0}}}, 3);
    CHECK(bank.size() == 2);
    CHECK(bank.dim() == 3);
    CHECK(bank.entry(0).identity_id == "A");
    CHECK(bank.entry(1).identity_id == "B");
}

TEST_CASE("ingest_records rejects bad records") {
    CHECK_THROWS_WITH_AS(ingest_records({{"A", "f1", {0, 0}}, {"B", "f1", {1, 0, 0}}}, 3),
                         doctest::Contains("DimensionMismatch"), Error);
    CHECK_THROWS_WITH_AS(ingest_records({{"A", "f1", {0}}, {"A", "f1", {1}}}, 1),
                         doctest::Contains("DuplicateKey"), Error);
    CHECK_THROWS_WITH_AS(
        ingest_records({{"A", "f1", {std::numeric_limits<double>::quiet_NaN()}}}, 1),
        doctest::Contains("NonFiniteFeature"), Error);
    CHECK_THROWS_AS(ingest_records({{"", "f1", {0.5}}}, 1), Error);
}

TEST_CASE("subsample is deterministic and clamps") {
    auto bank = random_bank(1, 5, 4, 7);
    auto once = subsample_per_identity(bank, 2, 7);
    auto twice = subsample_per_identity(bank, 2, 7);
    REQUIRE(once.size() == 2);
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once.entry(i).frame_id == twice.entry(i).frame_id);
    }
    CHECK(subsample_per_identity(bank, 10, 3).size() == 5);
}

TEST_CASE("subsample keeps one frame per identity when asked") {
    auto bank = random_bank(3, 4, 2, 1);
    auto out = subsample_per_identity(bank, 1, 9);
    CHECK(out.size() == 3);
    std::set<std::string> identities;
    for (const auto& e : out.entries()) identities.insert(e.identity_id);
    CHECK(identities.size() == 3);
}

TEST_CASE("subsample never grows a bank and never drops an identity") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto bank = random_bank(4, 6, 3, seed);
        auto before = bank_stats(bank);
        auto out = subsample_per_identity(bank, 3, seed * 11 + 1);
        auto after = bank_stats(out);
        CHECK(after.identity_count == before.identity_count);
        for (const auto& [id, count] : after.frames_per_identity) {
            CHECK(count <= before.frames_per_identity.at(id));
            CHECK(count >= 1);
        }
        // Retained entries stay in bank order.
        std::size_t cursor = 0;
        for (const auto& e : out.entries()) {
            while (cursor < bank.size() &&
                   (bank.entry(cursor).identity_id != e.identity_id ||
                    bank.entry(cursor).frame_id != e.frame_id)) {
                ++cursor;
            }
            CHECK(cursor < bank.size());
        }
    }
}

TEST_CASE("bank_stats matches hand counts") {
    auto bank = ingest_records({{"A", "f1", {3, 4}}}, 2);
    auto stats = bank_stats(bank);
    CHECK(stats.identity_count == 1);
    REQUIRE(stats.mean_feature_norm.has_value());
    CHECK(*stats.mean_feature_norm == doctest::Approx(5.0));

    auto unit = ingest_records({{"A", "f1", {1, 0}}, {"A", "f2", {0, 1}}}, 2);
    auto unit_stats = bank_stats(unit);
    CHECK(unit_stats.frames_per_identity.at("A") == 2);
    CHECK(*unit_stats.mean_feature_norm == doctest::Approx(1.0));

    auto empty_stats = bank_stats(ExpressionBank{});
    CHECK(empty_stats.identity_count == 0);
    CHECK_FALSE(empty_stats.mean_feature_norm.has_value());
}

TEST_CASE("persist round trip is exact at stored precision") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto bank = random_bank(3, 5, 6, seed);
        auto path = temp_path("roundtrip_" + std::to_string(seed) + ".rafb");
        auto loaded = persist_roundtrip(bank, path);
        REQUIRE(loaded.size() == bank.size());
        REQUIRE(loaded.dim() == bank.dim());
        for (std::size_t i = 0; i < bank.size(); ++i) {
            CHECK(loaded.entry(i).identity_id == bank.entry(i).identity_id);
            CHECK(loaded.entry(i).frame_id == bank.entry(i).frame_id);
            for (std::size_t j = 0; j < bank.dim(); ++j) {
                CHECK(loaded.entry(i).feature[j] == bank.entry(i).feature[j]);
            }
        }
    }
}

TEST_CASE("loader rejects malformed files") {
    auto bank = random_bank(1, 2, 3, 5);
    auto path = temp_path("malformed.rafb");
    save_bank(bank, path);
    std::string bytes = read_file_bytes(path);

    SUBCASE("corrupted magic") {
        bytes[0] = 'X';
        atomic_write_file(path, bytes);
        CHECK_THROWS_WITH_AS(load_bank(path), doctest::Contains("BadMagic"), Error);
    }
    SUBCASE("future version") {
        bytes[4] = 99;
        atomic_write_file(path, bytes);
        CHECK_THROWS_WITH_AS(load_bank(path), doctest::Contains("VersionMismatch"), Error);
    }
    SUBCASE("truncated payload") {
        atomic_write_file(path, bytes.substr(0, bytes.size() - 5));
        CHECK_THROWS_WITH_AS(load_bank(path), doctest::Contains("TruncatedFile"), Error);
    }
}

TEST_CASE("csv and jsonl ingestion agree") {
    auto csv_path = temp_path("bank.csv");
    auto jsonl_path = temp_path("bank.jsonl");
    {
        std::ofstream csv(csv_path);
        csv << "identity_id,frame_id,f0,f1\n";
        csv << "A,f1,0.5,-1.25\n";
        csv << "B,f1,2,3\n";
        std::ofstream jsonl(jsonl_path);
        jsonl << R"({"identity_id":"A","frame_id":"f1","feature":[0.5,-1.25]})" << "\n";
        jsonl << R"({"identity_id":"B","frame_id":"f1","feature":[2,3]})" << "\n";
    }
    auto from_csv = ingest_file(csv_path, 2);
    auto from_jsonl = ingest_file(jsonl_path, 2);
    REQUIRE(from_csv.size() == 2);
    REQUIRE(from_jsonl.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(from_csv.entry(i).identity_id == from_jsonl.entry(i).identity_id);
        CHECK(from_csv.entry(i).feature == from_jsonl.entry(i).feature);
    }
    CHECK_THROWS_AS(ingest_csv(csv_path, 3), Error);
}
