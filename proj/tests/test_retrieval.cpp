#include <doctest.h>

#include <cmath>
#include <map>

#include "rafkit/errors.hpp"
#include "rafkit/retrieval.hpp"
#include "rafkit/rng.hpp"

using namespace raf;

namespace {

ExpressionBank random_bank(std::size_t identities, std::size_t frames, std::size_t dim,
                           std::uint64_t seed) {
    std::vector<BankEntry> entries;
    CounterRng rng(seed, stream_id(RngPurpose::Generic, 101));
    for (std::size_t id = 0; id < identities; ++id) {
        for (std::size_t f = 0; f < frames; ++f) {
            BankEntry e;
            e.identity_id = "id" + std::to_string(id);
            e.frame_id = "f" + std::to_string(f);
            for (std::size_t k = 0; k < dim; ++k) e.feature.push_back(rng.next_normal());
            entries.push_back(std::move(e));
        }
    }
    return ingest_records(std::move(entries), dim);
}

FeatureVector random_query(std::size_t dim, CounterRng& rng) {
    FeatureVector q(dim);
    for (double& v : q) v = rng.next_normal();
    return q;
}

}  // namespace

TEST_CASE("exclusion constraint forces the other identity") {
    auto bank = ingest_records(
        {{"A", "f1", {0, 0}}, {"B", "f1", {1, 0}}, {"A", "f2", {0.1, 0}}}, 2);
    Index index(bank);
    auto results = index.knn_search({0, 0}, 1, QueryConstraint{"A"});
    REQUIRE(results.size() == 1);
    CHECK(bank.entry(results[0].entry_index).identity_id == "B");
    CHECK(results[0].distance == doctest::Approx(1.0));
}

TEST_CASE("ties break lexicographically by frame id") {
    auto bank = ingest_records({{"B", "f2", {1, 0}}, {"B", "f1", {-1, 0}}}, 2);
    Index index(bank);
    auto results = index.knn_search({0, 0}, 2, QueryConstraint{});
    REQUIRE(results.size() == 2);
    CHECK(bank.entry(results[0].entry_index).frame_id == "f1");
    CHECK(bank.entry(results[1].entry_index).frame_id == "f2");
    CHECK(results[0].distance == results[1].distance);
}

TEST_CASE("excluding the only identity is an error") {
    auto bank = ingest_records({{"A", "f1", {0.0}}, {"A", "f2", {1.0}}}, 1);
    Index index(bank);
    CHECK_THROWS_WITH_AS(index.knn_search({0.0}, 1, QueryConstraint{"A"}),
                         doctest::Contains("InsufficientCandidates"), Error);
    CHECK_THROWS_WITH_AS(brute_force_knn(bank, {0.0}, 1, QueryConstraint{"A"}),
                         doctest::Contains("InsufficientCandidates"), Error);
}

TEST_CASE("empty bank cannot be indexed, singleton answers everything") {
    CHECK_THROWS_WITH_AS(Index{ExpressionBank{}}, doctest::Contains("EmptyBank"), Error);
    auto one = ingest_records({{"A", "f1", {2.0, 0.0}}}, 2);
    Index index(one);
    auto results = index.knn_search({0, 0}, 1, QueryConstraint{});
    CHECK(results[0].entry_index == 0);
    CHECK(results[0].distance == doctest::Approx(2.0));
}

TEST_CASE("dimension mismatch is rejected") {
    auto bank = random_bank(2, 3, 4, 1);
    Index index(bank);
    CHECK_THROWS_WITH_AS(index.knn_search({0, 0}, 1, QueryConstraint{}),
                         doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("index equals the brute-force oracle on random workloads") {
    auto bank = random_bank(25, 40, 8, 3);
    Index index(bank);
    CounterRng rng(11, stream_id(RngPurpose::Generic, 5));
    for (int trial = 0; trial < 200; ++trial) {
        auto query = random_query(8, rng);
        std::size_t k = 1 + rng.next_below(12);
        QueryConstraint constraint;
        if (rng.next_bernoulli(0.5)) {
            constraint.exclude_identity = "id" + std::to_string(rng.next_below(25));
        }
        auto fast = index.knn_search(query, k, constraint);
        auto slow = brute_force_knn(bank, query, k, constraint);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i) {
            CHECK(fast[i].entry_index == slow[i].entry_index);
            CHECK(fast[i].distance == slow[i].distance);
        }
    }
}

TEST_CASE("brute force results are sorted and complete at the boundary") {
    auto bank = random_bank(10, 10, 6, 9);
    CounterRng rng(4, stream_id(RngPurpose::Generic, 6));
    for (int trial = 0; trial < 50; ++trial) {
        auto query = random_query(6, rng);
        auto results = brute_force_knn(bank, query, 20, QueryConstraint{});
        for (std::size_t i = 1; i < results.size(); ++i) {
            CHECK(results[i - 1].distance <= results[i].distance);
        }
    }
    // k equal to the candidate count returns every candidate.
    auto all = brute_force_knn(bank, random_query(6, rng), bank.size(), QueryConstraint{});
    CHECK(all.size() == bank.size());
}

TEST_CASE("adding a strictly farther entry leaves the top-k unchanged") {
    auto bank = random_bank(5, 8, 4, 2);
    Index index(bank);
    CounterRng rng(8, stream_id(RngPurpose::Generic, 7));
    auto query = random_query(4, rng);
    auto before = index.knn_search(query, 5, QueryConstraint{});

    auto entries = bank.entries();
    BankEntry far;
    far.identity_id = "zz";
    far.frame_id = "far";
    far.feature.assign(4, 1000.0);
    entries.push_back(far);
    auto grown = ingest_records(std::move(entries), 4);
    Index grown_index(grown);
    auto after = grown_index.knn_search(query, 5, QueryConstraint{});
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].entry_index == after[i].entry_index);
        CHECK(before[i].distance == after[i].distance);
    }
}

TEST_CASE("positive scaling preserves the returned indices") {
    auto bank = random_bank(6, 6, 5, 4);
    CounterRng rng(5, stream_id(RngPurpose::Generic, 8));
    auto query = random_query(5, rng);

    auto scaled_entries = bank.entries();
    for (auto& e : scaled_entries) {
        for (double& v : e.feature) v *= 3.5;
    }
    auto scaled_bank = ingest_records(std::move(scaled_entries), 5);
    FeatureVector scaled_query = query;
    for (double& v : scaled_query) v *= 3.5;

    Index index(bank), scaled_index(scaled_bank);
    auto base = index.knn_search(query, 7, QueryConstraint{});
    auto scaled = scaled_index.knn_search(scaled_query, 7, QueryConstraint{});
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].entry_index == scaled[i].entry_index);
    }
}

TEST_CASE("every excluded-identity result respects the constraint") {
    auto bank = random_bank(8, 12, 4, 6);
    Index index(bank);
    CounterRng rng(6, stream_id(RngPurpose::Generic, 9));
    for (int trial = 0; trial < 40; ++trial) {
        auto query = random_query(4, rng);
        std::string excluded = "id" + std::to_string(rng.next_below(8));
        auto results = index.knn_search(query, 10, QueryConstraint{excluded});
        for (const auto& r : results) {
            CHECK(bank.entry(r.entry_index).identity_id != excluded);
        }
    }
}

TEST_CASE("sample_substitute top1 equals the knn head and repeats exactly") {
    auto bank = random_bank(6, 10, 4, 8);
    Index index(bank);
    CounterRng rng(7, stream_id(RngPurpose::Generic, 10));
    auto query = random_query(4, rng);

    auto [feat, pick] = sample_substitute(index, query, "id0", SubstituteMode::top1(), 1, 0);
    auto head = index.knn_search(query, 1, QueryConstraint{"id0"}).front();
    CHECK(pick.entry_index == head.entry_index);
    CHECK(feat == bank.entry(head.entry_index).feature);

    auto a = sample_substitute(index, query, "id0", SubstituteMode::top_k_uniform(5), 9, 123);
    auto b = sample_substitute(index, query, "id0", SubstituteMode::top_k_uniform(5), 9, 123);
    CHECK(a.second.entry_index == b.second.entry_index);
}

TEST_CASE("top-5 uniform draws hit each neighbor about a fifth of the time") {
    auto bank = random_bank(6, 10, 4, 12);
    Index index(bank);
    CounterRng rng(13, stream_id(RngPurpose::Generic, 11));
    auto query = random_query(4, rng);
    auto top5 = index.knn_search(query, 5, QueryConstraint{"id0"});

    std::map<std::size_t, int> counts;
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        auto [feat, pick] =
            sample_substitute(index, query, "id0", SubstituteMode::top_k_uniform(5), 21, d);
        counts[pick.entry_index]++;
    }
    REQUIRE(counts.size() == 5);
    for (const auto& r : top5) {
        double freq = counts[r.entry_index] / static_cast<double>(draws);
        CHECK(std::abs(freq - 0.2) < 0.02);
    }
}
