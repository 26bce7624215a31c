#include "rafkit/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "rafkit/errors.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

// Accumulates until the partial sum exceeds `bound`; returns the partial
// sum either way. Sums of squares only grow, so a partial > bound proves
// the full distance is > bound without changing any fully-computed value.
double squared_distance_bounded(const double* a, const double* b, std::size_t dim,
                                double bound) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double diff = a[j] - b[j];
        acc += diff * diff;
        if (acc > bound) return acc;
    }
    return acc;
}

// Sort key: (distance, identity_id, frame_id) ascending.
struct Candidate {
    double sq_dist;
    std::size_t entry_index;
};

struct CandidateLess {
    const ExpressionBank* bank;
    bool operator()(const Candidate& a, const Candidate& b) const {
        if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
        const auto& ea = bank->entry(a.entry_index);
        const auto& eb = bank->entry(b.entry_index);
        if (ea.identity_id != eb.identity_id) return ea.identity_id < eb.identity_id;
        return ea.frame_id < eb.frame_id;
    }
};

void check_query(const ExpressionBank& bank, const FeatureVector& query, std::size_t k) {
    if (k < 1) throw usage_error("k must be >= 1");
    if (query.size() != bank.dim()) {
        throw dimension_mismatch("query dimension " + std::to_string(query.size()) +
                                 ", bank dimension " + std::to_string(bank.dim()));
    }
}

std::vector<NeighborResult> finalize(std::vector<Candidate> candidates,
                                     const ExpressionBank& bank) {
    std::sort(candidates.begin(), candidates.end(), CandidateLess{&bank});
    std::vector<NeighborResult> results;
    results.reserve(candidates.size());
    for (const auto& c : candidates) {
        results.push_back({c.entry_index, std::sqrt(c.sq_dist)});
    }
    return results;
}

}  // namespace

Index::Index(const ExpressionBank& bank) : bank_(&bank) {
    if (bank.empty()) throw empty_bank("cannot index an empty bank");
    features_.reserve(bank.size() * bank.dim());
    for (const auto& e : bank.entries()) {
        features_.insert(features_.end(), e.feature.begin(), e.feature.end());
    }
}

Index build_index(const ExpressionBank& bank) { return Index(bank); }

std::vector<NeighborResult> Index::knn_search(const FeatureVector& query, std::size_t k,
                                              const QueryConstraint& constraint) const {
    const ExpressionBank& bank = *bank_;
    check_query(bank, query, k);

    CandidateLess less{&bank};
    // Max-heap of the current best k, worst on top.
    std::vector<Candidate> heap;
    heap.reserve(k + 1);
    const std::size_t dim = bank.dim();
    std::size_t admitted = 0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        if (!constraint.admits(bank.entry(i).identity_id)) continue;
        ++admitted;
        const double* row = features_.data() + i * dim;
        if (heap.size() < k) {
            heap.push_back({squared_distance(query.data(), row, dim), i});
            std::push_heap(heap.begin(), heap.end(), less);
            continue;
        }
        double bound = heap.front().sq_dist;
        double sq = squared_distance_bounded(query.data(), row, dim, bound);
        if (sq > bound) continue;
        Candidate cand{sq, i};
        if (less(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), less);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), less);
        }
    }
    if (admitted < k) {
        throw insufficient_candidates(std::to_string(admitted) +
                                      " candidates satisfy the constraint, need " +
                                      std::to_string(k));
    }
    return finalize(std::move(heap), bank);
}

std::vector<NeighborResult> brute_force_knn(const ExpressionBank& bank,
                                            const FeatureVector& query, std::size_t k,
                                            const QueryConstraint& constraint) {
    check_query(bank, query, k);
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto& e = bank.entry(i);
        if (!constraint.admits(e.identity_id)) continue;
        candidates.push_back({squared_distance(query.data(), e.feature.data(), bank.dim()), i});
    }
    if (candidates.size() < k) {
        throw insufficient_candidates(std::to_string(candidates.size()) +
                                      " candidates satisfy the constraint, need " +
                                      std::to_string(k));
    }
    auto results = finalize(std::move(candidates), bank);
    results.resize(k);
    return results;
}

std::pair<FeatureVector, NeighborResult> sample_substitute(
    const Index& index, const FeatureVector& query,
    const std::optional<std::string>& exclude_identity, SubstituteMode mode,
    std::uint64_t seed, std::uint64_t draw_index) {
    QueryConstraint constraint{exclude_identity};
    if (mode.kind == SubstituteMode::Kind::Top1) {
        auto results = index.knn_search(query, 1, constraint);
        const auto& top = results.front();
        const auto& feat = index.bank().entry(top.entry_index).feature;
        return {feat, top};
    }
    if (mode.k < 1) throw usage_error("TopKUniform needs k >= 1");
    auto results = index.knn_search(query, mode.k, constraint);
    CounterRng rng(seed, stream_id(RngPurpose::TopKDraw, draw_index));
    const auto& pick = results[rng.next_below(results.size())];
    return {index.bank().entry(pick.entry_index).feature, pick};
}

}  // namespace raf
