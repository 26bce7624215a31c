#include "rafkit/augmentation.hpp"

#include <cmath>

#include "rafkit/errors.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {

void check_probability(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw bad_probability("p must lie in [0, 1]");
}

// Draw key for a frame's substitution sample: epoch in the high bits,
// frame position in the low 40, so (epoch, position) pairs never collide.
std::uint64_t substitute_draw_index(std::uint64_t epoch, std::uint64_t position) {
    return (epoch << 40) | position;
}

}  // namespace

RafPlanner::RafPlanner(std::vector<TrainingFrameFeature> frames, std::string subject_identity,
                       const Index* index, SubstituteMode mode)
    : frames_(std::move(frames)),
      subject_identity_(std::move(subject_identity)),
      index_(index),
      mode_(mode),
      cache_(frames_.size()) {}

const std::vector<NeighborResult>& RafPlanner::neighbor_list(std::size_t position) {
    auto& slot = cache_[position];
    if (!slot) {
        QueryConstraint constraint{subject_identity_};
        std::size_t k = mode_.kind == SubstituteMode::Kind::Top1 ? 1 : mode_.k;
        slot = index_->knn_search(frames_[position].native_feature, k, constraint);
    }
    return *slot;
}

AugmentationPlan RafPlanner::make_plan(double p, std::uint64_t epoch, std::uint64_t seed) {
    check_probability(p);
    AugmentationPlan plan;
    plan.epoch = epoch;
    plan.seed = seed;
    plan.p = p;
    plan.items.reserve(frames_.size());
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        const auto& frame = frames_[i];
        PlanItem item;
        item.frame_ref = frame.ref;
        CounterRng flag_rng(seed, stream_id(RngPurpose::Bernoulli, epoch, i));
        if (flag_rng.next_bernoulli(p)) {
            const auto& neighbors = neighbor_list(i);
            std::size_t pick = 0;
            if (mode_.kind == SubstituteMode::Kind::TopKUniform) {
                CounterRng draw_rng(
                    seed, stream_id(RngPurpose::TopKDraw, substitute_draw_index(epoch, i)));
                pick = draw_rng.next_below(neighbors.size());
            }
            item.source = ConditioningSource::Retrieved;
            item.neighbor = neighbors[pick];
            item.conditioning = index_->bank().entry(neighbors[pick].entry_index).feature;
        } else {
            item.source = ConditioningSource::Native;
            item.conditioning = frame.native_feature;
        }
        plan.items.push_back(std::move(item));
    }
    return plan;
}

AugmentationPlan make_plan_raf(const std::vector<TrainingFrameFeature>& frames,
                               const std::string& subject_identity, const Index& index,
                               double p, SubstituteMode mode, std::uint64_t epoch,
                               std::uint64_t seed) {
    RafPlanner planner(frames, subject_identity, &index, mode);
    return planner.make_plan(p, epoch, seed);
}

AugmentationPlan make_plan_noise(const std::vector<TrainingFrameFeature>& frames, double sigma,
                                 std::uint64_t epoch, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw bad_probability("sigma must be >= 0");
    AugmentationPlan plan;
    plan.epoch = epoch;
    plan.seed = seed;
    plan.items.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        PlanItem item;
        item.frame_ref = frames[i].ref;
        item.source = ConditioningSource::Noised;
        item.conditioning = frames[i].native_feature;
        CounterRng rng(seed, stream_id(RngPurpose::Noise, epoch, i));
        for (double& v : item.conditioning) v += sigma * rng.next_normal();
        plan.items.push_back(std::move(item));
    }
    return plan;
}

AugmentationPlan make_plan_vanilla(const std::vector<TrainingFrameFeature>& frames,
                                   std::uint64_t epoch, std::uint64_t seed) {
    AugmentationPlan plan;
    plan.epoch = epoch;
    plan.seed = seed;
    plan.p = 0.0;
    plan.items.reserve(frames.size());
    for (const auto& frame : frames) {
        plan.items.push_back({frame.ref, frame.native_feature, ConditioningSource::Native, {}});
    }
    return plan;
}

double combine_losses(double l_self, double l_raf, double p) {
    check_probability(p);
    return (1.0 - p) * l_self + p * l_raf;
}

}  // namespace raf
