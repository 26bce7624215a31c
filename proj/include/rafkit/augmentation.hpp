#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rafkit/retrieval.hpp"

namespace raf {

struct FrameRef {
    std::string identity_id;
    std::string frame_id;

    bool operator==(const FrameRef&) const = default;
};

struct TrainingFrameFeature {
    FrameRef ref;
    FeatureVector native_feature;
};

enum class ConditioningSource { Native, Retrieved, Noised };

struct PlanItem {
    FrameRef frame_ref;
    FeatureVector conditioning;
    ConditioningSource source = ConditioningSource::Native;
    // Set only for Retrieved items.
    std::optional<NeighborResult> neighbor;
};

// One epoch's conditioning assignment, one item per training frame in frame
// order. Regenerating with the same (epoch, seed, p) reproduces the plan
// bit-identically; substitution flags are keyed per frame position, so one
// frame's decision never depends on another frame.
struct AugmentationPlan {
    std::uint64_t epoch = 0;
    std::uint64_t seed = 0;
    double p = 0.0;
    std::vector<PlanItem> items;
};

struct LossWeights {
    double lambda_l1 = 1.0;
    double lambda_perceptual = 0.1;
};

// Builds per-epoch plans against one bank index, caching each frame's
// retrieved neighbor list across epochs (Top1 reuses the cached head;
// TopKUniform re-draws the selection from the cached list each epoch).
class RafPlanner {
public:
    RafPlanner(std::vector<TrainingFrameFeature> frames, std::string subject_identity,
               const Index* index, SubstituteMode mode);

    AugmentationPlan make_plan(double p, std::uint64_t epoch, std::uint64_t seed);

    const std::vector<TrainingFrameFeature>& frames() const noexcept { return frames_; }

private:
    const std::vector<NeighborResult>& neighbor_list(std::size_t position);

    std::vector<TrainingFrameFeature> frames_;
    std::string subject_identity_;
    const Index* index_;
    SubstituteMode mode_;
    std::vector<std::optional<std::vector<NeighborResult>>> cache_;
};

AugmentationPlan make_plan_raf(const std::vector<TrainingFrameFeature>& frames,
                               const std::string& subject_identity, const Index& index,
                               double p, SubstituteMode mode, std::uint64_t epoch,
                               std::uint64_t seed);

AugmentationPlan make_plan_noise(const std::vector<TrainingFrameFeature>& frames, double sigma,
                                 std::uint64_t epoch, std::uint64_t seed);

AugmentationPlan make_plan_vanilla(const std::vector<TrainingFrameFeature>& frames,
                                   std::uint64_t epoch, std::uint64_t seed);

// (1-p) * l_self + p * l_raf.
double combine_losses(double l_self, double l_raf, double p);

}  // namespace raf
