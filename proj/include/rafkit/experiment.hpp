#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rafkit/coverage.hpp"
#include "rafkit/toy_model.hpp"
#include "rafkit/toy_world.hpp"

namespace raf {

// One benchmark condition: how the conditioning is augmented during
// training and which bank serves retrieval.
struct ExperimentCondition {
    std::string name;
    TrainConfig::Augment augment = TrainConfig::Augment::Vanilla;
    double p = 0.5;
    double sigma = 0.08;
    SubstituteMode mode = SubstituteMode::top1();
    bool half_bank = false;
};

struct ExperimentConfig {
    SyntheticWorldConfig world;
    SplitConfig split;
    RenderConfig render;
    std::size_t feature_dim = 8;  // d_g
    std::size_t epochs = 300;
    double learning_rate = 0.05;
    LossWeights loss_weights;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    CoverageConfig coverage;
    std::vector<ExperimentCondition> conditions;  // empty -> default five
};

std::vector<ExperimentCondition> default_conditions();

struct ExperimentRun {
    std::string condition;
    std::uint64_t seed = 0;
    double final_train_loss = 0.0;
    double heldout_image_loss = 0.0;
    double heldout_point_rmse = 0.0;
    CoveragePair coverage;
};

struct ExperimentSummary {
    std::vector<ExperimentRun> runs;

    double mean_rmse(const std::string& condition) const;
    double mean_image_loss(const std::string& condition) const;
    const ExperimentRun& run(const std::string& condition, std::uint64_t seed) const;
};

// For each seed: build a fresh world + split, then train/evaluate every
// condition from the same initialization. Deterministic end to end.
ExperimentSummary experiment_suite(const ExperimentConfig& config);

// Identity subset used by half-bank conditions: a seeded draw of half the
// bank's identities.
ExpressionBank restrict_to_half_identities(const ExpressionBank& bank, std::uint64_t seed);

}  // namespace raf
