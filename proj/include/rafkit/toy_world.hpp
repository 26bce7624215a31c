#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rafkit/feature_bank.hpp"
#include "rafkit/toy_model.hpp"

namespace raf {

struct SyntheticWorldConfig {
    std::size_t n_points = 128;
    std::size_t expr_dim = 8;
    std::size_t n_bank_identities = 20;
    double base_jitter = 0.04;      // per-point offset of bank identity rest shapes
    double amplitude_min = 0.8;     // per-identity expression amplitude range
    double amplitude_max = 1.2;
    double expr_scale = 0.35;       // magnitude of the shared basis directions
    double tau = 0.3;
    std::uint64_t seed = 0;
};

// Linear multi-identity generator: every identity shares one expression
// basis (so expression transfer is well-defined), scaled by a per-identity
// amplitude, on top of a per-identity rest shape. The basis directions are
// modulated by the landmark blend-weight field evaluated on the template,
// which keeps the generator inside the deformation model family: the
// subject (identity 0) uses the unjittered template, so an analytically
// chosen linear model reproduces it exactly under zero pose.
struct SyntheticWorld {
    SyntheticWorldConfig config;
    std::vector<double> template_points;          // n x 2
    std::vector<double> landmarks;                // m x 2
    std::vector<double> basis;                    // expr_dim x n x 2
    std::vector<std::string> identity_ids;        // [0] = subject
    std::vector<double> identity_bases;           // identities x n x 2
    std::vector<double> amplitudes;               // per identity

    std::size_t identity_index(const std::string& identity_id) const;
    const std::string& subject_identity() const { return identity_ids.front(); }
};

SyntheticWorld make_world(const SyntheticWorldConfig& config);

// target_points = rigid(pose) applied to base + amplitude * basis * code;
// target_image renders them. Deterministic in all inputs.
ToyFrame synth_generate(const SyntheticWorld& world, const std::string& identity_id,
                        const FeatureVector& expression_code, const PoseCode& pose_code,
                        const RenderConfig& render);

struct SplitConfig {
    // Axis-aligned code regions: train must be a strict subset of heldout.
    double train_lo = -1.0, train_hi = 0.0;
    double heldout_lo = -1.0, heldout_hi = 1.0;
    std::size_t train_frames = 64;
    std::size_t heldout_frames = 64;
    std::size_t frames_per_identity = 200;  // bank entries per identity
    std::size_t train_clusters = 3;
    double train_cluster_sigma = 0.12;
    double bank_cluster_sigma = 0.4;        // spread of one identity's codes
    double pose_scale = 0.0;                // 0 keeps the generator model-realizable
    std::uint64_t seed = 0;
};

struct ExperimentSplit {
    std::string subject_identity;
    std::vector<ToyFrame> train_frames;    // tag "train", narrow code mixture
    std::vector<ToyFrame> heldout_frames;  // tag "heldout", broad codes
    ExpressionBank bank;                   // cross-identity codes, subject excluded
};

// Subject train codes come from a narrow Gaussian mixture inside the train
// region; held-out codes are uniform over the held-out region; bank codes
// cluster per identity so that identity subsets control expression
// coverage.
ExperimentSplit make_experiment_split(const SyntheticWorld& world, const SplitConfig& split,
                                      const RenderConfig& render);

// Points initialized at the subject's rest shape with the world's
// landmarks; features seeded separately.
CanonicalPointSet subject_canonical_points(const SyntheticWorld& world, std::size_t feature_dim,
                                           std::uint64_t seed);

}  // namespace raf
