#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rafkit/augmentation.hpp"
#include "rafkit/feature_bank.hpp"
#include "rafkit/retrieval.hpp"

namespace raf {

// Canonical 2-D point set: rest positions in [-1,1]^2, one learned feature
// per point, and the landmark anchors the blend weights are measured
// against.
struct CanonicalPointSet {
    std::size_t n = 0;
    std::size_t feature_dim = 0;            // d_g
    std::vector<double> positions;          // n x 2
    std::vector<double> features;           // n x d_g
    std::vector<double> landmarks;          // m x 2

    std::size_t landmark_count() const noexcept { return landmarks.size() / 2; }
};

// Two hidden layers of fixed width; tanh unless the linearized variant is
// selected (identity activation, used by the analytic oracle and the exact
// gradient check).
struct Mlp {
    std::size_t in_dim = 0;
    std::size_t hidden = 64;
    std::size_t out_dim = 2;
    std::vector<double> w1, b1;  // hidden x in, hidden
    std::vector<double> w2, b2;  // hidden x hidden, hidden
    std::vector<double> w3, b3;  // out x hidden, out

    std::size_t parameter_count() const noexcept {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }
};

struct DeformationModel {
    std::size_t expr_dim = 8;  // d_e
    static constexpr std::size_t kPoseDim = 3;
    Mlp exp_net;               // input d_g + d_e
    Mlp pose_net;              // input d_g + 3
    double tau = 0.3;
    bool linear_activation = false;
};

using PoseCode = std::array<double, 3>;  // rotation angle (rad), translation x/y

struct ToyFrame {
    FrameRef ref;
    std::string split_tag;                 // "train" | "heldout"
    FeatureVector expression_code;
    PoseCode pose_code{0.0, 0.0, 0.0};
    std::vector<double> target_image;      // G x G
    std::vector<double> target_points;     // n x 2
};

struct RenderConfig {
    std::size_t grid = 32;        // G, even
    double kernel_sigma = 1.2;    // pixels
};

// Seeded init: weights uniform scaled by 1/sqrt(fan-in), biases zero,
// point features 0.1 * standard normal.
DeformationModel init_model(std::size_t expr_dim, std::size_t feature_dim, double tau,
                            std::uint64_t seed, bool linear_activation = false);
void init_point_features(CanonicalPointSet& points, std::uint64_t seed);

// w_i = exp(-min_j |x0_i - l_j|^2 / tau^2), in (0, 1].
std::vector<double> blend_weights(const CanonicalPointSet& points, double tau);

// x_i = x0_i + w_i * f_exp(g_i, e) + (1 - w_i) * f_pose(g_i, p).
std::vector<double> deform(const DeformationModel& model, const CanonicalPointSet& points,
                           const FeatureVector& expression, const PoseCode& pose);

// image[v*G+u] = sum_i exp(-|pix(u,v) - pos_i|^2 / (2 sigma^2)), positions
// mapped from [-1,1] scene units onto pixel centers.
std::vector<double> render_points(const std::vector<double>& positions,
                                  const RenderConfig& config);

// lambda_l1 * meanL1 + lambda_perceptual * meanL1 after 2x2 average pooling.
double recon_loss(const std::vector<double>& pred, const std::vector<double>& target,
                  const LossWeights& weights);

// Flat view of every trainable scalar: both nets, canonical positions,
// point features. Gradients come back in the same layout.
struct ModelGradients {
    std::vector<double> exp_net, pose_net;  // per-net flattened weights
    std::vector<double> positions;          // n x 2
    std::vector<double> features;           // n x d_g
};

// Loss and (optionally) gradients for a single conditioned frame; the
// target is always the frame's own image.
double frame_loss(const DeformationModel& model, const CanonicalPointSet& points,
                  const FeatureVector& conditioning, const PoseCode& pose,
                  const std::vector<double>& target_image, const LossWeights& weights,
                  const RenderConfig& render, ModelGradients* grads);

struct TrainConfig {
    enum class Augment { Vanilla, Noise, Raf };
    Augment augment = Augment::Vanilla;
    double p = 0.5;
    double sigma = 0.08;
    SubstituteMode mode = SubstituteMode::top1();
    std::size_t epochs = 200;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    LossWeights loss_weights;
    RenderConfig render;
    // Test hook: sees every (epoch, frame position, plan item, frame).
    std::function<void(std::uint64_t, std::size_t, const PlanItem&, const ToyFrame&)>
        step_observer;
};

struct TrainResult {
    std::vector<double> loss_curve;  // mean train loss per epoch
};

// Full-batch gradient descent with per-epoch augmentation plans. The
// supervision target is always the frame's original image; only the
// conditioning follows the plan. Raf needs `bank_index`; frames tagged
// "heldout" are rejected.
TrainResult train_toy(DeformationModel& model, CanonicalPointSet& points,
                      const std::vector<ToyFrame>& train_frames, const Index* bank_index,
                      const std::string& subject_identity, const TrainConfig& config);

struct EvalResult {
    double image_loss_mean = 0.0;
    double point_rmse_mean = 0.0;
    std::vector<double> per_frame_image_loss;
    std::vector<double> per_frame_point_rmse;
};

// Conditions on each frame's true codes and compares against its targets.
EvalResult evaluate_heldout(const DeformationModel& model, const CanonicalPointSet& points,
                            const std::vector<ToyFrame>& frames, const LossWeights& weights,
                            const RenderConfig& render);

// Central-difference check of every trainable scalar on one frame.
// Returns max over parameters of |ga - gfd| / max(1e-8, |ga| + |gfd|).
double grad_check(const DeformationModel& model, const CanonicalPointSet& points,
                  const ToyFrame& frame, double eps, const LossWeights& weights,
                  const RenderConfig& render);

// Model checkpoint ("RAFM"): nets, canonical points, tau, plus a JSON
// config echo. Weights stored as f64, so save/load is bit-exact.
void save_model(const DeformationModel& model, const CanonicalPointSet& points,
                const std::string& config_json, const std::string& path);
struct LoadedModel {
    DeformationModel model;
    CanonicalPointSet points;
    std::string config_json;
};
LoadedModel load_model(const std::string& path);

}  // namespace raf
