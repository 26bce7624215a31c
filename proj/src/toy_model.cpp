#include "rafkit/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "rafkit/errors.hpp"
#include "rafkit/io_util.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {

constexpr char kModelMagic[4] = {'R', 'A', 'F', 'M'};
constexpr std::uint32_t kModelVersion = 1;

double kahan_add(double& sum, double& comp, double value) {
    double y = value - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
    return sum;
}

inline double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Mlp make_mlp(std::size_t in_dim, std::size_t hidden) {
    Mlp net;
    net.in_dim = in_dim;
    net.hidden = hidden;
    net.out_dim = 2;
    net.w1.assign(hidden * in_dim, 0.0);
    net.b1.assign(hidden, 0.0);
    net.w2.assign(hidden * hidden, 0.0);
    net.b2.assign(hidden, 0.0);
    net.w3.assign(net.out_dim * hidden, 0.0);
    net.b3.assign(net.out_dim, 0.0);
    return net;
}

void seed_layer(std::vector<double>& weights, std::size_t fan_in, CounterRng& rng) {
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : weights) w = (2.0 * rng.next_double() - 1.0) * scale;
}

// Forward pass scratch for one point, kept for the backward pass.
struct MlpTrace {
    std::vector<double> input;
    std::vector<double> h1, h2;
    std::array<double, 2> out{};
};

void mlp_forward(const Mlp& net, bool linear, const std::vector<double>& input,
                 MlpTrace& trace) {
    trace.input = input;
    trace.h1.assign(net.hidden, 0.0);
    trace.h2.assign(net.hidden, 0.0);
    for (std::size_t r = 0; r < net.hidden; ++r) {
        double acc = net.b1[r];
        const double* row = net.w1.data() + r * net.in_dim;
        for (std::size_t c = 0; c < net.in_dim; ++c) acc += row[c] * input[c];
        trace.h1[r] = linear ? acc : std::tanh(acc);
    }
    for (std::size_t r = 0; r < net.hidden; ++r) {
        double acc = net.b2[r];
        const double* row = net.w2.data() + r * net.hidden;
        for (std::size_t c = 0; c < net.hidden; ++c) acc += row[c] * trace.h1[c];
        trace.h2[r] = linear ? acc : std::tanh(acc);
    }
    for (std::size_t r = 0; r < net.out_dim; ++r) {
        double acc = net.b3[r];
        const double* row = net.w3.data() + r * net.hidden;
        for (std::size_t c = 0; c < net.hidden; ++c) acc += row[c] * trace.h2[c];
        trace.out[r] = acc;
    }
}

// Flat gradient layout mirrors the member order w1,b1,w2,b2,w3,b3.
struct MlpGradView {
    double* w1;
    double* b1;
    double* w2;
    double* b2;
    double* w3;
    double* b3;

    static MlpGradView of(const Mlp& net, std::vector<double>& flat) {
        flat.assign(net.parameter_count(), 0.0);
        double* p = flat.data();
        MlpGradView v{};
        v.w1 = p;
        p += net.w1.size();
        v.b1 = p;
        p += net.b1.size();
        v.w2 = p;
        p += net.w2.size();
        v.b2 = p;
        p += net.b2.size();
        v.w3 = p;
        p += net.w3.size();
        v.b3 = p;
        return v;
    }
};

// Accumulates parameter gradients and returns dL/dinput.
void mlp_backward(const Mlp& net, bool linear, const MlpTrace& trace,
                  const std::array<double, 2>& dout, MlpGradView grads,
                  std::vector<double>& dinput) {
    std::vector<double> dh2(net.hidden, 0.0);
    for (std::size_t r = 0; r < net.out_dim; ++r) {
        double* gw = grads.w3 + r * net.hidden;
        const double* row = net.w3.data() + r * net.hidden;
        for (std::size_t c = 0; c < net.hidden; ++c) {
            gw[c] += dout[r] * trace.h2[c];
            dh2[c] += row[c] * dout[r];
        }
        grads.b3[r] += dout[r];
    }
    std::vector<double> dh1(net.hidden, 0.0);
    for (std::size_t r = 0; r < net.hidden; ++r) {
        double dz = linear ? dh2[r] : dh2[r] * (1.0 - trace.h2[r] * trace.h2[r]);
        double* gw = grads.w2 + r * net.hidden;
        const double* row = net.w2.data() + r * net.hidden;
        for (std::size_t c = 0; c < net.hidden; ++c) {
            gw[c] += dz * trace.h1[c];
            dh1[c] += row[c] * dz;
        }
        grads.b2[r] += dz;
    }
    dinput.assign(net.in_dim, 0.0);
    for (std::size_t r = 0; r < net.hidden; ++r) {
        double dz = linear ? dh1[r] : dh1[r] * (1.0 - trace.h1[r] * trace.h1[r]);
        double* gw = grads.w1 + r * net.in_dim;
        const double* row = net.w1.data() + r * net.in_dim;
        for (std::size_t c = 0; c < net.in_dim; ++c) {
            gw[c] += dz * trace.input[c];
            dinput[c] += row[c] * dz;
        }
        grads.b1[r] += dz;
    }
}

struct BlendResult {
    std::vector<double> w;            // n
    std::vector<std::size_t> argmin;  // nearest landmark index per point
};

BlendResult blend_with_argmin(const CanonicalPointSet& points, double tau) {
    if (!(tau > 0.0)) throw config_invalid("blend temperature must be > 0");
    const std::size_t m = points.landmark_count();
    if (m < 1) throw config_invalid("need at least one landmark");
    BlendResult result;
    result.w.resize(points.n);
    result.argmin.resize(points.n);
    const double inv_tau2 = 1.0 / (tau * tau);
    for (std::size_t i = 0; i < points.n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < m; ++j) {
            double dx = points.positions[2 * i] - points.landmarks[2 * j];
            double dy = points.positions[2 * i + 1] - points.landmarks[2 * j + 1];
            double sq = dx * dx + dy * dy;
            if (sq < best) {
                best = sq;
                best_j = j;
            }
        }
        result.w[i] = std::exp(-best * inv_tau2);
        result.argmin[i] = best_j;
    }
    return result;
}

void check_render_config(const RenderConfig& config) {
    if (config.grid < 4 || config.grid % 2 != 0) {
        throw config_invalid("render grid must be even and >= 4");
    }
    if (!(config.kernel_sigma > 0.0)) throw config_invalid("kernel_sigma must be > 0");
}

}  // namespace

DeformationModel init_model(std::size_t expr_dim, std::size_t feature_dim, double tau,
                            std::uint64_t seed, bool linear_activation) {
    DeformationModel model;
    model.expr_dim = expr_dim;
    model.tau = tau;
    model.linear_activation = linear_activation;
    model.exp_net = make_mlp(feature_dim + expr_dim, 64);
    model.pose_net = make_mlp(feature_dim + DeformationModel::kPoseDim, 64);
    std::uint64_t layer = 0;
    for (Mlp* net : {&model.exp_net, &model.pose_net}) {
        CounterRng r1(seed, stream_id(RngPurpose::ModelInit, layer++));
        seed_layer(net->w1, net->in_dim, r1);
        CounterRng r2(seed, stream_id(RngPurpose::ModelInit, layer++));
        seed_layer(net->w2, net->hidden, r2);
        CounterRng r3(seed, stream_id(RngPurpose::ModelInit, layer++));
        seed_layer(net->w3, net->hidden, r3);
    }
    return model;
}

void init_point_features(CanonicalPointSet& points, std::uint64_t seed) {
    CounterRng rng(seed, stream_id(RngPurpose::ModelInit, 100));
    points.features.assign(points.n * points.feature_dim, 0.0);
    for (double& g : points.features) g = 0.1 * rng.next_normal();
}

std::vector<double> blend_weights(const CanonicalPointSet& points, double tau) {
    return blend_with_argmin(points, tau).w;
}

std::vector<double> deform(const DeformationModel& model, const CanonicalPointSet& points,
                           const FeatureVector& expression, const PoseCode& pose) {
    if (expression.size() != model.expr_dim) {
        throw dimension_mismatch("expression code length " + std::to_string(expression.size()) +
                                 ", model expects " + std::to_string(model.expr_dim));
    }
    for (const Mlp* net : {&model.exp_net, &model.pose_net}) {
        for (const auto* arr : {&net->w1, &net->b1, &net->w2, &net->b2, &net->w3, &net->b3}) {
            for (double v : *arr) {
                if (!std::isfinite(v)) throw non_finite_weights("non-finite MLP weight");
            }
        }
    }

    BlendResult blend = blend_with_argmin(points, model.tau);
    std::vector<double> out(points.n * 2);
    MlpTrace exp_trace, pose_trace;
    std::vector<double> exp_in(model.exp_net.in_dim), pose_in(model.pose_net.in_dim);
    for (std::size_t i = 0; i < points.n; ++i) {
        const double* g = points.features.data() + i * points.feature_dim;
        std::copy(g, g + points.feature_dim, exp_in.begin());
        std::copy(expression.begin(), expression.end(), exp_in.begin() + points.feature_dim);
        std::copy(g, g + points.feature_dim, pose_in.begin());
        std::copy(pose.begin(), pose.end(), pose_in.begin() + points.feature_dim);
        mlp_forward(model.exp_net, model.linear_activation, exp_in, exp_trace);
        mlp_forward(model.pose_net, model.linear_activation, pose_in, pose_trace);
        double w = blend.w[i];
        out[2 * i] = points.positions[2 * i] + w * exp_trace.out[0] +
                     (1.0 - w) * pose_trace.out[0];
        out[2 * i + 1] = points.positions[2 * i + 1] + w * exp_trace.out[1] +
                         (1.0 - w) * pose_trace.out[1];
    }
    return out;
}

std::vector<double> render_points(const std::vector<double>& positions,
                                  const RenderConfig& config) {
    check_render_config(config);
    const std::size_t g = config.grid;
    const std::size_t n = positions.size() / 2;
    const double sigma = config.kernel_sigma;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double half = static_cast<double>(g) / 2.0;

    std::vector<double> image(g * g, 0.0);
    std::vector<double> kx(g), ky(g);
    for (std::size_t i = 0; i < n; ++i) {
        // Scene [-1,1] onto pixel-center coordinates.
        double cx = (positions[2 * i] + 1.0) * half;
        double cy = (positions[2 * i + 1] + 1.0) * half;
        for (std::size_t u = 0; u < g; ++u) {
            double dx = (static_cast<double>(u) + 0.5) - cx;
            kx[u] = std::exp(-dx * dx * inv2s2);
        }
        for (std::size_t v = 0; v < g; ++v) {
            double dy = (static_cast<double>(v) + 0.5) - cy;
            ky[v] = std::exp(-dy * dy * inv2s2);
        }
        for (std::size_t v = 0; v < g; ++v) {
            double* row = image.data() + v * g;
            for (std::size_t u = 0; u < g; ++u) row[u] += ky[v] * kx[u];
        }
    }
    return image;
}

double recon_loss(const std::vector<double>& pred, const std::vector<double>& target,
                  const LossWeights& weights) {
    if (pred.size() != target.size()) throw shape_mismatch("image sizes differ");
    if (!(weights.lambda_l1 > 0.0) && !(weights.lambda_perceptual > 0.0)) {
        throw config_invalid("at least one loss weight must be > 0");
    }
    const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pred.size()))));
    if (g * g != pred.size() || g % 2 != 0) throw shape_mismatch("image must be even-sided square");
    const std::size_t gh = g / 2;

    double fine = 0.0, fine_c = 0.0;
    for (std::size_t q = 0; q < pred.size(); ++q) {
        kahan_add(fine, fine_c, std::abs(pred[q] - target[q]));
    }
    double coarse = 0.0, coarse_c = 0.0;
    for (std::size_t bv = 0; bv < gh; ++bv) {
        for (std::size_t bu = 0; bu < gh; ++bu) {
            double block = 0.0;
            for (std::size_t dv = 0; dv < 2; ++dv) {
                for (std::size_t du = 0; du < 2; ++du) {
                    std::size_t q = (2 * bv + dv) * g + (2 * bu + du);
                    block += pred[q] - target[q];
                }
            }
            kahan_add(coarse, coarse_c, std::abs(block * 0.25));
        }
    }
    return weights.lambda_l1 * fine / static_cast<double>(g * g) +
           weights.lambda_perceptual * coarse / static_cast<double>(gh * gh);
}

double frame_loss(const DeformationModel& model, const CanonicalPointSet& points,
                  const FeatureVector& conditioning, const PoseCode& pose,
                  const std::vector<double>& target_image, const LossWeights& weights,
                  const RenderConfig& render, ModelGradients* grads) {
    check_render_config(render);
    if (conditioning.size() != model.expr_dim) {
        throw dimension_mismatch("conditioning length " + std::to_string(conditioning.size()) +
                                 ", model expects " + std::to_string(model.expr_dim));
    }
    const std::size_t g = render.grid;
    if (target_image.size() != g * g) throw shape_mismatch("target image size != G*G");

    const std::size_t n = points.n;
    BlendResult blend = blend_with_argmin(points, model.tau);

    // Forward: per-point MLPs, positions, factored splat.
    std::vector<MlpTrace> exp_traces(n), pose_traces(n);
    std::vector<double> positions(n * 2);
    {
        std::vector<double> exp_in(model.exp_net.in_dim), pose_in(model.pose_net.in_dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double* gi = points.features.data() + i * points.feature_dim;
            std::copy(gi, gi + points.feature_dim, exp_in.begin());
            std::copy(conditioning.begin(), conditioning.end(),
                      exp_in.begin() + points.feature_dim);
            std::copy(gi, gi + points.feature_dim, pose_in.begin());
            std::copy(pose.begin(), pose.end(), pose_in.begin() + points.feature_dim);
            mlp_forward(model.exp_net, model.linear_activation, exp_in, exp_traces[i]);
            mlp_forward(model.pose_net, model.linear_activation, pose_in, pose_traces[i]);
            double w = blend.w[i];
            positions[2 * i] = points.positions[2 * i] + w * exp_traces[i].out[0] +
                               (1.0 - w) * pose_traces[i].out[0];
            positions[2 * i + 1] = points.positions[2 * i + 1] + w * exp_traces[i].out[1] +
                                   (1.0 - w) * pose_traces[i].out[1];
        }
    }
    std::vector<double> image = render_points(positions, render);
    double loss = recon_loss(image, target_image, weights);
    if (!grads) return loss;

    // dL/dimage from the two L1 terms.
    const std::size_t gh = g / 2;
    const double fine_scale = weights.lambda_l1 / static_cast<double>(g * g);
    const double coarse_scale = weights.lambda_perceptual / static_cast<double>(gh * gh) * 0.25;
    std::vector<double> dimage(g * g);
    for (std::size_t q = 0; q < dimage.size(); ++q) {
        dimage[q] = fine_scale * sign_of(image[q] - target_image[q]);
    }
    for (std::size_t bv = 0; bv < gh; ++bv) {
        for (std::size_t bu = 0; bu < gh; ++bu) {
            double block = 0.0;
            for (std::size_t dv = 0; dv < 2; ++dv) {
                for (std::size_t du = 0; du < 2; ++du) {
                    std::size_t q = (2 * bv + dv) * g + (2 * bu + du);
                    block += image[q] - target_image[q];
                }
            }
            double s = coarse_scale * sign_of(block);
            for (std::size_t dv = 0; dv < 2; ++dv) {
                for (std::size_t du = 0; du < 2; ++du) {
                    dimage[(2 * bv + dv) * g + (2 * bu + du)] += s;
                }
            }
        }
    }

    // dL/dpositions through the factored splat.
    const double sigma = render.kernel_sigma;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double inv_s2 = 1.0 / (sigma * sigma);
    const double half = static_cast<double>(g) / 2.0;
    std::vector<double> dpos(n * 2, 0.0);
    {
        std::vector<double> kx(g), ky(g), gx(g), gy(g);
        for (std::size_t i = 0; i < n; ++i) {
            double cx = (positions[2 * i] + 1.0) * half;
            double cy = (positions[2 * i + 1] + 1.0) * half;
            for (std::size_t u = 0; u < g; ++u) {
                double dx = (static_cast<double>(u) + 0.5) - cx;
                kx[u] = std::exp(-dx * dx * inv2s2);
            }
            for (std::size_t v = 0; v < g; ++v) {
                double dy = (static_cast<double>(v) + 0.5) - cy;
                ky[v] = std::exp(-dy * dy * inv2s2);
            }
            std::fill(gx.begin(), gx.end(), 0.0);
            std::fill(gy.begin(), gy.end(), 0.0);
            for (std::size_t v = 0; v < g; ++v) {
                const double* row = dimage.data() + v * g;
                double rowdot = 0.0;
                for (std::size_t u = 0; u < g; ++u) {
                    gx[u] += row[u] * ky[v];
                    rowdot += row[u] * kx[u];
                }
                gy[v] = rowdot;
            }
            double dcx = 0.0, dcy = 0.0;
            for (std::size_t u = 0; u < g; ++u) {
                double dx = (static_cast<double>(u) + 0.5) - cx;
                dcx += gx[u] * kx[u] * dx * inv_s2;
            }
            for (std::size_t v = 0; v < g; ++v) {
                double dy = (static_cast<double>(v) + 0.5) - cy;
                dcy += gy[v] * ky[v] * dy * inv_s2;
            }
            // d(pixel center)/d(scene coordinate) = G/2.
            dpos[2 * i] = dcx * half;
            dpos[2 * i + 1] = dcy * half;
        }
    }

    // Through the blend into nets, features, and canonical positions.
    grads->positions.assign(n * 2, 0.0);
    grads->features.assign(n * points.feature_dim, 0.0);
    MlpGradView exp_view = MlpGradView::of(model.exp_net, grads->exp_net);
    MlpGradView pose_view = MlpGradView::of(model.pose_net, grads->pose_net);
    const double inv_tau2 = 1.0 / (model.tau * model.tau);
    std::vector<double> dinput;
    for (std::size_t i = 0; i < n; ++i) {
        double w = blend.w[i];
        std::array<double, 2> dp{dpos[2 * i], dpos[2 * i + 1]};
        std::array<double, 2> dexp{w * dp[0], w * dp[1]};
        std::array<double, 2> dpose{(1.0 - w) * dp[0], (1.0 - w) * dp[1]};

        mlp_backward(model.exp_net, model.linear_activation, exp_traces[i], dexp, exp_view,
                     dinput);
        for (std::size_t c = 0; c < points.feature_dim; ++c) {
            grads->features[i * points.feature_dim + c] += dinput[c];
        }
        mlp_backward(model.pose_net, model.linear_activation, pose_traces[i], dpose, pose_view,
                     dinput);
        for (std::size_t c = 0; c < points.feature_dim; ++c) {
            grads->features[i * points.feature_dim + c] += dinput[c];
        }

        double dw = dp[0] * (exp_traces[i].out[0] - pose_traces[i].out[0]) +
                    dp[1] * (exp_traces[i].out[1] - pose_traces[i].out[1]);
        std::size_t j = blend.argmin[i];
        double rx = points.positions[2 * i] - points.landmarks[2 * j];
        double ry = points.positions[2 * i + 1] - points.landmarks[2 * j + 1];
        grads->positions[2 * i] += dp[0] + dw * w * (-2.0 * inv_tau2) * rx;
        grads->positions[2 * i + 1] += dp[1] + dw * w * (-2.0 * inv_tau2) * ry;
    }
    return loss;
}

namespace {

std::vector<TrainingFrameFeature> frame_features(const std::vector<ToyFrame>& frames) {
    std::vector<TrainingFrameFeature> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back({f.ref, f.expression_code});
    return out;
}

struct ParamRefs {
    std::vector<double*> params;

    static void add_net(std::vector<double*>& out, Mlp& net) {
        for (auto* arr : {&net.w1, &net.b1, &net.w2, &net.b2, &net.w3, &net.b3}) {
            for (double& v : *arr) out.push_back(&v);
        }
    }

    static ParamRefs of(DeformationModel& model, CanonicalPointSet& points) {
        ParamRefs refs;
        add_net(refs.params, model.exp_net);
        add_net(refs.params, model.pose_net);
        for (double& v : points.positions) refs.params.push_back(&v);
        for (double& v : points.features) refs.params.push_back(&v);
        return refs;
    }
};

std::vector<double> flatten_grads(const ModelGradients& grads) {
    std::vector<double> flat;
    flat.reserve(grads.exp_net.size() + grads.pose_net.size() + grads.positions.size() +
                 grads.features.size());
    flat.insert(flat.end(), grads.exp_net.begin(), grads.exp_net.end());
    flat.insert(flat.end(), grads.pose_net.begin(), grads.pose_net.end());
    flat.insert(flat.end(), grads.positions.begin(), grads.positions.end());
    flat.insert(flat.end(), grads.features.begin(), grads.features.end());
    return flat;
}

void accumulate(ModelGradients& into, const ModelGradients& from) {
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
        if (a.empty()) {
            a = b;
            return;
        }
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(into.exp_net, from.exp_net);
    add(into.pose_net, from.pose_net);
    add(into.positions, from.positions);
    add(into.features, from.features);
}

}  // namespace

TrainResult train_toy(DeformationModel& model, CanonicalPointSet& points,
                      const std::vector<ToyFrame>& train_frames, const Index* bank_index,
                      const std::string& subject_identity, const TrainConfig& config) {
    if (config.epochs < 1) throw config_invalid("epochs must be >= 1");
    if (!(config.learning_rate > 0.0)) throw config_invalid("learning_rate must be > 0");
    if (train_frames.empty()) throw config_invalid("no training frames");
    for (const auto& f : train_frames) {
        if (f.split_tag == "heldout") {
            throw config_invalid("held-out frame " + f.ref.frame_id +
                                 " passed to train_toy");
        }
    }
    if (config.augment == TrainConfig::Augment::Raf && bank_index == nullptr) {
        throw config_invalid("raf augmentation needs a bank index");
    }

    auto features = frame_features(train_frames);
    std::optional<RafPlanner> planner;
    if (config.augment == TrainConfig::Augment::Raf) {
        planner.emplace(features, subject_identity, bank_index, config.mode);
    }

    TrainResult result;
    result.loss_curve.reserve(config.epochs);
    ParamRefs refs = ParamRefs::of(model, points);
    const double inv_frames = 1.0 / static_cast<double>(train_frames.size());

    for (std::uint64_t epoch = 0; epoch < config.epochs; ++epoch) {
        AugmentationPlan plan;
        switch (config.augment) {
            case TrainConfig::Augment::Vanilla:
                plan = make_plan_vanilla(features, epoch, config.seed);
                break;
            case TrainConfig::Augment::Noise:
                plan = make_plan_noise(features, config.sigma, epoch, config.seed);
                break;
            case TrainConfig::Augment::Raf:
                plan = planner->make_plan(config.p, epoch, config.seed);
                break;
        }

        ModelGradients total;
        double loss_sum = 0.0, loss_comp = 0.0;
        for (std::size_t i = 0; i < train_frames.size(); ++i) {
            const auto& frame = train_frames[i];
            const auto& item = plan.items[i];
            if (config.step_observer) config.step_observer(epoch, i, item, frame);
            ModelGradients grads;
            double loss = frame_loss(model, points, item.conditioning, frame.pose_code,
                                     frame.target_image, config.loss_weights, config.render,
                                     &grads);
            kahan_add(loss_sum, loss_comp, loss);
            accumulate(total, grads);
        }
        double mean_loss = loss_sum * inv_frames;
        if (!std::isfinite(mean_loss)) {
            throw diverged_loss("non-finite training loss at epoch " + std::to_string(epoch));
        }
        result.loss_curve.push_back(mean_loss);

        std::vector<double> flat = flatten_grads(total);
        for (std::size_t k = 0; k < flat.size(); ++k) {
            *refs.params[k] -= config.learning_rate * flat[k] * inv_frames;
        }
    }
    return result;
}

EvalResult evaluate_heldout(const DeformationModel& model, const CanonicalPointSet& points,
                            const std::vector<ToyFrame>& frames, const LossWeights& weights,
                            const RenderConfig& render) {
    if (frames.empty()) throw config_invalid("no frames to evaluate");
    EvalResult result;
    for (const auto& frame : frames) {
        std::vector<double> positions = deform(model, points, frame.expression_code,
                                               frame.pose_code);
        std::vector<double> image = render_points(positions, render);
        double img_loss = recon_loss(image, frame.target_image, weights);
        double sq = 0.0;
        for (std::size_t i = 0; i < points.n; ++i) {
            double dx = positions[2 * i] - frame.target_points[2 * i];
            double dy = positions[2 * i + 1] - frame.target_points[2 * i + 1];
            sq += dx * dx + dy * dy;
        }
        double rmse = std::sqrt(sq / static_cast<double>(points.n));
        result.per_frame_image_loss.push_back(img_loss);
        result.per_frame_point_rmse.push_back(rmse);
        result.image_loss_mean += img_loss;
        result.point_rmse_mean += rmse;
    }
    result.image_loss_mean /= static_cast<double>(frames.size());
    result.point_rmse_mean /= static_cast<double>(frames.size());
    return result;
}

double grad_check(const DeformationModel& model, const CanonicalPointSet& points,
                  const ToyFrame& frame, double eps, const LossWeights& weights,
                  const RenderConfig& render) {
    if (!(eps > 0.0)) throw config_invalid("eps must be > 0");

    ModelGradients grads;
    frame_loss(model, points, frame.expression_code, frame.pose_code, frame.target_image,
               weights, render, &grads);
    std::vector<double> analytic = flatten_grads(grads);

    DeformationModel probe_model = model;
    CanonicalPointSet probe_points = points;
    ParamRefs refs = ParamRefs::of(probe_model, probe_points);

    double worst = 0.0;
    for (std::size_t k = 0; k < refs.params.size(); ++k) {
        double original = *refs.params[k];
        *refs.params[k] = original + eps;
        double up = frame_loss(probe_model, probe_points, frame.expression_code,
                               frame.pose_code, frame.target_image, weights, render, nullptr);
        *refs.params[k] = original - eps;
        double down = frame_loss(probe_model, probe_points, frame.expression_code,
                                 frame.pose_code, frame.target_image, weights, render, nullptr);
        *refs.params[k] = original;
        double fd = (up - down) / (2.0 * eps);
        double denom = std::max(1e-8, std::abs(analytic[k]) + std::abs(fd));
        worst = std::max(worst, std::abs(analytic[k] - fd) / denom);
    }
    return worst;
}

void save_model(const DeformationModel& model, const CanonicalPointSet& points,
                const std::string& config_json, const std::string& path) {
    ByteWriter w;
    w.bytes(kModelMagic, 4);
    w.u32(kModelVersion);
    w.lp_string(config_json);
    w.u32(static_cast<std::uint32_t>(model.expr_dim));
    w.u32(static_cast<std::uint32_t>(points.feature_dim));
    w.u32(static_cast<std::uint32_t>(points.n));
    w.u32(static_cast<std::uint32_t>(points.landmark_count()));
    w.u32(static_cast<std::uint32_t>(model.exp_net.hidden));
    w.u32(model.linear_activation ? 1 : 0);
    w.f64(model.tau);
    auto write_array = [&w](const std::vector<double>& arr) {
        for (double v : arr) w.f64(v);
    };
    write_array(points.positions);
    write_array(points.features);
    write_array(points.landmarks);
    for (const Mlp* net : {&model.exp_net, &model.pose_net}) {
        write_array(net->w1);
        write_array(net->b1);
        write_array(net->w2);
        write_array(net->b2);
        write_array(net->w3);
        write_array(net->b3);
    }
    atomic_write_file(path, w.take());
}

LoadedModel load_model(const std::string& path) {
    std::string data = read_file_bytes(path);
    if (data.size() < 4 || std::memcmp(data.data(), kModelMagic, 4) != 0) {
        throw bad_magic(path + " is not a RAFM model file");
    }
    ByteReader r(data);
    char magic[4];
    r.bytes(magic, 4);
    std::uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw version_mismatch("model format version " + std::to_string(version));
    }
    LoadedModel loaded;
    loaded.config_json = r.lp_string();
    std::uint32_t expr_dim = r.u32();
    std::uint32_t feature_dim = r.u32();
    std::uint32_t n = r.u32();
    std::uint32_t m = r.u32();
    std::uint32_t hidden = r.u32();
    std::uint32_t linear = r.u32();
    double tau = r.f64();

    loaded.points.n = n;
    loaded.points.feature_dim = feature_dim;
    loaded.model.expr_dim = expr_dim;
    loaded.model.tau = tau;
    loaded.model.linear_activation = linear != 0;
    loaded.model.exp_net = make_mlp(feature_dim + expr_dim, hidden);
    loaded.model.pose_net = make_mlp(feature_dim + DeformationModel::kPoseDim, hidden);

    auto read_array = [&r](std::vector<double>& arr, std::size_t count) {
        arr.resize(count);
        for (auto& v : arr) v = r.f64();
    };
    read_array(loaded.points.positions, 2 * n);
    read_array(loaded.points.features, static_cast<std::size_t>(n) * feature_dim);
    read_array(loaded.points.landmarks, 2 * m);
    for (Mlp* net : {&loaded.model.exp_net, &loaded.model.pose_net}) {
        read_array(net->w1, net->w1.size());
        read_array(net->b1, net->b1.size());
        read_array(net->w2, net->w2.size());
        read_array(net->b2, net->b2.size());
        read_array(net->w3, net->w3.size());
        read_array(net->b3, net->b3.size());
    }
    return loaded;
}

}  // namespace raf
