#include "rafkit/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rafkit/errors.hpp"
#include "rafkit/rng.hpp"

namespace raf {

namespace {

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

std::string frame_name(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%04zu", prefix, i);
    return buf;
}

}  // namespace

std::size_t SyntheticWorld::identity_index(const std::string& identity_id) const {
    for (std::size_t i = 0; i < identity_ids.size(); ++i) {
        if (identity_ids[i] == identity_id) return i;
    }
    throw unknown_identity("identity '" + identity_id + "' not in world");
}

SyntheticWorld make_world(const SyntheticWorldConfig& config) {
    if (config.n_points < 1 || config.expr_dim < 1) {
        throw config_invalid("world needs n_points >= 1 and expr_dim >= 1");
    }
    if (!(config.amplitude_min <= config.amplitude_max)) {
        throw config_invalid("amplitude range inverted");
    }
    SyntheticWorld world;
    world.config = config;
    world.landmarks = {-0.4, -0.4, 0.4, -0.4, -0.4, 0.4, 0.4, 0.4};

    const std::size_t n = config.n_points;
    const std::size_t d = config.expr_dim;

    CounterRng point_rng(config.seed, stream_id(RngPurpose::World, 1));
    world.template_points.resize(2 * n);
    for (double& v : world.template_points) v = (2.0 * point_rng.next_double() - 1.0) * 0.8;

    // Blend-weight field on the template; the basis directions are scaled by
    // it so expression motion concentrates near the landmarks.
    const std::size_t m = world.landmarks.size() / 2;
    std::vector<double> field(n);
    const double inv_tau2 = 1.0 / (config.tau * config.tau);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < m; ++j) {
            double dx = world.template_points[2 * i] - world.landmarks[2 * j];
            double dy = world.template_points[2 * i + 1] - world.landmarks[2 * j + 1];
            best = std::min(best, dx * dx + dy * dy);
        }
        field[i] = std::exp(-best * inv_tau2);
    }

    CounterRng basis_rng(config.seed, stream_id(RngPurpose::World, 2));
    world.basis.assign(d * n * 2, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double angle = 2.0 * M_PI * basis_rng.next_double();
        double scale = config.expr_scale * (0.5 + basis_rng.next_double());
        double cx = scale * std::cos(angle);
        double cy = scale * std::sin(angle);
        for (std::size_t i = 0; i < n; ++i) {
            world.basis[(k * n + i) * 2] = field[i] * cx;
            world.basis[(k * n + i) * 2 + 1] = field[i] * cy;
        }
    }

    const std::size_t identities = config.n_bank_identities + 1;
    world.identity_ids.reserve(identities);
    world.identity_bases.reserve(identities * n * 2);
    world.amplitudes.reserve(identities);
    CounterRng identity_rng(config.seed, stream_id(RngPurpose::World, 3));
    for (std::size_t id = 0; id < identities; ++id) {
        world.identity_ids.push_back(id == 0 ? "subject" : frame_name("id", id));
        double amp = config.amplitude_min +
                     (config.amplitude_max - config.amplitude_min) * identity_rng.next_double();
        world.amplitudes.push_back(amp);
        for (std::size_t i = 0; i < n; ++i) {
            // Identity 0 is the unjittered template (the subject).
            double jx = id == 0 ? 0.0 : config.base_jitter * identity_rng.next_normal();
            double jy = id == 0 ? 0.0 : config.base_jitter * identity_rng.next_normal();
            world.identity_bases.push_back(world.template_points[2 * i] + jx);
            world.identity_bases.push_back(world.template_points[2 * i + 1] + jy);
        }
    }
    return world;
}

ToyFrame synth_generate(const SyntheticWorld& world, const std::string& identity_id,
                        const FeatureVector& expression_code, const PoseCode& pose_code,
                        const RenderConfig& render) {
    const std::size_t d = world.config.expr_dim;
    if (expression_code.size() != d) {
        throw dimension_mismatch("expression code length " +
                                 std::to_string(expression_code.size()) + ", world expects " +
                                 std::to_string(d));
    }
    const std::size_t id = world.identity_index(identity_id);
    const std::size_t n = world.config.n_points;
    const double amp = world.amplitudes[id];
    const double* base = world.identity_bases.data() + id * n * 2;

    ToyFrame frame;
    frame.ref.identity_id = identity_id;
    frame.expression_code = expression_code;
    frame.pose_code = pose_code;
    frame.target_points.resize(2 * n);
    const double c = std::cos(pose_code[0]);
    const double s = std::sin(pose_code[0]);
    for (std::size_t i = 0; i < n; ++i) {
        double x = base[2 * i];
        double y = base[2 * i + 1];
        for (std::size_t k = 0; k < d; ++k) {
            x += amp * expression_code[k] * world.basis[(k * n + i) * 2];
            y += amp * expression_code[k] * world.basis[(k * n + i) * 2 + 1];
        }
        frame.target_points[2 * i] = c * x - s * y + pose_code[1];
        frame.target_points[2 * i + 1] = s * x + c * y + pose_code[2];
    }
    frame.target_image = render_points(frame.target_points, render);
    return frame;
}

ExperimentSplit make_experiment_split(const SyntheticWorld& world, const SplitConfig& split,
                                      const RenderConfig& render) {
    if (!(split.train_lo >= split.heldout_lo && split.train_hi <= split.heldout_hi &&
          (split.train_lo > split.heldout_lo || split.train_hi < split.heldout_hi))) {
        throw config_invalid("train region must be a strict subset of the heldout region");
    }
    if (split.train_frames < 1 || split.heldout_frames < 1 || split.frames_per_identity < 1 ||
        split.train_clusters < 1) {
        throw config_invalid("split frame counts must be >= 1");
    }
    const std::size_t d = world.config.expr_dim;

    ExperimentSplit out;
    out.subject_identity = world.subject_identity();

    // Narrow mixture inside the train region.
    CounterRng center_rng(split.seed, stream_id(RngPurpose::World, 10));
    std::vector<FeatureVector> centers(split.train_clusters, FeatureVector(d));
    for (auto& center : centers) {
        for (double& v : center) {
            v = split.train_lo + (split.train_hi - split.train_lo) * center_rng.next_double();
        }
    }
    for (std::size_t t = 0; t < split.train_frames; ++t) {
        CounterRng rng(split.seed, stream_id(RngPurpose::World, 11, t));
        const auto& center = centers[rng.next_below(centers.size())];
        FeatureVector code(d);
        for (std::size_t k = 0; k < d; ++k) {
            code[k] = clamp(center[k] + split.train_cluster_sigma * rng.next_normal(),
                            split.train_lo, split.train_hi);
        }
        PoseCode pose{0.0, 0.0, 0.0};
        if (split.pose_scale > 0.0) {
            pose = {split.pose_scale * (2.0 * rng.next_double() - 1.0),
                    split.pose_scale * (2.0 * rng.next_double() - 1.0),
                    split.pose_scale * (2.0 * rng.next_double() - 1.0)};
        }
        ToyFrame frame = synth_generate(world, out.subject_identity, code, pose, render);
        frame.ref.frame_id = frame_name("t", t);
        frame.split_tag = "train";
        out.train_frames.push_back(std::move(frame));
    }

    // Broad held-out codes (the unconstrained-sequence analog).
    for (std::size_t t = 0; t < split.heldout_frames; ++t) {
        CounterRng rng(split.seed, stream_id(RngPurpose::World, 12, t));
        FeatureVector code(d);
        for (double& v : code) {
            v = split.heldout_lo + (split.heldout_hi - split.heldout_lo) * rng.next_double();
        }
        PoseCode pose{0.0, 0.0, 0.0};
        if (split.pose_scale > 0.0) {
            pose = {split.pose_scale * (2.0 * rng.next_double() - 1.0),
                    split.pose_scale * (2.0 * rng.next_double() - 1.0),
                    split.pose_scale * (2.0 * rng.next_double() - 1.0)};
        }
        ToyFrame frame = synth_generate(world, out.subject_identity, code, pose, render);
        frame.ref.frame_id = frame_name("h", t);
        frame.split_tag = "heldout";
        out.heldout_frames.push_back(std::move(frame));
    }

    // Bank codes: one cluster per identity over the full heldout region, so
    // the union covers it while identity subsets leave coverage holes.
    std::vector<BankEntry> entries;
    entries.reserve(world.config.n_bank_identities * split.frames_per_identity);
    for (std::size_t id = 1; id < world.identity_ids.size(); ++id) {
        CounterRng id_rng(split.seed, stream_id(RngPurpose::World, 13, id));
        FeatureVector center(d);
        for (double& v : center) {
            v = split.heldout_lo + (split.heldout_hi - split.heldout_lo) * id_rng.next_double();
        }
        for (std::size_t t = 0; t < split.frames_per_identity; ++t) {
            BankEntry entry;
            entry.identity_id = world.identity_ids[id];
            entry.frame_id = frame_name("b", t);
            entry.feature.resize(d);
            for (std::size_t k = 0; k < d; ++k) {
                entry.feature[k] = clamp(center[k] + split.bank_cluster_sigma * id_rng.next_normal(),
                                         split.heldout_lo, split.heldout_hi);
            }
            entries.push_back(std::move(entry));
        }
    }
    out.bank = ingest_records(std::move(entries), d);
    return out;
}

CanonicalPointSet subject_canonical_points(const SyntheticWorld& world, std::size_t feature_dim,
                                           std::uint64_t seed) {
    CanonicalPointSet points;
    points.n = world.config.n_points;
    points.feature_dim = feature_dim;
    const std::size_t subject = 0;
    const double* base = world.identity_bases.data() + subject * points.n * 2;
    points.positions.assign(base, base + 2 * points.n);
    points.landmarks = world.landmarks;
    init_point_features(points, seed);
    return points;
}

}  // namespace raf
