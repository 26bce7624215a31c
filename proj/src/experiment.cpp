#include "rafkit/experiment.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "rafkit/errors.hpp"
#include "rafkit/rng.hpp"

namespace raf {

std::vector<ExperimentCondition> default_conditions() {
    std::vector<ExperimentCondition> conditions;
    conditions.push_back({"vanilla", TrainConfig::Augment::Vanilla, 0.0, 0.0,
                          SubstituteMode::top1(), false});
    conditions.push_back({"noise", TrainConfig::Augment::Noise, 0.0, 0.08,
                          SubstituteMode::top1(), false});
    conditions.push_back({"raf_top1", TrainConfig::Augment::Raf, 0.5, 0.0,
                          SubstituteMode::top1(), false});
    conditions.push_back({"raf_top5", TrainConfig::Augment::Raf, 0.5, 0.0,
                          SubstituteMode::top_k_uniform(5), false});
    conditions.push_back({"raf_half_bank", TrainConfig::Augment::Raf, 0.5, 0.0,
                          SubstituteMode::top1(), true});
    return conditions;
}

ExpressionBank restrict_to_half_identities(const ExpressionBank& bank, std::uint64_t seed) {
    std::vector<std::string> identities;
    {
        std::set<std::string> seen;
        for (const auto& e : bank.entries()) {
            if (seen.insert(e.identity_id).second) identities.push_back(e.identity_id);
        }
    }
    const std::size_t keep = (identities.size() + 1) / 2;
    CounterRng rng(seed, stream_id(RngPurpose::Subsample, fnv1a("half-bank")));
    for (std::size_t k = 0; k + 1 < identities.size(); ++k) {
        std::size_t j = k + rng.next_below(identities.size() - k);
        std::swap(identities[k], identities[j]);
    }
    std::set<std::string> kept(identities.begin(), identities.begin() + keep);

    std::vector<BankEntry> entries;
    for (const auto& e : bank.entries()) {
        if (kept.count(e.identity_id)) entries.push_back(e);
    }
    return ExpressionBank(bank.dim(), std::move(entries));
}

double ExperimentSummary::mean_rmse(const std::string& condition) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : runs) {
        if (r.condition == condition) {
            sum += r.heldout_point_rmse;
            ++count;
        }
    }
    if (count == 0) throw config_invalid("no runs for condition " + condition);
    return sum / static_cast<double>(count);
}

double ExperimentSummary::mean_image_loss(const std::string& condition) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : runs) {
        if (r.condition == condition) {
            sum += r.heldout_image_loss;
            ++count;
        }
    }
    if (count == 0) throw config_invalid("no runs for condition " + condition);
    return sum / static_cast<double>(count);
}

const ExperimentRun& ExperimentSummary::run(const std::string& condition,
                                            std::uint64_t seed) const {
    for (const auto& r : runs) {
        if (r.condition == condition && r.seed == seed) return r;
    }
    throw config_invalid("no run for " + condition + " seed " + std::to_string(seed));
}

ExperimentSummary experiment_suite(const ExperimentConfig& config) {
    const auto conditions =
        config.conditions.empty() ? default_conditions() : config.conditions;

    ExperimentSummary summary;
    for (std::uint64_t seed : config.seeds) {
        SyntheticWorldConfig world_config = config.world;
        world_config.seed = seed;
        SyntheticWorld world = make_world(world_config);

        SplitConfig split_config = config.split;
        split_config.seed = seed;
        ExperimentSplit split = make_experiment_split(world, split_config, config.render);

        Index full_index(split.bank);
        ExpressionBank half_bank = restrict_to_half_identities(split.bank, seed);
        Index half_index(half_bank);

        // Subject train codes as an identity-tagged set for the coverage pair.
        std::vector<BankEntry> train_entries;
        for (const auto& f : split.train_frames) {
            train_entries.push_back({f.ref.identity_id, f.ref.frame_id, f.expression_code});
        }
        ExpressionBank train_tagged =
            ingest_records(std::move(train_entries), world.config.expr_dim);
        SampleSet test_codes;
        test_codes.dim = world.config.expr_dim;
        for (const auto& f : split.heldout_frames) test_codes.samples.push_back(f.expression_code);

        for (const auto& condition : conditions) {
            const Index& index = condition.half_bank ? half_index : full_index;

            DeformationModel model = init_model(world.config.expr_dim, config.feature_dim,
                                                world.config.tau, seed);
            CanonicalPointSet points = subject_canonical_points(world, config.feature_dim, seed);

            TrainConfig train_config;
            train_config.augment = condition.augment;
            train_config.p = condition.p;
            train_config.sigma = condition.sigma;
            train_config.mode = condition.mode;
            train_config.epochs = config.epochs;
            train_config.learning_rate = config.learning_rate;
            train_config.seed = seed;
            train_config.loss_weights = config.loss_weights;
            train_config.render = config.render;

            TrainResult trained = train_toy(model, points, split.train_frames, &index,
                                            split.subject_identity, train_config);
            EvalResult eval = evaluate_heldout(model, points, split.heldout_frames,
                                               config.loss_weights, config.render);

            CoverageConfig coverage_config = config.coverage;
            coverage_config.seed = seed;
            // The coverage pair echoes the training substitution: vanilla
            // keeps the train set, every other condition mixes at the
            // configured fraction against its own bank.
            if (condition.augment == TrainConfig::Augment::Vanilla) {
                coverage_config.fraction = 0.0;
            }
            CoveragePair coverage =
                coverage_report(train_tagged, test_codes, index, coverage_config);

            ExperimentRun run;
            run.condition = condition.name;
            run.seed = seed;
            run.final_train_loss = trained.loss_curve.back();
            run.heldout_image_loss = eval.image_loss_mean;
            run.heldout_point_rmse = eval.point_rmse_mean;
            run.coverage = coverage;
            summary.runs.push_back(std::move(run));
        }
    }
    return summary;
}

}  // namespace raf
