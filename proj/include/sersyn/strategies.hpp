#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sersyn/corpus.hpp"
#include "sersyn/metrics.hpp"
#include "sersyn/model.hpp"

namespace sersyn::train {

enum class Strategy { baseline, random_mix, adversarial, transfer, curriculum };
enum class CheckpointPolicy { best_val, last_epoch };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
std::string_view to_string(CheckpointPolicy p);
CheckpointPolicy parse_checkpoint_policy(std::string_view name);

struct TrainPlan {
    Strategy strategy = Strategy::baseline;
    int epochs = 50;
    int batch_size = 128;
    std::uint64_t seed = 0;
    double ratio = 0.5;  // synthetic : real-train
    model::ReprMode repr_mode = model::ReprMode::last_layer;
    std::size_t hidden_dim = 128;
    std::size_t domain_hidden_dim = 64;
    model::AdamWConfig optimizer;
    double lambda_grl = 1.0;
    bool adversarial_synthetic_labels = true;
    double transfer_lr_factor = 0.1;
    /// Synthetic-only epochs before the hand-off; unset means `epochs`.
    std::optional<int> transfer_phase1_epochs;
    int curriculum_chunks = 5;
    int curriculum_interval = 5;
    /// Unset: best_val for baseline, last_epoch for every augmented strategy.
    std::optional<CheckpointPolicy> checkpoint_policy;

    /// Throws ConfigError. The curriculum bound (K-1)*interval < epochs is
    /// only enforced for the curriculum strategy.
    void validate() const;
    CheckpointPolicy effective_policy() const;
};

struct Example {
    std::string id;
    const corpus::FeatureTensor* features = nullptr;
    int label = 0;
    corpus::Domain domain = corpus::Domain::real;
    double duration_s = 0;
};

struct FoldData {
    int fold_index = 1;
    std::vector<Example> train;
    std::vector<Example> val;
    std::vector<Example> test;
};

/// Resolves ids to examples pointing into `corpus` (which must outlive them).
std::vector<Example> to_examples(const corpus::Corpus& corpus, const std::vector<std::string>& ids);
std::vector<Example> to_examples(const corpus::Corpus& corpus,
                                 const std::vector<corpus::UtteranceRecord>& records);
FoldData make_fold_data(const corpus::Corpus& corpus, const corpus::FoldSplit& split);

struct EpochLog {
    int fold = 1;
    Strategy strategy = Strategy::baseline;
    int epoch = 1;  // 1-indexed
    double train_loss = 0;
    double val_wa = 0;
    double val_ua = 0;
    std::size_t active_synth = 0;
    std::size_t epoch_size = 0;
};

/// {fold, strategy, epoch, train_loss, val_wa, val_ua, active_synth}
nlohmann::json to_json(const EpochLog& log);

struct TrainResult {
    model::SerModel model;  // the selected checkpoint
    std::vector<EpochLog> logs;
    int selected_epoch = 0;
    std::vector<std::string> warnings;
    std::size_t skipped_domain_batches = 0;
    std::optional<model::SerModel> phase1_model;  // transfer only
};

/// Epoch index (1-indexed) picked by the policy. best_val takes the
/// highest val WA, earliest on ties.
int select_checkpoint(const std::vector<EpochLog>& logs, CheckpointPolicy policy);

metrics::ConfusionMatrix evaluate(const model::SerModel& model, std::span<const Example> examples);

/// Seed of the fold's private stream: hash(plan seed, fold index).
std::uint64_t fold_seed(std::uint64_t seed, int fold_index);

TrainResult train_baseline(const FoldData& fold, const TrainPlan& plan);
TrainResult train_random_mix(const FoldData& fold, std::span<const Example> synthetic,
                             const TrainPlan& plan);
TrainResult train_adversarial(const FoldData& fold, std::span<const Example> synthetic,
                              const TrainPlan& plan);
TrainResult train_transfer(const FoldData& fold, std::span<const Example> synthetic,
                           const TrainPlan& plan);
TrainResult train_curriculum(const FoldData& fold, std::span<const Example> synthetic,
                             const TrainPlan& plan);

/// Dispatches on plan.strategy; baseline ignores `synthetic`.
TrainResult train(const FoldData& fold, std::span<const Example> synthetic, const TrainPlan& plan);

/// Duration-sorted synthetic items cut into K contiguous chunks.
class CurriculumSchedule {
public:
    CurriculumSchedule(std::span<const Example> synthetic, int chunks, int interval);

    /// Indices into the synthetic list, ascending by (duration, id).
    const std::vector<std::size_t>& order() const { return m_order; }
    /// Exclusive end (into order()) of each chunk.
    const std::vector<std::size_t>& chunk_ends() const { return m_chunk_ends; }

    /// Chunks 0..min(floor(epoch / interval), K-1) are active; epoch is 0-indexed.
    std::size_t active_count(int epoch) const;

private:
    std::vector<std::size_t> m_order;
    std::vector<std::size_t> m_chunk_ends;
    int m_interval;
};

/// Transfer phase 1: synthetic only at the base learning rate.
model::SerModel transfer_phase1(const FoldData& fold, std::span<const Example> synthetic,
                                const TrainPlan& plan, std::vector<EpochLog>& logs);
/// Transfer phase 2: fresh AdamW at lr * transfer_lr_factor on real data.
model::SerModel transfer_phase2(model::SerModel start, const FoldData& fold, const TrainPlan& plan,
                                std::vector<EpochLog>& logs);
double transfer_phase2_lr(const TrainPlan& plan);

/// One adversarial batch, optimized in three steps with three AdamW states:
/// (1) emotion loss updates fuser + SER head, (2) domain loss updates the
/// domain head only, (3) domain loss through gradient reversal updates the
/// fuser only.
class AdversarialTrainer {
public:
    AdversarialTrainer(model::SerModel& model, model::DomainHead& head, const TrainPlan& plan);

    /// Returns the mean emotion loss over labeled items.
    double step_emotion(std::span<const Example* const> batch);
    /// Returns the mean domain loss, or nullopt when the batch holds one domain.
    std::optional<double> step_domain_head(std::span<const Example* const> batch);
    std::optional<double> step_reverse(std::span<const Example* const> batch);

    /// Fuser gradient of the mean domain loss, optionally through reversal.
    model::SerGrads fuser_domain_gradient(std::span<const Example* const> batch,
                                          bool reversed) const;

    /// Runs all three steps; returns the emotion loss.
    double train_batch(std::span<const Example* const> batch, std::size_t& skipped);

private:
    model::SerModel& m_model;
    model::DomainHead& m_head;
    const TrainPlan& m_plan;
    model::AdamW m_emotion_opt;
    model::AdamW m_domain_opt;
    model::AdamW m_reverse_opt;
};

/// Batches mixing real and synthetic proportionally to their counts:
/// ceil((R + S) / B) batches, each taking a contiguous slice of both lists.
std::vector<std::vector<const Example*>> proportional_batches(std::span<const Example* const> real,
                                                              std::span<const Example* const> synthetic,
                                                              int batch_size);

struct FoldRun {
    int fold = 1;
    TrainResult result;
    metrics::FoldResult test;
    std::size_t synthetic_used = 0;
};

struct CrossValidation {
    std::vector<FoldRun> folds;
    metrics::Aggregate aggregate;
};

/// Synthetic pool used for augmentation: dialogue, max_tokens = 10, four classes.
std::vector<corpus::UtteranceRecord> synthetic_pool(const corpus::Corpus& corpus);

/// Runs the plan on all five leave-one-session-out folds, up to `jobs`
/// folds concurrently. Results are identical for any `jobs`.
CrossValidation run_cross_validation(const corpus::Corpus& corpus, const TrainPlan& plan,
                                     int jobs = 1);

}  // namespace sersyn::train
