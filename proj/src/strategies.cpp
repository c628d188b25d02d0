#include "sersyn/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "sersyn/errors.hpp"
#include "sersyn/parallel.hpp"
#include "sersyn/rng.hpp"

namespace sersyn::train {

using model::AdamW;
using model::ConstParamView;
using model::ParamView;
using model::SerGrads;
using model::SerModel;

namespace {

// Sub-stream tags under a fold seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kSampleStream = 3;

std::vector<ParamView> ser_params(SerModel& m) {
    auto p = m.fuser_params();
    auto h = m.head_params();
    p.insert(p.end(), h.begin(), h.end());
    return p;
}

std::vector<ConstParamView> ser_grads(const SerGrads& g) {
    auto p = g.fuser();
    auto h = g.head();
    p.insert(p.end(), h.begin(), h.end());
    return p;
}

std::vector<const Example*> pointers(std::span<const Example> items) {
    std::vector<const Example*> out;
    out.reserve(items.size());
    for (const auto& e : items) out.push_back(&e);
    return out;
}

model::ModelDims infer_dims(const FoldData& fold, std::span<const Example> synthetic,
                            const TrainPlan& plan) {
    if (fold.train.empty()) throw ValidationError("fold " + std::to_string(fold.fold_index) + ": empty train set");
    if (fold.val.empty()) throw ValidationError("fold " + std::to_string(fold.fold_index) + ": empty validation set");
    const auto& first = *fold.train.front().features;
    model::ModelDims dims{first.layers, first.dims, plan.hidden_dim, corpus::kNumClasses};
    auto check = [&](const Example& e) {
        const auto& x = *e.features;
        if (x.dims != dims.input_dim ||
            (plan.repr_mode == model::ReprMode::weighted_layers && x.layers != dims.layers)) {
            throw ValidationError("utterance " + e.id + " has shape (L=" + std::to_string(x.layers) +
                                  ", D=" + std::to_string(x.dims) + ") inconsistent with the corpus");
        }
    };
    for (const auto* set : {&fold.train, &fold.val, &fold.test}) {
        for (const auto& e : *set) check(e);
    }
    for (const auto& e : synthetic) check(e);
    return dims;
}

std::vector<std::string> class_warnings(const FoldData& fold) {
    std::array<std::size_t, corpus::kNumClasses> counts{};
    for (const auto& e : fold.train) ++counts[static_cast<std::size_t>(e.label)];
    std::vector<std::string> out;
    for (int c = 0; c < corpus::kNumClasses; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            out.push_back("fold " + std::to_string(fold.fold_index) + ": class '" +
                          std::string(corpus::to_string(static_cast<corpus::Label>(c))) +
                          "' has no training utterances");
        }
    }
    return out;
}

// One pass of shuffled mini-batch cross-entropy training. Returns the mean
// loss over all items.
double train_epoch(SerModel& model, AdamW& opt, std::vector<const Example*>& items,
                   int batch_size, Rng& rng) {
    rng.shuffle(std::span(items));
    double total = 0;
    auto params = ser_params(model);
    for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
        const double inv_b = 1.0 / static_cast<double>(end - start);
        auto grads = SerGrads::zeros_like(model);
        for (std::size_t i = start; i < end; ++i) {
            const Example& ex = *items[i];
            const auto trace = model::forward(model, *ex.features);
            auto ce = model::cross_entropy(trace.logits, ex.label);
            total += ce.loss;
            for (double& g : ce.grad) g *= inv_b;
            model::backward(model, trace, ce.grad, grads);
        }
        opt.step(params, ser_grads(grads));
    }
    return items.empty() ? 0.0 : total / static_cast<double>(items.size());
}

// Tracks the snapshot that select_checkpoint will pick under best_val.
struct BestTracker {
    std::optional<SerModel> best;
    double best_wa = -1;

    void observe(const SerModel& m, double wa) {
        if (wa > best_wa) {
            best_wa = wa;
            best = m;
        }
    }
};

EpochLog make_log(const FoldData& fold, const TrainPlan& plan, int epoch, double loss,
                  const SerModel& m, std::size_t active_synth, std::size_t epoch_size) {
    const auto acc = metrics::wa_ua(evaluate(m, fold.val));
    return {fold.fold_index, plan.strategy, epoch, loss, acc.wa, acc.ua, active_synth, epoch_size};
}

TrainResult finish(SerModel last, std::vector<EpochLog> logs, BestTracker& best,
                   const TrainPlan& plan, std::vector<std::string> warnings) {
    TrainResult r;
    const auto policy = plan.effective_policy();
    r.selected_epoch = select_checkpoint(logs, policy);
    r.model = (policy == CheckpointPolicy::best_val) ? std::move(*best.best) : std::move(last);
    r.logs = std::move(logs);
    r.warnings = std::move(warnings);
    return r;
}

// Shared loop for strategies that train on (real + some synthetic) with
// one optimizer. `active(e)` gives the synthetic items for 0-indexed epoch e.
template <typename ActiveFn>
TrainResult train_mixed(const FoldData& fold, std::span<const Example> synthetic,
                        const TrainPlan& plan, ActiveFn active) {
    plan.validate();
    const auto dims = infer_dims(fold, synthetic, plan);
    const auto seed = fold_seed(plan.seed, fold.fold_index);
    Rng init_rng(derive_seed(seed, kInitStream));
    Rng shuffle_rng(derive_seed(seed, kShuffleStream));

    SerModel m = SerModel::init(dims, plan.repr_mode, init_rng);
    AdamW opt(plan.optimizer);
    BestTracker best;
    std::vector<EpochLog> logs;
    const auto real = pointers(fold.train);
    for (int e = 0; e < plan.epochs; ++e) {
        std::vector<const Example*> items = real;
        const std::vector<const Example*> synth = active(e);
        items.insert(items.end(), synth.begin(), synth.end());
        const double loss = train_epoch(m, opt, items, plan.batch_size, shuffle_rng);
        logs.push_back(make_log(fold, plan, e + 1, loss, m, synth.size(), items.size()));
        best.observe(m, logs.back().val_wa);
    }
    return finish(std::move(m), std::move(logs), best, plan, class_warnings(fold));
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::baseline: return "baseline";
        case Strategy::random_mix: return "random_mix";
        case Strategy::adversarial: return "adversarial";
        case Strategy::transfer: return "transfer";
        case Strategy::curriculum: return "curriculum";
    }
    return "baseline";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : {Strategy::baseline, Strategy::random_mix, Strategy::adversarial,
                   Strategy::transfer, Strategy::curriculum}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(CheckpointPolicy p) {
    return p == CheckpointPolicy::best_val ? "best_val" : "last_epoch";
}

CheckpointPolicy parse_checkpoint_policy(std::string_view name) {
    if (name == "best_val") return CheckpointPolicy::best_val;
    if (name == "last_epoch") return CheckpointPolicy::last_epoch;
    throw ConfigError("unknown checkpoint policy '" + std::string(name) + "'");
}

void TrainPlan::validate() const {
    if (epochs < 1) throw ConfigError("plan: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("plan: batch_size must be >= 1");
    if (!std::isfinite(ratio) || ratio <= 0) throw ConfigError("plan: ratio must be > 0");
    if (hidden_dim < 1 || domain_hidden_dim < 1) throw ConfigError("plan: hidden sizes must be >= 1");
    if (!(optimizer.lr > 0) || optimizer.weight_decay < 0) {
        throw ConfigError("plan: optimizer lr must be > 0 and weight_decay >= 0");
    }
    if (!(lambda_grl >= 0)) throw ConfigError("plan: lambda_grl must be >= 0");
    if (!(transfer_lr_factor > 0)) throw ConfigError("plan: transfer_lr_factor must be > 0");
    if (transfer_phase1_epochs && *transfer_phase1_epochs < 1) throw ConfigError("plan: transfer_phase1_epochs must be >= 1");
    if (curriculum_chunks < 1) throw ConfigError("plan: curriculum_chunks must be >= 1");
    if (curriculum_interval < 1) throw ConfigError("plan: curriculum_interval must be >= 1");
    if (strategy == Strategy::curriculum &&
        static_cast<long long>(curriculum_chunks - 1) * curriculum_interval >= epochs) {
        throw ConfigError("plan: (curriculum_chunks - 1) * curriculum_interval must be < epochs");
    }
}

CheckpointPolicy TrainPlan::effective_policy() const {
    if (strategy == Strategy::baseline) return checkpoint_policy.value_or(CheckpointPolicy::best_val);
    return CheckpointPolicy::last_epoch;
}

std::vector<Example> to_examples(const corpus::Corpus& corpus, const std::vector<std::string>& ids) {
    std::vector<Example> out;
    out.reserve(ids.size());
    std::map<std::string_view, const corpus::UtteranceRecord*> index;
    for (const auto& r : corpus.records) index.emplace(r.id, &r);
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) throw ValidationError("unknown utterance id " + id);
        const auto& r = *it->second;
        if (!r.label) throw ValidationError("utterance " + id + " has no label");
        out.push_back({r.id, &corpus.features.at(r.id), static_cast<int>(*r.label), r.domain,
                       r.duration_s});
    }
    return out;
}

std::vector<Example> to_examples(const corpus::Corpus& corpus,
                                 const std::vector<corpus::UtteranceRecord>& records) {
    std::vector<Example> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!r.label) throw ValidationError("utterance " + r.id + " has no label");
        auto it = corpus.features.find(r.id);
        if (it == corpus.features.end()) throw ValidationError("no features for utterance " + r.id);
        out.push_back({r.id, &it->second, static_cast<int>(*r.label), r.domain, r.duration_s});
    }
    return out;
}

FoldData make_fold_data(const corpus::Corpus& corpus, const corpus::FoldSplit& split) {
    return {split.fold_index, to_examples(corpus, split.train_ids), to_examples(corpus, split.val_ids),
            to_examples(corpus, split.test_ids)};
}

nlohmann::json to_json(const EpochLog& log) {
    return {{"fold", log.fold},         {"strategy", to_string(log.strategy)},
            {"epoch", log.epoch},       {"train_loss", log.train_loss},
            {"val_wa", log.val_wa},     {"val_ua", log.val_ua},
            {"active_synth", log.active_synth}};
}

int select_checkpoint(const std::vector<EpochLog>& logs, CheckpointPolicy policy) {
    if (logs.empty()) throw ValidationError("select_checkpoint: no epochs logged");
    if (policy == CheckpointPolicy::last_epoch) return logs.back().epoch;
    const EpochLog* best = &logs.front();
    for (const auto& l : logs) {
        if (l.val_wa > best->val_wa) best = &l;
    }
    return best->epoch;
}

metrics::ConfusionMatrix evaluate(const SerModel& model, std::span<const Example> examples) {
    metrics::ConfusionMatrix cm(model.dims.num_classes);
    for (const auto& e : examples) cm.add(e.label, model::predict(model, *e.features));
    return cm;
}

std::uint64_t fold_seed(std::uint64_t seed, int fold_index) {
    return derive_seed(seed, static_cast<std::uint64_t>(fold_index));
}

TrainResult train_baseline(const FoldData& fold, const TrainPlan& plan) {
    return train_mixed(fold, {}, plan, [](int) { return std::vector<const Example*>{}; });
}

TrainResult train_random_mix(const FoldData& fold, std::span<const Example> synthetic,
                             const TrainPlan& plan) {
    const auto synth = pointers(synthetic);
    return train_mixed(fold, synthetic, plan, [&](int) { return synth; });
}

CurriculumSchedule::CurriculumSchedule(std::span<const Example> synthetic, int chunks, int interval)
    : m_interval(interval) {
    if (chunks < 1 || interval < 1) throw ConfigError("curriculum: chunks and interval must be >= 1");
    m_order.resize(synthetic.size());
    std::iota(m_order.begin(), m_order.end(), std::size_t{0});
    std::stable_sort(m_order.begin(), m_order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = synthetic[a];
        const auto& y = synthetic[b];
        if (x.duration_s != y.duration_s) return x.duration_s < y.duration_s;
        return x.id < y.id;
    });
    const std::size_t n = synthetic.size();
    const auto k = static_cast<std::size_t>(chunks);
    for (std::size_t i = 1; i <= k; ++i) m_chunk_ends.push_back(i * n / k);
}

std::size_t CurriculumSchedule::active_count(int epoch) const {
    const auto last = static_cast<std::size_t>(m_chunk_ends.size() - 1);
    const auto chunk = std::min(static_cast<std::size_t>(std::max(epoch, 0) / m_interval), last);
    return m_chunk_ends[chunk];
}

TrainResult train_curriculum(const FoldData& fold, std::span<const Example> synthetic,
                             const TrainPlan& plan) {
    plan.validate();
    const CurriculumSchedule schedule(synthetic, plan.curriculum_chunks, plan.curriculum_interval);
    std::vector<const Example*> sorted;
    sorted.reserve(synthetic.size());
    for (std::size_t i : schedule.order()) sorted.push_back(&synthetic[i]);
    return train_mixed(fold, synthetic, plan, [&](int e) {
        const auto n = static_cast<std::ptrdiff_t>(schedule.active_count(e));
        return std::vector<const Example*>(sorted.begin(), sorted.begin() + n);
    });
}

double transfer_phase2_lr(const TrainPlan& plan) {
    return plan.optimizer.lr * plan.transfer_lr_factor;
}

SerModel transfer_phase1(const FoldData& fold, std::span<const Example> synthetic,
                         const TrainPlan& plan, std::vector<EpochLog>& logs) {
    plan.validate();
    if (synthetic.empty()) throw ValidationError("transfer learning needs synthetic data");
    const auto dims = infer_dims(fold, synthetic, plan);
    const auto seed = fold_seed(plan.seed, fold.fold_index);
    Rng init_rng(derive_seed(seed, kInitStream));
    Rng shuffle_rng(derive_seed(seed, kShuffleStream));

    SerModel m = SerModel::init(dims, plan.repr_mode, init_rng);
    AdamW opt(plan.optimizer);
    const auto synth = pointers(synthetic);
    const int phase1_epochs = plan.transfer_phase1_epochs.value_or(plan.epochs);
    for (int e = 0; e < phase1_epochs; ++e) {
        std::vector<const Example*> items = synth;
        const double loss = train_epoch(m, opt, items, plan.batch_size, shuffle_rng);
        logs.push_back(make_log(fold, plan, e + 1, loss, m, synth.size(), items.size()));
    }
    return m;
}

SerModel transfer_phase2(SerModel start, const FoldData& fold, const TrainPlan& plan,
                         std::vector<EpochLog>& logs) {
    plan.validate();
    auto cfg = plan.optimizer;
    cfg.lr = transfer_phase2_lr(plan);
    AdamW opt(cfg);
    Rng shuffle_rng(derive_seed(fold_seed(plan.seed, fold.fold_index), kShuffleStream + 100));
    const auto real = pointers(fold.train);
    const int offset = logs.empty() ? 0 : logs.back().epoch;
    for (int e = 0; e < plan.epochs; ++e) {
        std::vector<const Example*> items = real;
        const double loss = train_epoch(start, opt, items, plan.batch_size, shuffle_rng);
        logs.push_back(make_log(fold, plan, offset + e + 1, loss, start, 0, items.size()));
    }
    return start;
}

TrainResult train_transfer(const FoldData& fold, std::span<const Example> synthetic,
                           const TrainPlan& plan) {
    std::vector<EpochLog> logs;
    SerModel phase1 = transfer_phase1(fold, synthetic, plan, logs);
    SerModel final_model = transfer_phase2(phase1, fold, plan, logs);
    BestTracker unused;
    auto r = finish(std::move(final_model), std::move(logs), unused, plan, class_warnings(fold));
    r.phase1_model = std::move(phase1);
    return r;
}

std::vector<std::vector<const Example*>> proportional_batches(
    std::span<const Example* const> real, std::span<const Example* const> synthetic,
    int batch_size) {
    const std::size_t r = real.size(), s = synthetic.size();
    const std::size_t b = static_cast<std::size_t>(batch_size);
    const std::size_t nb = (r + s + b - 1) / b;
    std::vector<std::vector<const Example*>> out(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        out[i].insert(out[i].end(), real.begin() + static_cast<std::ptrdiff_t>(i * r / nb),
                      real.begin() + static_cast<std::ptrdiff_t>((i + 1) * r / nb));
        out[i].insert(out[i].end(), synthetic.begin() + static_cast<std::ptrdiff_t>(i * s / nb),
                      synthetic.begin() + static_cast<std::ptrdiff_t>((i + 1) * s / nb));
    }
    return out;
}

namespace {

bool has_both_domains(std::span<const Example* const> batch) {
    bool real = false, synth = false;
    for (const auto* e : batch) {
        (e->domain == corpus::Domain::real ? real : synth) = true;
    }
    return real && synth;
}

int domain_target(const Example& e) { return e.domain == corpus::Domain::synthetic ? 1 : 0; }

}  // namespace

AdversarialTrainer::AdversarialTrainer(SerModel& model, model::DomainHead& head,
                                       const TrainPlan& plan)
    : m_model(model),
      m_head(head),
      m_plan(plan),
      m_emotion_opt(plan.optimizer),
      m_domain_opt(plan.optimizer),
      m_reverse_opt(plan.optimizer) {}

double AdversarialTrainer::step_emotion(std::span<const Example* const> batch) {
    std::vector<const Example*> labeled;
    for (const auto* e : batch) {
        if (e->domain == corpus::Domain::real || m_plan.adversarial_synthetic_labels) {
            labeled.push_back(e);
        }
    }
    if (labeled.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(labeled.size());
    auto grads = SerGrads::zeros_like(m_model);
    double loss = 0;
    for (const auto* e : labeled) {
        const auto trace = model::forward(m_model, *e->features);
        auto ce = model::cross_entropy(trace.logits, e->label);
        loss += ce.loss;
        for (double& g : ce.grad) g *= inv_n;
        model::backward(m_model, trace, ce.grad, grads);
    }
    auto params = ser_params(m_model);
    m_emotion_opt.step(params, ser_grads(grads));
    return loss * inv_n;
}

std::optional<double> AdversarialTrainer::step_domain_head(std::span<const Example* const> batch) {
    if (!has_both_domains(batch)) return std::nullopt;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    auto grads = model::DomainGrads::zeros_like(m_head);
    double loss = 0;
    for (const auto* e : batch) {
        // The fuser output is treated as a constant here.
        const auto trace = model::forward(m_model, *e->features);
        const auto dt = model::domain_forward(m_head, trace.embedding);
        const auto bce = model::bce_logit(dt.logit, domain_target(*e));
        loss += bce.loss;
        model::domain_backward(m_head, dt, bce.grad * inv_n, &grads);
    }
    auto params = m_head.params();
    m_domain_opt.step(params, grads.views());
    return loss * inv_n;
}

SerGrads AdversarialTrainer::fuser_domain_gradient(std::span<const Example* const> batch,
                                                   bool reversed) const {
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const model::GradientReversal grl{m_plan.lambda_grl};
    auto grads = SerGrads::zeros_like(m_model);
    for (const auto* e : batch) {
        const auto trace = model::forward(m_model, *e->features);
        const auto dt = model::domain_forward(m_head, grl.forward(trace.embedding));
        const auto bce = model::bce_logit(dt.logit, domain_target(*e));
        auto de = model::domain_backward(m_head, dt, bce.grad * inv_n, nullptr);
        if (reversed) de = grl.backward(de);
        model::backward_embedding(m_model, trace, de, grads);
    }
    return grads;
}

std::optional<double> AdversarialTrainer::step_reverse(std::span<const Example* const> batch) {
    if (!has_both_domains(batch)) return std::nullopt;
    const auto grads = fuser_domain_gradient(batch, true);
    auto params = m_model.fuser_params();
    const auto views = grads.fuser();
    m_reverse_opt.step(params, views);
    return 0.0;
}

double AdversarialTrainer::train_batch(std::span<const Example* const> batch,
                                       std::size_t& skipped) {
    const double loss = step_emotion(batch);
    if (!step_domain_head(batch)) {
        ++skipped;
        return loss;
    }
    step_reverse(batch);
    return loss;
}

TrainResult train_adversarial(const FoldData& fold, std::span<const Example> synthetic,
                              const TrainPlan& plan) {
    plan.validate();
    const auto dims = infer_dims(fold, synthetic, plan);
    const auto seed = fold_seed(plan.seed, fold.fold_index);
    Rng init_rng(derive_seed(seed, kInitStream));
    Rng shuffle_rng(derive_seed(seed, kShuffleStream));

    SerModel m = SerModel::init(dims, plan.repr_mode, init_rng);
    auto head = model::DomainHead::init(dims.hidden_dim, plan.domain_hidden_dim, init_rng);
    AdversarialTrainer trainer(m, head, plan);

    std::vector<EpochLog> logs;
    std::size_t skipped = 0;
    auto real = pointers(fold.train);
    auto synth = pointers(synthetic);
    for (int e = 0; e < plan.epochs; ++e) {
        shuffle_rng.shuffle(std::span(real));
        shuffle_rng.shuffle(std::span(synth));
        double loss_sum = 0;
        std::size_t labeled = 0;
        for (const auto& batch : proportional_batches(real, synth, plan.batch_size)) {
            std::size_t n = 0;
            for (const auto* ex : batch) {
                if (ex->domain == corpus::Domain::real || plan.adversarial_synthetic_labels) ++n;
            }
            loss_sum += trainer.train_batch(batch, skipped) * static_cast<double>(n);
            labeled += n;
        }
        const double loss = labeled ? loss_sum / static_cast<double>(labeled) : 0.0;
        logs.push_back(make_log(fold, plan, e + 1, loss, m, synth.size(), real.size() + synth.size()));
    }
    BestTracker unused;
    auto r = finish(std::move(m), std::move(logs), unused, plan, class_warnings(fold));
    r.skipped_domain_batches = skipped;
    if (skipped > 0) {
        r.warnings.push_back("fold " + std::to_string(fold.fold_index) + ": " +
                             std::to_string(skipped) +
                             " single-domain batch(es) skipped the domain steps");
    }
    return r;
}

TrainResult train(const FoldData& fold, std::span<const Example> synthetic, const TrainPlan& plan) {
    switch (plan.strategy) {
        case Strategy::baseline: return train_baseline(fold, plan);
        case Strategy::random_mix: return train_random_mix(fold, synthetic, plan);
        case Strategy::adversarial: return train_adversarial(fold, synthetic, plan);
        case Strategy::transfer: return train_transfer(fold, synthetic, plan);
        case Strategy::curriculum: return train_curriculum(fold, synthetic, plan);
    }
    throw ConfigError("unknown strategy");
}

std::vector<corpus::UtteranceRecord> synthetic_pool(const corpus::Corpus& corpus) {
    return corpus::select_synthetic_subset(
        corpus.records, 10,
        {corpus::Label::happy, corpus::Label::sad, corpus::Label::angry, corpus::Label::neutral},
        promptgen::NarrativeStyle::dialogue);
}

CrossValidation run_cross_validation(const corpus::Corpus& corpus, const TrainPlan& plan,
                                     int jobs) {
    plan.validate();
    const auto splits = corpus::make_folds(corpus.records, plan.seed);
    const auto pool = plan.strategy == Strategy::baseline ? std::vector<corpus::UtteranceRecord>{}
                                                          : synthetic_pool(corpus);
    if (plan.strategy != Strategy::baseline && pool.empty()) {
        throw ValidationError("strategy " + std::string(to_string(plan.strategy)) +
                              " needs synthetic utterances but the corpus has none");
    }

    CrossValidation cv;
    cv.folds.resize(splits.size());
    run_bounded(splits.size(), jobs, [&](std::size_t k) {
        const FoldData fold = make_fold_data(corpus, splits[k]);
        std::vector<Example> synthetic;
        if (plan.strategy != Strategy::baseline) {
            const auto sampled = corpus::sample_ratio(
                pool, fold.train.size(), plan.ratio,
                derive_seed(fold_seed(plan.seed, fold.fold_index), kSampleStream));
            synthetic = to_examples(corpus, sampled);
        }
        FoldRun run;
        run.fold = fold.fold_index;
        run.synthetic_used = synthetic.size();
        run.result = train(fold, synthetic, plan);
        run.test = metrics::make_fold_result(fold.fold_index, evaluate(run.result.model, fold.test));
        cv.folds[k] = std::move(run);
    });

    std::vector<metrics::FoldResult> results;
    for (const auto& f : cv.folds) results.push_back(f.test);
    cv.aggregate = metrics::aggregate_folds(results, corpus::kNumSessions);
    return cv;
}

}  // namespace sersyn::train
