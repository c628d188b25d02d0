#include "doctest.h"

#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

#include "sersyn/errors.hpp"
#include "sersyn/strategies.hpp"

using namespace sersyn;
using namespace sersyn::train;
using corpus::Domain;

namespace {

struct Fixture {
    corpus::Corpus corpus;
    FoldData fold;
    std::vector<Example> synthetic;
};

// Small separable problem: 40 real (fold 1 split) and 40 synthetic items.
const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture f;
        corpus::BlobParams p;
        p.n_per_class = 10;
        p.n_synthetic = 40;
        p.dims = 8;
        p.layers = 2;
        p.t_min = 4;
        p.t_max = 8;
        p.domain_shift = 3;
        p.seed = 5;
        f.corpus = corpus::generate_blob_corpus(p);
        const auto splits = corpus::make_folds(f.corpus.records, 5);
        f.fold = make_fold_data(f.corpus, splits[0]);
        f.synthetic = to_examples(f.corpus, synthetic_pool(f.corpus));
        return f;
    }();
    return f;
}

TrainPlan small_plan(Strategy s) {
    TrainPlan p;
    p.strategy = s;
    p.epochs = 6;
    p.batch_size = 8;
    p.hidden_dim = 8;
    p.domain_hidden_dim = 6;
    p.seed = 3;
    p.optimizer.lr = 1e-2;
    p.repr_mode = model::ReprMode::weighted_layers;
    p.transfer_phase1_epochs = 3;
    p.curriculum_chunks = 3;
    p.curriculum_interval = 2;
    return p;
}

bool same_model(const model::SerModel& a, const model::SerModel& b) {
    return a.fusion_logits == b.fusion_logits && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
           a.b2 == b.b2;
}

std::vector<std::vector<double>> snapshot(const std::vector<model::ConstParamView>& views) {
    std::vector<std::vector<double>> out;
    for (const auto& v : views) out.emplace_back(v.values.begin(), v.values.end());
    return out;
}

bool bit_identical(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size() ||
            std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

std::vector<model::ConstParamView> fuser_views(const model::SerModel& m) {
    std::vector<model::ConstParamView> out;
    for (const auto& v : m.all_params()) {
        if (v.name == "fusion_logits" || v.name == "w1" || v.name == "b1") out.push_back(v);
    }
    return out;
}

std::vector<model::ConstParamView> head_views(const model::SerModel& m) {
    std::vector<model::ConstParamView> out;
    for (const auto& v : m.all_params()) {
        if (v.name == "w2" || v.name == "b2") out.push_back(v);
    }
    return out;
}

Example ex(std::string id, double duration, Domain d = Domain::synthetic) {
    return {std::move(id), nullptr, 0, d, duration};
}

}  // namespace

TEST_CASE("strategy and policy names") {
    for (auto s : {Strategy::baseline, Strategy::random_mix, Strategy::adversarial,
                   Strategy::transfer, Strategy::curriculum}) {
        CHECK(parse_strategy(to_string(s)) == s);
    }
    CHECK_THROWS_AS(parse_strategy("mixup"), ConfigError);
    CHECK(parse_checkpoint_policy("best_val") == CheckpointPolicy::best_val);
    CHECK_THROWS_AS(parse_checkpoint_policy("best"), ConfigError);
}

TEST_CASE("plan validation and checkpoint policy defaults") {
    TrainPlan p;
    CHECK_NOTHROW(p.validate());
    CHECK(p.effective_policy() == CheckpointPolicy::best_val);
    p.checkpoint_policy = CheckpointPolicy::last_epoch;
    CHECK(p.effective_policy() == CheckpointPolicy::last_epoch);
    p.strategy = Strategy::adversarial;
    p.checkpoint_policy = CheckpointPolicy::best_val;
    CHECK(p.effective_policy() == CheckpointPolicy::last_epoch);

    p.strategy = Strategy::curriculum;
    p.epochs = 20;  // (5 - 1) * 5 = 20 is not < 20
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.strategy = Strategy::random_mix;
    CHECK_NOTHROW(p.validate());
    p.batch_size = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("checkpoint selection") {
    std::vector<EpochLog> logs(3);
    const double was[] = {0.6, 0.7, 0.7};
    for (int i = 0; i < 3; ++i) {
        logs[i].epoch = i + 1;
        logs[i].val_wa = was[i];
    }
    CHECK(select_checkpoint(logs, CheckpointPolicy::best_val) == 2);
    CHECK(select_checkpoint(logs, CheckpointPolicy::last_epoch) == 3);
    CHECK_THROWS_AS(select_checkpoint({}, CheckpointPolicy::best_val), ValidationError);
}

TEST_CASE("curriculum schedule follows the closed form") {
    std::vector<Example> items;
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        items.push_back(ex("s" + std::to_string(i), 0.1 * static_cast<double>(rng.below(20))));
    }
    const CurriculumSchedule sched(items, 5, 5);
    for (int e = 0; e < 50; ++e) {
        const std::size_t chunk = std::min(e / 5, 4);
        CHECK(sched.active_count(e) == (chunk + 1) * 50 / 5);
    }
    CHECK(sched.active_count(0) == 10);
    CHECK(sched.active_count(19) == 40);
    CHECK(sched.active_count(20) == 50);

    for (std::size_t i = 1; i < sched.order().size(); ++i) {
        const auto& a = items[sched.order()[i - 1]];
        const auto& b = items[sched.order()[i]];
        CHECK((a.duration_s < b.duration_s || (a.duration_s == b.duration_s && a.id < b.id)));
    }

    std::vector<Example> seven;
    for (int i = 0; i < 7; ++i) seven.push_back(ex("x" + std::to_string(i), 7 - i));
    const CurriculumSchedule s7(seven, 5, 1);
    CHECK(s7.chunk_ends() == std::vector<std::size_t>{1, 2, 4, 5, 7});
    CHECK(s7.order().front() == 6);
}

TEST_CASE("curriculum training logs the active synthetic count") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::curriculum);
    const auto r = train_curriculum(f.fold, f.synthetic, plan);
    const CurriculumSchedule sched(f.synthetic, 3, 2);
    REQUIRE(r.logs.size() == 6);
    for (int e = 0; e < 6; ++e) {
        CHECK(r.logs[e].active_synth == sched.active_count(e));
        CHECK(r.logs[e].epoch_size == f.fold.train.size() + sched.active_count(e));
    }
    CHECK(r.logs.back().active_synth == f.synthetic.size());
    CHECK(r.selected_epoch == 6);
}

TEST_CASE("random mix trains on real plus all synthetic items every epoch") {
    const auto& f = fixture();
    const auto r = train_random_mix(f.fold, f.synthetic, small_plan(Strategy::random_mix));
    for (const auto& l : r.logs) {
        CHECK(l.active_synth == f.synthetic.size());
        CHECK(l.epoch_size == f.fold.train.size() + f.synthetic.size());
    }
    const auto j = to_json(r.logs.front());
    CHECK(j.at("strategy") == "random_mix");
    CHECK(j.at("epoch") == 1);
    CHECK(j.size() == 7);
}

TEST_CASE("baseline learns the separable blobs") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::baseline);
    plan.epochs = 30;
    const auto r = train_baseline(f.fold, plan);
    CHECK(r.logs.back().train_loss < 0.1);
    CHECK(r.logs.back().train_loss < r.logs.front().train_loss);
    const auto acc = metrics::wa_ua(evaluate(r.model, f.fold.test));
    CHECK(acc.wa >= 0.9);
    // best_val picks the earliest epoch with the top validation WA.
    double best = -1;
    int best_epoch = 0;
    for (const auto& l : r.logs) {
        if (l.val_wa > best) best = l.val_wa, best_epoch = l.epoch;
    }
    CHECK(r.selected_epoch == best_epoch);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto& f = fixture();
    for (auto s : {Strategy::baseline, Strategy::random_mix, Strategy::adversarial,
                   Strategy::transfer, Strategy::curriculum}) {
        const auto plan = small_plan(s);
        const auto a = train::train(f.fold, f.synthetic, plan);
        const auto b = train::train(f.fold, f.synthetic, plan);
        CHECK(same_model(a.model, b.model));
        auto other = plan;
        other.seed = 4;
        CHECK_FALSE(same_model(a.model, train::train(f.fold, f.synthetic, other).model));
    }
}

TEST_CASE("transfer hands phase 1 weights to a fresh low-rate phase 2") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::transfer);
    plan.optimizer.lr = 1e-3;
    CHECK(transfer_phase2_lr(plan) == doctest::Approx(1e-4));

    const auto r = train_transfer(f.fold, f.synthetic, plan);
    REQUIRE(r.phase1_model);
    CHECK(r.logs.size() == 3 + 6);
    CHECK(r.logs[3].epoch == 4);
    CHECK(r.logs[0].active_synth == f.synthetic.size());
    CHECK(r.logs[3].active_synth == 0);

    std::vector<EpochLog> logs;
    const auto p1 = transfer_phase1(f.fold, f.synthetic, plan, logs);
    CHECK(same_model(p1, *r.phase1_model));
    const auto p2 = transfer_phase2(p1, f.fold, plan, logs);
    CHECK(same_model(p2, r.model));
    CHECK_FALSE(same_model(p1, p2));

    CHECK_THROWS_AS(train_transfer(f.fold, {}, plan), ValidationError);
}

TEST_CASE("proportional batches mix domains by count") {
    std::vector<Example> real, synth;
    for (int i = 0; i < 10; ++i) real.push_back(ex("r" + std::to_string(i), 1, Domain::real));
    for (int i = 0; i < 5; ++i) synth.push_back(ex("s" + std::to_string(i), 1));
    std::vector<const Example*> rp, sp;
    for (auto& e : real) rp.push_back(&e);
    for (auto& e : synth) sp.push_back(&e);
    const auto batches = proportional_batches(rp, sp, 4);
    REQUIRE(batches.size() == 4);  // ceil(15 / 4)
    std::size_t total = 0;
    for (const auto& b : batches) {
        total += b.size();
        // Independent floor slicing of both lists can overshoot by one.
        CHECK(b.size() <= 5);
        CHECK(b.size() >= 3);
        CHECK(std::any_of(b.begin(), b.end(), [](auto* e) { return e->domain == Domain::real; }));
        CHECK(std::any_of(b.begin(), b.end(), [](auto* e) { return e->domain != Domain::real; }));
    }
    CHECK(total == 15);
    CHECK(batches[0][0] == &real[0]);
}

TEST_CASE("adversarial steps touch only their own parameters") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::adversarial);
    Rng rng(1);
    auto m = model::SerModel::init({2, 8, 8, 4}, model::ReprMode::weighted_layers, rng);
    auto head = model::DomainHead::init(8, 6, rng);
    std::vector<const Example*> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(&f.fold.train[i]);
    for (int i = 0; i < 4; ++i) batch.push_back(&f.synthetic[i]);

    AdversarialTrainer trainer(m, head, plan);
    trainer.step_emotion(batch);

    auto fuser0 = snapshot(fuser_views(m));
    auto ser_head0 = snapshot(head_views(m));
    auto dom0 = snapshot(head.const_params());
    REQUIRE(trainer.step_domain_head(batch));
    CHECK(bit_identical(snapshot(fuser_views(m)), fuser0));
    CHECK(bit_identical(snapshot(head_views(m)), ser_head0));
    CHECK_FALSE(bit_identical(snapshot(head.const_params()), dom0));

    dom0 = snapshot(head.const_params());
    REQUIRE(trainer.step_reverse(batch));
    CHECK(bit_identical(snapshot(head.const_params()), dom0));
    CHECK(bit_identical(snapshot(head_views(m)), ser_head0));
    CHECK_FALSE(bit_identical(snapshot(fuser_views(m)), fuser0));

    const auto plain = trainer.fuser_domain_gradient(batch, false);
    const auto rev = trainer.fuser_domain_gradient(batch, true);
    const auto pv = plain.fuser();
    const auto rv = rev.fuser();
    REQUIRE(pv.size() == rv.size());
    bool nonzero = false;
    for (std::size_t k = 0; k < pv.size(); ++k) {
        for (std::size_t i = 0; i < pv[k].values.size(); ++i) {
            CHECK(rv[k].values[i] == -plan.lambda_grl * pv[k].values[i]);
            nonzero = nonzero || pv[k].values[i] != 0;
        }
    }
    CHECK(nonzero);
}

TEST_CASE("single-domain adversarial batches skip the domain steps") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::adversarial);
    Rng rng(1);
    auto m = model::SerModel::init({2, 8, 8, 4}, model::ReprMode::weighted_layers, rng);
    auto head = model::DomainHead::init(8, 6, rng);
    std::vector<const Example*> batch{&f.fold.train[0], &f.fold.train[1]};
    AdversarialTrainer trainer(m, head, plan);
    const auto dom0 = snapshot(head.const_params());
    std::size_t skipped = 0;
    trainer.train_batch(batch, skipped);
    CHECK(skipped == 1);
    CHECK(bit_identical(snapshot(head.const_params()), dom0));
}

TEST_CASE("cross-validation is independent of the worker count") {
    const auto& f = fixture();
    auto plan = small_plan(Strategy::random_mix);
    plan.epochs = 2;
    plan.ratio = 0.5;
    const auto a = run_cross_validation(f.corpus, plan, 1);
    const auto b = run_cross_validation(f.corpus, plan, 3);
    REQUIRE(a.folds.size() == 5);
    for (int k = 0; k < 5; ++k) {
        CHECK(same_model(a.folds[k].result.model, b.folds[k].result.model));
        const auto real_train = a.folds[k].result.logs.front().epoch_size - a.folds[k].synthetic_used;
        CHECK(a.folds[k].synthetic_used == static_cast<std::size_t>(std::llround(real_train * 0.5)));
        CHECK(real_train == 26);  // 32 non-test, floor(32 / 5) = 6 held out
        CHECK(a.folds[k].test.confusion == b.folds[k].test.confusion);
    }
    CHECK(a.aggregate.mean_wa == b.aggregate.mean_wa);

    corpus::Corpus real_only;
    for (const auto& r : f.corpus.records) {
        if (r.domain == Domain::real) {
            real_only.records.push_back(r);
            real_only.features.emplace(r.id, f.corpus.features.at(r.id));
        }
    }
    CHECK_THROWS_AS(run_cross_validation(real_only, plan), ValidationError);
    plan.strategy = Strategy::baseline;
    CHECK_NOTHROW(run_cross_validation(real_only, plan));
}
