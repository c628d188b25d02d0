#include "doctest.h"

#include <cmath>
#include <fstream>
#include <limits>

#include "oracles.hpp"
#include "sersyn/errors.hpp"
#include "sersyn/model.hpp"
#include "test_util.hpp"

using namespace sersyn;
using namespace sersyn::model;

namespace {

// 1 x 1 x D tensor from values.
FeatureTensor frame(std::initializer_list<float> v) {
    FeatureTensor x(1, 1, static_cast<std::uint16_t>(v.size()));
    std::copy(v.begin(), v.end(), x.data.begin());
    return x;
}

// Identity-ish model: D=2, H=2, C=2 with hand-set weights.
SerModel tiny_model() {
    Rng rng(1);
    auto m = SerModel::init({1, 2, 2, 2}, ReprMode::last_layer, rng);
    m.w1 = {1, 0, 0, 1};
    m.b1 = {0, 0};
    m.w2 = {1, -1, 2, 0};
    m.b2 = {0.5, 0};
    return m;
}

}  // namespace

TEST_CASE("softmax and layer fusion") {
    const auto w = softmax(std::vector<double>{std::log(3.0), 0.0});
    CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-15));

    const auto big = softmax(std::vector<double>{1000.0, 0.0});
    CHECK(big[0] == 1.0);
    CHECK(std::isfinite(big[1]));

    FeatureTensor x(2, 1, 2);
    x.at(0, 0, 0) = 4;
    x.at(0, 0, 1) = 8;
    x.at(1, 0, 0) = 0;
    x.at(1, 0, 1) = 4;
    const auto fused = fuse_layers(x, std::vector<double>{std::log(3.0), 0.0});
    CHECK(fused[0] == doctest::Approx(3.0));
    CHECK(fused[1] == doctest::Approx(7.0));
}

TEST_CASE("forward on a hand-built model") {
    const auto m = tiny_model();
    // Frames (1, -2) and (3, 4): ReLU gives (1,0),(3,4); mean (2, 2).
    FeatureTensor x(1, 2, 2);
    x.data = {1, -2, 3, 4};
    const auto tr = forward(m, x);
    CHECK(tr.embedding == std::vector<double>{2, 2});
    CHECK(tr.logits[0] == doctest::Approx(0.5));
    CHECK(tr.logits[1] == doctest::Approx(4.0));
    CHECK(predict(m, x) == 1);

    // Tie goes to the lowest index.
    auto tie = m;
    tie.w2 = {0, 0, 0, 0};
    tie.b2 = {0, 0};
    CHECK(predict(tie, x) == 0);

    CHECK_THROWS_AS(forward(m, frame({1, 2, 3})), ShapeError);
}

TEST_CASE("last-layer mode reads only the top layer") {
    Rng rng(2);
    auto m = SerModel::init({3, 2, 2, 2}, ReprMode::last_layer, rng);
    CHECK(m.fusion_logits.empty());
    FeatureTensor a(3, 1, 2), b(3, 1, 2);
    a.data = {9, 9, 7, 7, 1, 2};
    b.data = {-5, 0, 3, 3, 1, 2};
    CHECK(forward(m, a).logits == forward(m, b).logits);

    SerGrads g = SerGrads::zeros_like(m);
    const auto tr = forward(m, a);
    backward(m, tr, cross_entropy(tr.logits, 0).grad, g);
    CHECK(g.fusion_logits.empty());
    for (const auto& v : g.fuser()) CHECK(v.name != "fusion_logits");
}

TEST_CASE("fresh weighted model weighs layers uniformly") {
    Rng rng(3);
    const auto m = SerModel::init({4, 8, 4, 4}, ReprMode::weighted_layers, rng);
    for (double w : m.fusion_weights()) CHECK(w == doctest::Approx(0.25));
    const double bound = 1 / std::sqrt(8.0);
    for (double w : m.w1) CHECK(std::abs(w) <= bound);
}

TEST_CASE("losses") {
    const auto ce = cross_entropy(std::vector<double>{0, 0, 0, 0}, 2);
    CHECK(ce.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(ce.grad[2] == doctest::Approx(-0.75));
    CHECK(ce.grad[0] == doctest::Approx(0.25));

    const auto extreme = cross_entropy(std::vector<double>{1000, 0}, 1);
    CHECK(extreme.loss == doctest::Approx(1000));
    CHECK(cross_entropy(std::vector<double>{-1000, 0}, 1).loss == doctest::Approx(0).epsilon(1e-12));
    CHECK_THROWS(cross_entropy(std::vector<double>{0, 0}, 2));

    CHECK(bce_logit(0, 0).loss == doctest::Approx(std::log(2.0)));
    CHECK(bce_logit(0, 1).loss == doctest::Approx(std::log(2.0)));
    CHECK(bce_logit(0, 1).grad == doctest::Approx(-0.5));
    CHECK(bce_logit(800, 0).loss == doctest::Approx(800));
    CHECK(bce_logit(-800, 0).loss == doctest::Approx(0).epsilon(1e-12));
    CHECK(std::isfinite(bce_logit(-800, 1).loss));
}

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto r = oracle::check_gradients(seed);
        INFO("seed " << seed << " worst " << r.worst);
        CHECK(r.max_rel < 1e-4);
    }
    // Reversal strength other than one.
    const auto r = oracle::check_gradients(99, 0.3);
    INFO(r.worst);
    CHECK(r.max_rel < 1e-4);
}

TEST_CASE("zero logit gradient gives zero parameter gradient") {
    Rng rng(5);
    const auto m = SerModel::init({2, 3, 4, 3}, ReprMode::weighted_layers, rng);
    FeatureTensor x(2, 3, 3);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    SerGrads g = SerGrads::zeros_like(m);
    backward(m, forward(m, x), std::vector<double>{0, 0, 0}, g);
    for (const auto& v : g.fuser()) {
        for (double d : v.values) CHECK(d == 0.0);
    }
    for (const auto& v : g.head()) {
        for (double d : v.values) CHECK(d == 0.0);
    }
}

TEST_CASE("gradient reversal") {
    const std::vector<double> g{1.0, -2.5, 0.0};
    CHECK(grad_reverse(g, 1.0) == std::vector<double>{-1.0, 2.5, -0.0});
    CHECK(grad_reverse(g, 0.5) == std::vector<double>{-0.5, 1.25, -0.0});
    GradientReversal grl{2.0};
    CHECK(grl.forward(g) == g);
    CHECK(grl.backward(g) == std::vector<double>{-2.0, 5.0, -0.0});
}

TEST_CASE("mean pooling is invariant to frame order") {
    Rng rng(8);
    const auto m = SerModel::init({2, 5, 6, 4}, ReprMode::weighted_layers, rng);
    FeatureTensor x(2, 6, 5);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    FeatureTensor y = x;
    const std::size_t perm[6] = {3, 0, 5, 1, 4, 2};
    for (std::size_t l = 0; l < 2; ++l) {
        for (std::size_t t = 0; t < 6; ++t) {
            for (std::size_t d = 0; d < 5; ++d) y.at(l, t, d) = x.at(l, perm[t], d);
        }
    }
    const auto a = forward(m, x).logits;
    const auto b = forward(m, y).logits;
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-12));
}

TEST_CASE("AdamW single scalar step") {
    std::vector<double> theta{1.0};
    const std::vector<double> g{1.0};
    AdamW opt({1e-3, 0.9, 0.999, 1e-8, 2e-3});
    const ParamView p{"theta", theta};
    const ConstParamView gv{"theta", g};
    opt.step(std::span(&p, 1), std::span(&gv, 1));
    CHECK(std::abs(theta[0] - 0.998998) < 5e-7);
    CHECK(opt.step_count() == 1);
    CHECK(opt.first_moment(0)[0] == doctest::Approx(0.1));
}

TEST_CASE("AdamW zero gradient and zero decay is a fixed point") {
    std::vector<double> theta{0.3, -2.0};
    const std::vector<double> g{0.0, 0.0};
    AdamW opt({1e-2, 0.9, 0.999, 1e-8, 0.0});
    const ParamView p{"t", theta};
    const ConstParamView gv{"t", g};
    for (int i = 0; i < 5; ++i) opt.step(std::span(&p, 1), std::span(&gv, 1));
    CHECK(theta == std::vector<double>{0.3, -2.0});
}

TEST_CASE("AdamW matches the reference over ten steps") {
    Rng rng(17);
    std::vector<double> theta(5), ref_theta;
    for (auto& t : theta) t = rng.normal();
    ref_theta = theta;
    AdamW opt;
    oracle::RefAdamW ref;
    for (int s = 0; s < 10; ++s) {
        std::vector<double> g(5);
        for (auto& v : g) v = rng.normal();
        const ParamView p{"t", theta};
        const ConstParamView gv{"t", g};
        opt.step(std::span(&p, 1), std::span(&gv, 1));
        ref.step(ref_theta, g);
    }
    for (int i = 0; i < 5; ++i) CHECK(std::abs(theta[i] - ref_theta[i]) < 1e-10);
}

TEST_CASE("AdamW rejects non-finite gradients without touching parameters") {
    std::vector<double> a{1.0, 2.0}, b{3.0};
    const std::vector<double> ga{0.1, 0.2};
    const std::vector<double> gb{std::numeric_limits<double>::quiet_NaN()};
    AdamW opt;
    const ParamView ps[] = {{"a", a}, {"b", b}};
    const ConstParamView gs[] = {{"a", ga}, {"b", gb}};
    try {
        opt.step(ps, gs);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
    CHECK(a == std::vector<double>{1.0, 2.0});
    CHECK(b == std::vector<double>{3.0});
    CHECK(opt.step_count() == 0);

    const ConstParamView wrong[] = {{"a", ga}, {"c", ga}};
    CHECK_THROWS_AS(opt.step(ps, wrong), ShapeError);
}

TEST_CASE("checkpoints round-trip exactly") {
    test::TempDir dir("ckpt");
    Rng rng(21);
    auto m = SerModel::init({3, 7, 5, 4}, ReprMode::weighted_layers, rng);
    for (auto& z : m.fusion_logits) z = rng.normal();
    const auto path = dir.path() / "c.bin";
    save_checkpoint(path, m, {"curriculum", 17, 42});
    const auto back = load_checkpoint(path);
    CHECK(back.model.dims == m.dims);
    CHECK(back.model.mode == m.mode);
    CHECK(back.model.fusion_logits == m.fusion_logits);
    CHECK(back.model.w1 == m.w1);
    CHECK(back.model.b2 == m.b2);
    CHECK(back.info.strategy == "curriculum");
    CHECK(back.info.epoch == 17);
    CHECK(back.info.seed == 42);

    CHECK_NOTHROW(load_checkpoint(path, m.dims, m.mode));
    CHECK_THROWS_AS(load_checkpoint(path, {3, 7, 6, 4}, m.mode), ValidationError);
    CHECK_THROWS_AS(load_checkpoint(path, m.dims, ReprMode::last_layer), ValidationError);

    std::ofstream(dir.path() / "bad.bin") << "not a checkpoint\n";
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "bad.bin"), FormatError);

    // Truncated payload.
    const auto size = std::filesystem::file_size(path);
    std::filesystem::copy_file(path, dir.path() / "short.bin");
    std::filesystem::resize_file(dir.path() / "short.bin", size - 8);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "short.bin"), FormatError);
}
