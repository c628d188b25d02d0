#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls into the code it checks except to
// evaluate losses for finite differences.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sersyn/model.hpp"
#include "sersyn/rng.hpp"

namespace sersyn::oracle {

/// Relative error with a 1e-6 floor so entries that are zero analytically
/// compare on absolute error instead of dividing by nothing.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct GradCheck {
    double max_rel = 0;
    std::string worst;
    std::size_t checked = 0;

    void note(double analytic, double numeric, const std::string& what) {
        ++checked;
        const double e = rel_err(analytic, numeric);
        if (e > max_rel) {
            max_rel = e;
            worst = what;
        }
    }
};

/// Random small instance: D=6, H=4, C=3, L=3, T in 1..8, weighted layers,
/// non-zero fusion logits, and a domain head behind a reversal of `lambda`.
/// Compares every analytic parameter gradient against central differences.
inline GradCheck check_gradients(std::uint64_t seed, double lambda = 1.0, double eps = 1e-5) {
    using namespace model;
    Rng rng(seed);
    const ModelDims dims{3, 6, 4, 3};
    SerModel m = SerModel::init(dims, ReprMode::weighted_layers, rng);
    for (auto& z : m.fusion_logits) z = rng.normal();
    DomainHead dh = DomainHead::init(dims.hidden_dim, 64, rng);

    const auto frames = static_cast<std::uint32_t>(1 + rng.below(8));
    FeatureTensor x(3, frames, 6);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    const int label = static_cast<int>(rng.below(3));
    const int domain = static_cast<int>(rng.below(2));

    auto ce_loss = [&]() { return cross_entropy(forward(m, x).logits, label).loss; };
    auto bce_loss = [&]() {
        const auto tr = forward(m, x);
        return bce_logit(domain_forward(dh, tr.embedding).logit, domain).loss;
    };

    // Analytic gradients.
    const auto trace = forward(m, x);
    SerGrads g_ce = SerGrads::zeros_like(m);
    backward(m, trace, cross_entropy(trace.logits, label).grad, g_ce);

    const auto dtr = domain_forward(dh, trace.embedding);
    DomainGrads g_dom = DomainGrads::zeros_like(dh);
    const auto de = domain_backward(dh, dtr, bce_logit(dtr.logit, domain).grad, &g_dom);
    SerGrads g_rev = SerGrads::zeros_like(m);
    backward_embedding(m, trace, grad_reverse(de, lambda), g_rev);

    auto central = [&](double& p, auto&& loss) {
        const double keep = p;
        p = keep + eps;
        const double up = loss();
        p = keep - eps;
        const double down = loss();
        p = keep;
        return (up - down) / (2 * eps);
    };

    GradCheck out;
    auto fuser = m.fuser_params();
    auto head = m.head_params();
    const auto ce_fuser = g_ce.fuser();
    const auto ce_head = g_ce.head();
    const auto rev_fuser = g_rev.fuser();
    for (std::size_t k = 0; k < fuser.size(); ++k) {
        for (std::size_t i = 0; i < fuser[k].values.size(); ++i) {
            const std::string tag = std::string(fuser[k].name) + "[" + std::to_string(i) + "]";
            out.note(ce_fuser[k].values[i], central(fuser[k].values[i], ce_loss), "ce " + tag);
            // Through the reversal the fuser sees -lambda times the true gradient.
            out.note(rev_fuser[k].values[i], -lambda * central(fuser[k].values[i], bce_loss),
                     "grl " + tag);
        }
    }
    for (std::size_t k = 0; k < head.size(); ++k) {
        for (std::size_t i = 0; i < head[k].values.size(); ++i) {
            out.note(ce_head[k].values[i], central(head[k].values[i], ce_loss),
                     "ce " + std::string(head[k].name) + "[" + std::to_string(i) + "]");
        }
    }
    auto dparams = dh.params();
    const auto dgrads = g_dom.views();
    for (std::size_t k = 0; k < dparams.size(); ++k) {
        for (std::size_t i = 0; i < dparams[k].values.size(); ++i) {
            out.note(dgrads[k].values[i], central(dparams[k].values[i], bce_loss),
                     "domain " + std::string(dparams[k].name) + "[" + std::to_string(i) + "]");
        }
    }
    return out;
}

/// Textbook AdamW with decoupled weight decay, written from scratch.
struct RefAdamW {
    double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 2e-3;
    int t = 0;
    std::vector<double> m, v;

    void step(std::vector<double>& theta, const std::vector<double>& g) {
        if (m.empty()) m.assign(theta.size(), 0.0), v.assign(theta.size(), 0.0);
        ++t;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            theta[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * theta[i]);
        }
    }
};

struct WaUa {
    double wa = 0, ua = 0;
};

/// Per-utterance recount: WA = fraction correct, UA = mean over the classes
/// that occur in `truth` of their per-class hit rate.
inline WaUa recount(const std::vector<int>& truth, const std::vector<int>& pred) {
    std::size_t hits = 0;
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, count
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& [h, n] = per_class[truth[i]];
        ++n;
        if (truth[i] == pred[i]) ++h, ++hits;
    }
    WaUa r;
    r.wa = static_cast<double>(hits) / static_cast<double>(truth.size());
    for (const auto& [c, hn] : per_class) {
        r.ua += static_cast<double>(hn.first) / static_cast<double>(hn.second);
    }
    r.ua /= static_cast<double>(per_class.size());
    return r;
}

}  // namespace sersyn::oracle
