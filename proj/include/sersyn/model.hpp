#pragma once

// Downstream SER classifier over frozen layer-wise features, the domain
// classifier used for adversarial training, losses, hand-written reverse
// mode, gradient reversal and AdamW. All arithmetic is 64-bit; features
// arrive as 32-bit floats.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sersyn/corpus.hpp"
#include "sersyn/rng.hpp"

namespace sersyn::model {

using corpus::FeatureTensor;

enum class ReprMode { last_layer, weighted_layers };

std::string_view to_string(ReprMode mode);
ReprMode parse_repr_mode(std::string_view name);

struct ModelDims {
    std::size_t layers = 1;
    std::size_t input_dim = 768;
    std::size_t hidden_dim = 128;
    std::size_t num_classes = corpus::kNumClasses;

    bool operator==(const ModelDims&) const = default;
};

/// Named mutable view of one parameter array.
struct ParamView {
    std::string_view name;
    std::span<double> values;
};

struct ConstParamView {
    std::string_view name;
    std::span<const double> values;
};

/// Layer fusion + linear(D->H) + ReLU + mean pool (the "feature fuser"),
/// followed by linear(H->C) (the SER head). Weights are row-major.
struct SerModel {
    ModelDims dims;
    ReprMode mode = ReprMode::weighted_layers;
    std::vector<double> fusion_logits;  // L entries; empty in last-layer mode
    std::vector<double> w1;             // H x D
    std::vector<double> b1;             // H
    std::vector<double> w2;             // C x H
    std::vector<double> b2;             // C

    /// Linear layers draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fusion
    /// logits start at zero so every layer weighs 1/L.
    static SerModel init(const ModelDims& dims, ReprMode mode, Rng& rng);

    /// softmax(fusion_logits); {1} in last-layer mode.
    std::vector<double> fusion_weights() const;

    std::vector<ParamView> fuser_params();
    std::vector<ParamView> head_params();
    std::vector<ConstParamView> all_params() const;
};

/// Gradients mirroring SerModel's layout.
struct SerGrads {
    std::vector<double> fusion_logits;  // empty in last-layer mode
    std::vector<double> w1, b1, w2, b2;

    static SerGrads zeros_like(const SerModel& model);
    void scale(double factor);

    std::vector<ConstParamView> fuser() const;
    std::vector<ConstParamView> head() const;
};

struct ForwardTrace {
    const FeatureTensor* input = nullptr;  // must outlive the trace
    std::size_t frames = 0;
    std::vector<double> fusion_weights;  // L, or {1} in last-layer mode
    std::vector<double> fused;           // T x D
    std::vector<double> pre;             // T x H, before ReLU
    std::vector<double> embedding;       // H, mean over frames of ReLU(pre)
    std::vector<double> logits;          // C
};

std::vector<double> softmax(std::span<const double> z);

/// T x D matrix: sum over layers of softmax(fusion_logits)[l] * x[l].
std::vector<double> fuse_layers(const FeatureTensor& x, std::span<const double> fusion_logits);

/// Throws ShapeError when the tensor does not fit the model.
ForwardTrace forward(const SerModel& model, const FeatureTensor& x);

/// Adds d(loss)/d(params) for the given logit gradient into `grads`.
void backward(const SerModel& model, const ForwardTrace& trace, std::span<const double> dlogits,
              SerGrads& grads);

/// Fuser-only backward from a gradient on the pooled embedding. Head
/// entries of `grads` are left untouched.
void backward_embedding(const SerModel& model, const ForwardTrace& trace,
                        std::span<const double> dembedding, SerGrads& grads);

struct LossGrad {
    double loss = 0;
    std::vector<double> grad;
};

/// -log softmax(logits)[label] and its gradient softmax - onehot.
LossGrad cross_entropy(std::span<const double> logits, int label);

struct ScalarLossGrad {
    double loss = 0;
    double grad = 0;
};

/// softplus(z) - y z, gradient sigmoid(z) - y.
ScalarLossGrad bce_logit(double logit, int domain_label);

/// Gradient reversal: identity forward, -lambda * g backward.
struct GradientReversal {
    double lambda = 1.0;

    std::vector<double> forward(std::span<const double> x) const { return {x.begin(), x.end()}; }
    std::vector<double> backward(std::span<const double> g) const;
};

std::vector<double> grad_reverse(std::span<const double> g, double lambda);

/// H -> 64 -> 1 domain classifier with ReLU.
struct DomainHead {
    std::size_t input_dim = 128;
    std::size_t hidden_dim = 64;
    std::vector<double> w1;  // hidden x input
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden (single output row)
    std::vector<double> b2;  // 1

    static DomainHead init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
    std::vector<ParamView> params();
    std::vector<ConstParamView> const_params() const;
};

struct DomainGrads {
    std::vector<double> w1, b1, w2, b2;

    static DomainGrads zeros_like(const DomainHead& head);
    void scale(double factor);
    std::vector<ConstParamView> views() const;
};

struct DomainTrace {
    std::vector<double> input;
    std::vector<double> pre;
    double logit = 0;
};

DomainTrace domain_forward(const DomainHead& head, std::span<const double> embedding);

/// Accumulates head gradients into `grads` (when non-null) and returns
/// d(loss)/d(embedding).
std::vector<double> domain_backward(const DomainHead& head, const DomainTrace& trace,
                                    double dlogit, DomainGrads* grads);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 2e-3;
};

/// AdamW with decoupled weight decay:
///   theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * theta
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : m_cfg(cfg) {}

    /// Parameters and gradients pair up by position and must agree in name
    /// and size. Non-finite gradients raise NumericalError before any
    /// parameter is touched.
    void step(std::span<const ParamView> params, std::span<const ConstParamView> grads);

    void reset();
    std::uint64_t step_count() const { return m_step; }
    const AdamWConfig& config() const { return m_cfg; }
    void set_lr(double lr) { m_cfg.lr = lr; }

    std::span<const double> first_moment(std::size_t group) const { return m_m.at(group); }
    std::span<const double> second_moment(std::size_t group) const { return m_v.at(group); }

private:
    AdamWConfig m_cfg;
    std::uint64_t m_step = 0;
    std::vector<std::vector<double>> m_m;
    std::vector<std::vector<double>> m_v;
};

struct CheckpointInfo {
    std::string strategy;
    int epoch = 0;
    std::uint64_t seed = 0;
};

/// JSON header line (dims, mode, strategy, epoch, seed, array table)
/// followed by the parameter arrays as little-endian float64 in header order.
void save_checkpoint(const std::filesystem::path& path, const SerModel& model,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
    SerModel model;
    CheckpointInfo info;
};

/// Throws FormatError on malformed files and ValidationError when
/// `expected` is given and the stored dims/mode differ.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelDims& expected,
                                 ReprMode expected_mode);

/// Argmax with ties to the lowest index.
int predict(const SerModel& model, const FeatureTensor& x);

}  // namespace sersyn::model
