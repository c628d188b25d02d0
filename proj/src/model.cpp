#include "sersyn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "sersyn/errors.hpp"

namespace sersyn::model {

namespace {

void fill_uniform(std::vector<double>& v, std::size_t n, double bound, Rng& rng) {
    v.resize(n);
    for (double& x : v) x = rng.uniform(-bound, bound);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace

std::string_view to_string(ReprMode mode) {
    return mode == ReprMode::last_layer ? "last_layer" : "weighted_layers";
}

ReprMode parse_repr_mode(std::string_view name) {
    if (name == "last_layer" || name == "last") return ReprMode::last_layer;
    if (name == "weighted_layers" || name == "weighted") return ReprMode::weighted_layers;
    throw ConfigError("unknown representation mode '" + std::string(name) + "'");
}

SerModel SerModel::init(const ModelDims& dims, ReprMode mode, Rng& rng) {
    if (dims.layers == 0 || dims.input_dim == 0 || dims.hidden_dim == 0 || dims.num_classes == 0) {
        throw ShapeError("model dims must be positive");
    }
    SerModel m;
    m.dims = dims;
    m.mode = mode;
    if (mode == ReprMode::weighted_layers) m.fusion_logits.assign(dims.layers, 0.0);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(dims.input_dim));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
    fill_uniform(m.w1, dims.hidden_dim * dims.input_dim, b1, rng);
    fill_uniform(m.b1, dims.hidden_dim, b1, rng);
    fill_uniform(m.w2, dims.num_classes * dims.hidden_dim, b2, rng);
    fill_uniform(m.b2, dims.num_classes, b2, rng);
    return m;
}

std::vector<double> SerModel::fusion_weights() const {
    if (mode == ReprMode::last_layer) return {1.0};
    return softmax(fusion_logits);
}

std::vector<ParamView> SerModel::fuser_params() {
    std::vector<ParamView> out;
    if (mode == ReprMode::weighted_layers) out.push_back({"fusion_logits", fusion_logits});
    out.push_back({"w1", w1});
    out.push_back({"b1", b1});
    return out;
}

std::vector<ParamView> SerModel::head_params() { return {{"w2", w2}, {"b2", b2}}; }

std::vector<ConstParamView> SerModel::all_params() const {
    std::vector<ConstParamView> out;
    if (mode == ReprMode::weighted_layers) out.push_back({"fusion_logits", fusion_logits});
    out.push_back({"w1", w1});
    out.push_back({"b1", b1});
    out.push_back({"w2", w2});
    out.push_back({"b2", b2});
    return out;
}

SerGrads SerGrads::zeros_like(const SerModel& model) {
    SerGrads g;
    g.fusion_logits.assign(model.fusion_logits.size(), 0.0);
    g.w1.assign(model.w1.size(), 0.0);
    g.b1.assign(model.b1.size(), 0.0);
    g.w2.assign(model.w2.size(), 0.0);
    g.b2.assign(model.b2.size(), 0.0);
    return g;
}

void SerGrads::scale(double factor) {
    for (auto* v : {&fusion_logits, &w1, &b1, &w2, &b2}) {
        for (double& x : *v) x *= factor;
    }
}

std::vector<ConstParamView> SerGrads::fuser() const {
    std::vector<ConstParamView> out;
    if (!fusion_logits.empty()) out.push_back({"fusion_logits", fusion_logits});
    out.push_back({"w1", w1});
    out.push_back({"b1", b1});
    return out;
}

std::vector<ConstParamView> SerGrads::head() const { return {{"w2", w2}, {"b2", b2}}; }

std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> out(z.size());
    if (z.empty()) return out;
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - zmax);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> fuse_layers(const FeatureTensor& x, std::span<const double> fusion_logits) {
    require(x.layers == fusion_logits.size(),
            "fuse_layers: tensor has " + std::to_string(x.layers) + " layers but " +
                std::to_string(fusion_logits.size()) + " fusion logits were given");
    const std::size_t n = static_cast<std::size_t>(x.frames) * x.dims;
    std::vector<double> out(n, 0.0);
    if (x.layers == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = x.data[i];
        return out;
    }
    const auto w = softmax(fusion_logits);
    for (std::size_t l = 0; l < x.layers; ++l) {
        const float* layer = x.data.data() + l * n;
        for (std::size_t i = 0; i < n; ++i) out[i] += w[l] * layer[i];
    }
    return out;
}

ForwardTrace forward(const SerModel& model, const FeatureTensor& x) {
    const auto& d = model.dims;
    require(x.dims == d.input_dim, "forward: feature dim " + std::to_string(x.dims) +
                                       " does not match model input dim " +
                                       std::to_string(d.input_dim));
    require(x.frames > 0, "forward: tensor has no frames");

    ForwardTrace tr;
    tr.input = &x;
    tr.frames = x.frames;
    if (model.mode == ReprMode::weighted_layers) {
        require(x.layers == model.fusion_logits.size(),
                "forward: tensor has " + std::to_string(x.layers) + " layers, model expects " +
                    std::to_string(model.fusion_logits.size()));
        tr.fusion_weights = softmax(model.fusion_logits);
        tr.fused = fuse_layers(x, model.fusion_logits);
    } else {
        tr.fusion_weights = {1.0};
        const std::size_t n = static_cast<std::size_t>(x.frames) * x.dims;
        const float* last = x.data.data() + (x.layers - 1) * n;
        tr.fused.assign(last, last + n);
    }

    const std::size_t T = tr.frames, D = d.input_dim, H = d.hidden_dim, C = d.num_classes;
    tr.pre.assign(T * H, 0.0);
    tr.embedding.assign(H, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double* f = tr.fused.data() + t * D;
        for (std::size_t h = 0; h < H; ++h) {
            const double* w = model.w1.data() + h * D;
            double acc = model.b1[h];
            for (std::size_t k = 0; k < D; ++k) acc += w[k] * f[k];
            tr.pre[t * H + h] = acc;
            if (acc > 0) tr.embedding[h] += acc;
        }
    }
    for (double& e : tr.embedding) e /= static_cast<double>(T);

    tr.logits.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double acc = model.b2[c];
        for (std::size_t h = 0; h < H; ++h) acc += model.w2[c * H + h] * tr.embedding[h];
        tr.logits[c] = acc;
    }
    return tr;
}

void backward(const SerModel& model, const ForwardTrace& trace, std::span<const double> dlogits,
              SerGrads& grads) {
    const std::size_t H = model.dims.hidden_dim, C = model.dims.num_classes;
    require(dlogits.size() == C, "backward: dlogits size mismatch");
    require(trace.embedding.size() == H, "backward: trace does not match model");

    std::vector<double> de(H, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        grads.b2[c] += dlogits[c];
        for (std::size_t h = 0; h < H; ++h) {
            grads.w2[c * H + h] += dlogits[c] * trace.embedding[h];
            de[h] += model.w2[c * H + h] * dlogits[c];
        }
    }
    backward_embedding(model, trace, de, grads);
}

void backward_embedding(const SerModel& model, const ForwardTrace& trace,
                        std::span<const double> dembedding, SerGrads& grads) {
    const std::size_t T = trace.frames, D = model.dims.input_dim, H = model.dims.hidden_dim;
    require(trace.input != nullptr, "backward: trace has no input");
    require(dembedding.size() == H, "backward: embedding gradient size mismatch");
    require(trace.pre.size() == T * H && trace.fused.size() == T * D,
            "backward: trace does not match model");

    const bool fuse = model.mode == ReprMode::weighted_layers;
    std::vector<double> dfused(fuse ? T * D : 0, 0.0);
    const double inv_t = 1.0 / static_cast<double>(T);

    for (std::size_t t = 0; t < T; ++t) {
        const double* f = trace.fused.data() + t * D;
        for (std::size_t h = 0; h < H; ++h) {
            if (!(trace.pre[t * H + h] > 0)) continue;
            const double dpre = dembedding[h] * inv_t;
            grads.b1[h] += dpre;
            double* gw = grads.w1.data() + h * D;
            for (std::size_t k = 0; k < D; ++k) gw[k] += dpre * f[k];
            if (fuse) {
                const double* w = model.w1.data() + h * D;
                double* df = dfused.data() + t * D;
                for (std::size_t k = 0; k < D; ++k) df[k] += dpre * w[k];
            }
        }
    }
    if (!fuse) return;

    // Through the softmax: dz_l = w_l * (g_l - sum_k w_k g_k), with
    // g_l = <dfused, layer_l>.
    const FeatureTensor& x = *trace.input;
    const std::size_t L = x.layers, n = T * D;
    const auto& w = trace.fusion_weights;
    std::vector<double> g(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        const float* layer = x.data.data() + l * n;
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += dfused[i] * layer[i];
        g[l] = acc;
    }
    double mean = 0;
    for (std::size_t l = 0; l < L; ++l) mean += w[l] * g[l];
    for (std::size_t l = 0; l < L; ++l) grads.fusion_logits[l] += w[l] * (g[l] - mean);
}

LossGrad cross_entropy(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw ShapeError("cross_entropy: label out of range");
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double log_sum = std::log(sum);
    LossGrad out;
    out.loss = -(logits[label] - zmax - log_sum);
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - zmax - log_sum);
    }
    out.grad[label] -= 1.0;
    return out;
}

ScalarLossGrad bce_logit(double logit, int domain_label) {
    const double y = domain_label;
    const double softplus = std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit)));
    const double sigmoid = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                                      : std::exp(logit) / (1.0 + std::exp(logit));
    return {softplus - y * logit, sigmoid - y};
}

std::vector<double> GradientReversal::backward(std::span<const double> g) const {
    return grad_reverse(g, lambda);
}

std::vector<double> grad_reverse(std::span<const double> g, double lambda) {
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = -lambda * g[i];
    return out;
}

DomainHead DomainHead::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    DomainHead h;
    h.input_dim = input_dim;
    h.hidden_dim = hidden_dim;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    fill_uniform(h.w1, hidden_dim * input_dim, b1, rng);
    fill_uniform(h.b1, hidden_dim, b1, rng);
    fill_uniform(h.w2, hidden_dim, b2, rng);
    fill_uniform(h.b2, 1, b2, rng);
    return h;
}

std::vector<ParamView> DomainHead::params() {
    return {{"domain.w1", w1}, {"domain.b1", b1}, {"domain.w2", w2}, {"domain.b2", b2}};
}

std::vector<ConstParamView> DomainHead::const_params() const {
    return {{"domain.w1", w1}, {"domain.b1", b1}, {"domain.w2", w2}, {"domain.b2", b2}};
}

DomainGrads DomainGrads::zeros_like(const DomainHead& head) {
    DomainGrads g;
    g.w1.assign(head.w1.size(), 0.0);
    g.b1.assign(head.b1.size(), 0.0);
    g.w2.assign(head.w2.size(), 0.0);
    g.b2.assign(head.b2.size(), 0.0);
    return g;
}

void DomainGrads::scale(double factor) {
    for (auto* v : {&w1, &b1, &w2, &b2}) {
        for (double& x : *v) x *= factor;
    }
}

std::vector<ConstParamView> DomainGrads::views() const {
    return {{"domain.w1", w1}, {"domain.b1", b1}, {"domain.w2", w2}, {"domain.b2", b2}};
}

DomainTrace domain_forward(const DomainHead& head, std::span<const double> embedding) {
    require(embedding.size() == head.input_dim, "domain head: embedding size mismatch");
    DomainTrace tr;
    tr.input.assign(embedding.begin(), embedding.end());
    tr.pre.assign(head.hidden_dim, 0.0);
    double logit = head.b2[0];
    for (std::size_t j = 0; j < head.hidden_dim; ++j) {
        double acc = head.b1[j];
        const double* w = head.w1.data() + j * head.input_dim;
        for (std::size_t k = 0; k < head.input_dim; ++k) acc += w[k] * embedding[k];
        tr.pre[j] = acc;
        if (acc > 0) logit += head.w2[j] * acc;
    }
    tr.logit = logit;
    return tr;
}

std::vector<double> domain_backward(const DomainHead& head, const DomainTrace& trace,
                                    double dlogit, DomainGrads* grads) {
    std::vector<double> de(head.input_dim, 0.0);
    if (grads) grads->b2[0] += dlogit;
    for (std::size_t j = 0; j < head.hidden_dim; ++j) {
        const double pre = trace.pre[j];
        if (!(pre > 0)) continue;
        if (grads) grads->w2[j] += dlogit * pre;
        const double dpre = dlogit * head.w2[j];
        if (grads) grads->b1[j] += dpre;
        const double* w = head.w1.data() + j * head.input_dim;
        for (std::size_t k = 0; k < head.input_dim; ++k) {
            if (grads) grads->w1[j * head.input_dim + k] += dpre * trace.input[k];
            de[k] += dpre * w[k];
        }
    }
    return de;
}

void AdamW::step(std::span<const ParamView> params, std::span<const ConstParamView> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("adamw: " + std::to_string(params.size()) + " parameter groups but " +
                         std::to_string(grads.size()) + " gradient groups");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != grads[i].name || params[i].values.size() != grads[i].values.size()) {
            throw ShapeError("adamw: gradient group '" + std::string(grads[i].name) +
                             "' does not match parameter '" + std::string(params[i].name) + "'");
        }
        for (double g : grads[i].values) {
            if (!std::isfinite(g)) {
                throw NumericalError("adamw: non-finite gradient in parameter '" +
                                     std::string(params[i].name) + "'");
            }
        }
    }
    if (m_m.empty()) {
        for (const auto& p : params) {
            m_m.emplace_back(p.values.size(), 0.0);
            m_v.emplace_back(p.values.size(), 0.0);
        }
    } else if (m_m.size() != params.size()) {
        throw ShapeError("adamw: parameter group count changed between steps");
    }

    ++m_step;
    const double t = static_cast<double>(m_step);
    const double bc1 = 1.0 - std::pow(m_cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(m_cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = m_m[i];
        auto& v = m_v[i];
        if (m.size() != params[i].values.size()) {
            throw ShapeError("adamw: parameter '" + std::string(params[i].name) + "' changed size");
        }
        auto theta = params[i].values;
        auto g = grads[i].values;
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = m_cfg.beta1 * m[k] + (1.0 - m_cfg.beta1) * g[k];
            v[k] = m_cfg.beta2 * v[k] + (1.0 - m_cfg.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            theta[k] -= m_cfg.lr * (m_hat / (std::sqrt(v_hat) + m_cfg.eps)) +
                        m_cfg.lr * m_cfg.weight_decay * theta[k];
        }
    }
}

void AdamW::reset() {
    m_step = 0;
    m_m.clear();
    m_v.clear();
}

namespace {

nlohmann::json dims_json(const ModelDims& d) {
    return {{"layers", d.layers},
            {"input_dim", d.input_dim},
            {"hidden_dim", d.hidden_dim},
            {"num_classes", d.num_classes}};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SerModel& model,
                     const CheckpointInfo& info) {
    const auto groups = model.all_params();
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& g : groups) arrays.push_back({{"name", g.name}, {"size", g.values.size()}});
    const nlohmann::json header{
        {"format", "sersyn-checkpoint"},
        {"version", 1},
        {"dims", dims_json(model.dims)},
        {"mode", to_string(model.mode)},
        {"strategy", info.strategy},
        {"epoch", info.epoch},
        {"seed", info.seed},
        {"arrays", arrays},
    };

    std::string bytes = header.dump();
    bytes.push_back('\n');
    for (const auto& g : groups) {
        for (double v : g.values) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>(bits >> (8 * i)));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const auto newline = bytes.find('\n');
    if (newline == std::string::npos) throw FormatError("checkpoint header not terminated", 0);

    LoadedCheckpoint out;
    std::vector<std::pair<std::string, std::size_t>> table;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(0, newline));
        if (header.at("format") != "sersyn-checkpoint" || header.at("version") != 1) {
            throw FormatError("not a version-1 checkpoint", 0);
        }
        const auto& d = header.at("dims");
        out.model.dims = {d.at("layers").get<std::size_t>(), d.at("input_dim").get<std::size_t>(),
                          d.at("hidden_dim").get<std::size_t>(),
                          d.at("num_classes").get<std::size_t>()};
        out.model.mode = parse_repr_mode(header.at("mode").get<std::string>());
        out.info.strategy = header.at("strategy").get<std::string>();
        out.info.epoch = header.at("epoch").get<int>();
        out.info.seed = header.at("seed").get<std::uint64_t>();
        for (const auto& a : header.at("arrays")) {
            table.emplace_back(a.at("name").get<std::string>(), a.at("size").get<std::size_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what(), 0);
    }

    auto& m = out.model;
    const auto& d = m.dims;
    std::map<std::string, std::pair<std::vector<double>*, std::size_t>> slots{
        {"w1", {&m.w1, d.hidden_dim * d.input_dim}},
        {"b1", {&m.b1, d.hidden_dim}},
        {"w2", {&m.w2, d.num_classes * d.hidden_dim}},
        {"b2", {&m.b2, d.num_classes}},
    };
    if (m.mode == ReprMode::weighted_layers) {
        slots.emplace("fusion_logits", std::make_pair(&m.fusion_logits, d.layers));
    }
    if (table.size() != slots.size()) throw FormatError("checkpoint array table is incomplete", 0);

    std::size_t offset = newline + 1;
    for (const auto& [name, size] : table) {
        auto it = slots.find(name);
        if (it == slots.end() || it->second.second != size) {
            throw FormatError("checkpoint array '" + name + "' does not match declared dims", 0);
        }
        if (bytes.size() < offset + 8 * size) {
            throw FormatError("checkpoint truncated in array '" + name + "'", bytes.size());
        }
        auto& dst = *it->second.first;
        dst.resize(size);
        for (std::size_t k = 0; k < size; ++k) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) {
                bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i]))
                        << (8 * i);
            }
            dst[k] = std::bit_cast<double>(bits);
            offset += 8;
        }
    }
    if (offset != bytes.size()) throw FormatError("trailing bytes after checkpoint arrays", offset);
    return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelDims& expected,
                                 ReprMode expected_mode) {
    auto out = load_checkpoint(path);
    if (!(out.model.dims == expected) || out.model.mode != expected_mode) {
        throw ValidationError("checkpoint " + path.string() +
                              " dims/mode do not match the configured model");
    }
    return out;
}

int predict(const SerModel& model, const FeatureTensor& x) {
    const auto tr = forward(model, x);
    return static_cast<int>(std::max_element(tr.logits.begin(), tr.logits.end()) -
                            tr.logits.begin());
}

}  // namespace sersyn::model
