#include "sersyn/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <numeric>

#include "sersyn/errors.hpp"
#include "sersyn/rng.hpp"

namespace sersyn::corpus {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kNumClasses> kLabelNames{"happy", "sad", "angry",
                                                               "neutral"};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) |
           (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

}  // namespace

std::string_view to_string(Label label) { return kLabelNames[static_cast<int>(label)]; }

std::string_view to_string(Domain domain) {
    return domain == Domain::real ? "real" : "synthetic";
}

Label parse_label(std::string_view name) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (kLabelNames[i] == name) return static_cast<Label>(i);
    }
    throw ValidationError("unknown emotion label '" + std::string(name) + "'");
}

Domain parse_domain(std::string_view name) {
    if (name == "real") return Domain::real;
    if (name == "synthetic") return Domain::synthetic;
    throw ValidationError("unknown domain '" + std::string(name) + "'");
}

void FeatureTensor::validate() const {
    if (layers == 0 || frames == 0 || dims == 0) {
        throw ValidationError("feature tensor has a zero extent");
    }
    if (data.size() != static_cast<std::size_t>(layers) * frames * dims) {
        throw ValidationError("feature tensor data size does not match its shape");
    }
    for (float v : data) {
        if (!std::isfinite(v)) throw ValidationError("feature tensor holds a non-finite value");
    }
}

std::vector<std::uint8_t> encode_features(const FeatureTensor& tensor) {
    tensor.validate();
    std::vector<std::uint8_t> out;
    out.reserve(kSerfHeaderBytes + tensor.data.size() * 4);
    for (char c : std::string_view("SERF")) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, kSerfVersion);
    put_u16(out, tensor.layers);
    put_u16(out, tensor.dims);
    put_u32(out, tensor.frames);
    for (float v : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

FeatureTensor decode_features(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kSerfHeaderBytes) {
        throw FormatError("SERF header truncated: expected " + std::to_string(kSerfHeaderBytes) +
                              " bytes, got " + std::to_string(bytes.size()),
                          bytes.size());
    }
    if (!(bytes[0] == 'S' && bytes[1] == 'E' && bytes[2] == 'R' && bytes[3] == 'F')) {
        throw FormatError("bad SERF magic", 0);
    }
    if (const auto version = get_u32(bytes, 4); version != kSerfVersion) {
        throw FormatError("unsupported SERF version " + std::to_string(version), 4);
    }
    FeatureTensor t;
    t.layers = get_u16(bytes, 8);
    t.dims = get_u16(bytes, 10);
    t.frames = get_u32(bytes, 12);
    if (t.layers == 0 || t.dims == 0 || t.frames == 0) {
        throw FormatError("SERF header declares a zero extent", 8);
    }
    const std::uint64_t count = static_cast<std::uint64_t>(t.layers) * t.frames * t.dims;
    const std::uint64_t expected = kSerfHeaderBytes + count * 4;
    if (bytes.size() != expected) {
        throw FormatError("SERF payload length mismatch: expected " + std::to_string(expected) +
                              " bytes, got " + std::to_string(bytes.size()),
                          std::min<std::uint64_t>(bytes.size(), expected));
    }
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = kSerfHeaderBytes + 4 * i;
        t.data[i] = std::bit_cast<float>(get_u32(bytes, at));
        if (!std::isfinite(t.data[i])) throw FormatError("non-finite feature value", at);
    }
    return t;
}

void write_features(const fs::path& path, const FeatureTensor& tensor) {
    const auto bytes = encode_features(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

FeatureTensor read_features(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                          std::istreambuf_iterator<char>()};
    try {
        return decode_features(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

nlohmann::json record_to_json(const UtteranceRecord& rec) {
    nlohmann::json j{
        {"id", rec.id},
        {"domain", to_string(rec.domain)},
        {"label", rec.label ? nlohmann::json(to_string(*rec.label)) : nlohmann::json(nullptr)},
        {"session", rec.session ? nlohmann::json(*rec.session) : nlohmann::json(nullptr)},
        {"speaker", rec.speaker},
        {"duration_s", rec.duration_s},
        {"text", rec.text},
        {"feature_path", rec.feature_path},
    };
    if (rec.generation) {
        j["generation"] = {
            {"narrative_style", promptgen::to_string(rec.generation->narrative_style)},
            {"max_tokens", rec.generation->max_tokens},
            {"style", rec.generation->style},
        };
    }
    return j;
}

UtteranceRecord record_from_json(const nlohmann::json& j) {
    UtteranceRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.domain = parse_domain(j.at("domain").get<std::string>());
        if (const auto& l = j.at("label"); !l.is_null()) r.label = parse_label(l.get<std::string>());
        if (auto it = j.find("session"); it != j.end() && !it->is_null()) {
            r.session = it->get<int>();
        }
        r.speaker = j.value("speaker", "");
        r.duration_s = j.at("duration_s").get<double>();
        r.text = j.value("text", "");
        r.feature_path = j.at("feature_path").get<std::string>();
        if (auto it = j.find("generation"); it != j.end() && !it->is_null()) {
            GenerationMeta g;
            g.narrative_style =
                promptgen::parse_narrative_style(it->at("narrative_style").get<std::string>());
            g.max_tokens = it->at("max_tokens").get<int>();
            g.style = it->at("style").get<std::string>();
            r.generation = g;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed manifest record: ") + e.what());
    } catch (const ConfigError& e) {
        throw ValidationError(std::string("malformed manifest record: ") + e.what());
    }
    if (!(r.duration_s > 0)) throw ValidationError("record " + r.id + ": duration_s must be > 0");
    if (r.domain == Domain::real) {
        if (!r.session) throw ValidationError("real record " + r.id + " has no session");
        if (!r.label) throw ValidationError("real record " + r.id + " has no label");
    }
    return r;
}

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<UtteranceRecord> read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<UtteranceRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

std::optional<Label> map_style_to_label(std::string_view style) {
    if (style == "cheerful" || style == "excited") return Label::happy;
    if (style == "sad") return Label::sad;
    if (style == "angry") return Label::angry;
    if (style == "neutral") return Label::neutral;
    const auto& known = promptgen::standard_emotions();
    if (std::find(known.begin(), known.end(), style) != known.end()) return std::nullopt;
    throw ValidationError("unknown style '" + std::string(style) + "'");
}

std::array<FoldSplit, kNumSessions> make_folds(const std::vector<UtteranceRecord>& records,
                                               std::uint64_t seed) {
    std::array<std::vector<std::string>, kNumSessions> by_session;
    for (const auto& r : records) {
        if (r.domain != Domain::real) continue;
        if (!r.session || *r.session < 1 || *r.session > kNumSessions) {
            throw ValidationError("real record " + r.id + " has no session in 1..5");
        }
        by_session[*r.session - 1].push_back(r.id);
    }
    for (int s = 0; s < kNumSessions; ++s) {
        if (by_session[s].empty()) {
            throw ValidationError("session " + std::to_string(s + 1) + " has no real utterances");
        }
    }

    std::array<FoldSplit, kNumSessions> folds;
    for (int k = 0; k < kNumSessions; ++k) {
        FoldSplit& f = folds[k];
        f.fold_index = k + 1;
        f.test_ids = by_session[k];
        std::vector<std::string> rest;
        for (int s = 0; s < kNumSessions; ++s) {
            if (s != k) rest.insert(rest.end(), by_session[s].begin(), by_session[s].end());
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k + 1)));
        rng.shuffle(std::span(rest));
        const std::size_t n_val = rest.size() / 5;  // floor(0.2 n)
        f.val_ids.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
        f.train_ids.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    }
    return folds;
}

std::vector<UtteranceRecord> select_synthetic_subset(const std::vector<UtteranceRecord>& records,
                                                     int max_token_bucket,
                                                     const std::set<Label>& allowed_labels,
                                                     promptgen::NarrativeStyle narrative_style) {
    std::vector<UtteranceRecord> out;
    for (const auto& r : records) {
        if (r.domain != Domain::synthetic || !r.generation) continue;
        if (r.generation->max_tokens != max_token_bucket) continue;
        if (r.generation->narrative_style != narrative_style) continue;
        std::optional<Label> label;
        try {
            label = map_style_to_label(r.generation->style);
        } catch (const ValidationError&) {
            continue;
        }
        if (!label || !allowed_labels.contains(*label)) continue;
        UtteranceRecord kept = r;
        kept.label = label;
        out.push_back(std::move(kept));
    }
    return out;
}

std::size_t ratio_count(std::size_t real_train_count, double ratio) {
    if (!std::isfinite(ratio) || ratio <= 0) {
        throw ValidationError("synthetic ratio must be finite and > 0");
    }
    return static_cast<std::size_t>(std::llround(static_cast<double>(real_train_count) * ratio));
}

std::vector<UtteranceRecord> sample_ratio(const std::vector<UtteranceRecord>& synthetic,
                                          std::size_t real_train_count, double ratio,
                                          std::uint64_t seed) {
    const std::size_t count = ratio_count(real_train_count, ratio);
    if (count > synthetic.size()) {
        throw ValidationError("requested " + std::to_string(count) + " synthetic records but only " +
                              std::to_string(synthetic.size()) + " are available");
    }

    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < synthetic.size(); ++i) {
        if (!synthetic[i].label) {
            throw ValidationError("synthetic record " + synthetic[i].id + " has no label");
        }
        by_class[static_cast<int>(*synthetic[i].label)].push_back(i);
    }

    // Largest-remainder apportionment of `count` across classes.
    const std::size_t total = synthetic.size();
    std::array<std::size_t, kNumClasses> quota{};
    std::array<std::size_t, kNumClasses> remainder{};
    std::size_t assigned = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const std::size_t share = count * by_class[c].size();
        quota[c] = total ? share / total : 0;
        remainder[c] = total ? share % total : 0;
        assigned += quota[c];
    }
    std::array<int, kNumClasses> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < count; i = (i + 1) % kNumClasses) {
        const int c = order[i];
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(count);
    for (int c = 0; c < kNumClasses; ++c) {
        auto& idx = by_class[c];
        rng.shuffle(std::span(idx));
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<UtteranceRecord> out;
    out.reserve(count);
    for (std::size_t i : chosen) out.push_back(synthetic[i]);
    return out;
}

std::string_view blob_style(Label label) {
    switch (label) {
        case Label::happy: return "cheerful";
        case Label::sad: return "sad";
        case Label::angry: return "angry";
        case Label::neutral: return "neutral";
    }
    return "neutral";
}

Corpus generate_blob_corpus(const BlobParams& p) {
    if (!(p.class_separation > 0)) throw ConfigError("blob corpus: class_separation must be > 0");
    if (p.dims < kNumClasses) throw ConfigError("blob corpus: dims must be >= 4");
    if (p.layers < 1) throw ConfigError("blob corpus: layers must be >= 1");
    if (p.t_min < 1 || p.t_max < p.t_min) throw ConfigError("blob corpus: invalid frame range");
    if (p.n_per_class < 0 || p.n_synthetic < 0 || p.noise_std < 0) {
        throw ConfigError("blob corpus: counts and noise_std must be non-negative");
    }

    const double shift_component = p.domain_shift / std::sqrt(static_cast<double>(p.dims));
    Corpus corpus;

    auto make_utterance = [&](Domain domain, std::size_t index, Label label) {
        const std::uint64_t tag = (domain == Domain::real ? 0ULL : 1ULL << 40) | index;
        Rng rng(derive_seed(p.seed, tag));
        const auto frames =
            static_cast<std::uint32_t>(p.t_min + rng.below(p.t_max - p.t_min + 1ULL));
        FeatureTensor x(p.layers, frames, p.dims);
        const int cls = static_cast<int>(label);
        for (std::uint32_t t = 0; t < frames; ++t) {
            for (std::uint16_t d = 0; d < p.dims; ++d) {
                double v = (d == cls ? p.class_separation : 0.0);
                if (domain == Domain::synthetic) v += shift_component;
                if (p.noise_std > 0) v += p.noise_std * rng.normal();
                for (std::uint16_t l = 0; l < p.layers; ++l) {
                    x.at(l, t, d) = static_cast<float>(v / (1.0 + l));
                }
            }
        }
        return x;
    };

    const auto n_real = static_cast<std::size_t>(p.n_per_class) * kNumClasses;
    for (std::size_t i = 0; i < n_real; ++i) {
        UtteranceRecord r;
        r.id = "real_" + zero_pad(i, 5);
        r.domain = Domain::real;
        r.label = static_cast<Label>(i % kNumClasses);
        r.session = static_cast<int>(i % kNumSessions) + 1;
        r.speaker = "Ses0" + std::to_string(*r.session) + (i % 2 == 0 ? "F" : "M");
        auto x = make_utterance(Domain::real, i, *r.label);
        r.duration_s = x.frames * kFrameSeconds;
        r.text = "blob utterance " + std::to_string(i);
        r.feature_path = "features/" + r.id + ".serf";
        corpus.features.emplace(r.id, std::move(x));
        corpus.records.push_back(std::move(r));
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(p.n_synthetic); ++j) {
        UtteranceRecord r;
        r.id = "synth_" + zero_pad(j, 5);
        r.domain = Domain::synthetic;
        r.label = static_cast<Label>(j % kNumClasses);
        r.speaker = "voice" + std::to_string(j % 9);
        auto x = make_utterance(Domain::synthetic, j, *r.label);
        r.duration_s = x.frames * kFrameSeconds;
        r.text = "synthetic blob utterance " + std::to_string(j);
        r.feature_path = "features/" + r.id + ".serf";
        r.generation = GenerationMeta{promptgen::NarrativeStyle::dialogue, 10,
                                      std::string(blob_style(*r.label))};
        corpus.features.emplace(r.id, std::move(x));
        corpus.records.push_back(std::move(r));
    }
    return corpus;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
    fs::create_directories(dir / "features");
    for (const auto& r : corpus.records) {
        write_features(dir / r.feature_path, corpus.features.at(r.id));
    }
    write_manifest(dir / "manifest.jsonl", corpus.records);
}

Corpus load_corpus(const fs::path& manifest_path) {
    Corpus corpus;
    corpus.records = read_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    for (const auto& r : corpus.records) {
        if (corpus.features.contains(r.id)) throw ValidationError("duplicate record id " + r.id);
        corpus.features.emplace(r.id, read_features(base / r.feature_path));
    }
    return corpus;
}

}  // namespace sersyn::corpus
