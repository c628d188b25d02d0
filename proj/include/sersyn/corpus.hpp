#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sersyn/promptgen.hpp"

namespace sersyn::corpus {

inline constexpr int kNumClasses = 4;
inline constexpr int kNumSessions = 5;

enum class Label : int { happy = 0, sad = 1, angry = 2, neutral = 3 };
enum class Domain { real, synthetic };

std::string_view to_string(Label label);
std::string_view to_string(Domain domain);
Label parse_label(std::string_view name);
Domain parse_domain(std::string_view name);

/// Generation metadata carried by synthetic utterances.
struct GenerationMeta {
    promptgen::NarrativeStyle narrative_style = promptgen::NarrativeStyle::dialogue;
    int max_tokens = 10;
    std::string style;
};

struct UtteranceRecord {
    std::string id;
    Domain domain = Domain::real;
    /// Absent only for synthetic candidates whose style has no SER class.
    std::optional<Label> label;
    std::optional<int> session;
    std::string speaker;
    double duration_s = 1.0;
    std::string text;
    std::string feature_path;
    std::optional<GenerationMeta> generation;
};

/// L x T x D tensor of 32-bit features, stored layer-major then frame-major.
struct FeatureTensor {
    std::uint16_t layers = 1;
    std::uint32_t frames = 1;
    std::uint16_t dims = 1;
    std::vector<float> data;

    FeatureTensor() = default;
    FeatureTensor(std::uint16_t l, std::uint32_t t, std::uint16_t d)
        : layers(l), frames(t), dims(d), data(static_cast<std::size_t>(l) * t * d, 0.0f) {}

    std::size_t index(std::size_t l, std::size_t t, std::size_t d) const {
        return (l * frames + t) * dims + d;
    }
    float& at(std::size_t l, std::size_t t, std::size_t d) { return data[index(l, t, d)]; }
    float at(std::size_t l, std::size_t t, std::size_t d) const { return data[index(l, t, d)]; }

    /// Throws ValidationError on zero extents, size mismatch, or non-finite values.
    void validate() const;
};

/// SERF layout (little-endian): "SERF", u32 version = 1, u16 L, u16 D,
/// u32 T, then L*T*D float32 values.
inline constexpr std::size_t kSerfHeaderBytes = 16;
inline constexpr std::uint32_t kSerfVersion = 1;

std::vector<std::uint8_t> encode_features(const FeatureTensor& tensor);
FeatureTensor decode_features(std::span<const std::uint8_t> bytes);
void write_features(const std::filesystem::path& path, const FeatureTensor& tensor);
FeatureTensor read_features(const std::filesystem::path& path);

nlohmann::json record_to_json(const UtteranceRecord& rec);
UtteranceRecord record_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

/// Style-to-class mapping for SER. Returns nullopt for styles outside the
/// four classes; throws ValidationError for strings that are not styles.
std::optional<Label> map_style_to_label(std::string_view style);

struct FoldSplit {
    int fold_index = 1;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
};

/// Leave-one-session-out folds over the real records. Fold k tests session
/// k; the other sessions are shuffled (stream derived from seed and k) and
/// split 8:2, with floor(0.2 n) validation items.
std::array<FoldSplit, kNumSessions> make_folds(const std::vector<UtteranceRecord>& records,
                                               std::uint64_t seed);

/// Synthetic records with matching max_tokens and narrative style whose
/// style maps to an allowed label. The label field of the result is set.
std::vector<UtteranceRecord> select_synthetic_subset(
    const std::vector<UtteranceRecord>& records, int max_token_bucket,
    const std::set<Label>& allowed_labels, promptgen::NarrativeStyle narrative_style);

/// Label-stratified sample of round(real_train_count * ratio) records
/// without replacement. Per-class quotas use largest remainders, so each
/// class count is within 1 of its proportional share. Output keeps input order.
std::vector<UtteranceRecord> sample_ratio(const std::vector<UtteranceRecord>& synthetic,
                                          std::size_t real_train_count, double ratio,
                                          std::uint64_t seed);

std::size_t ratio_count(std::size_t real_train_count, double ratio);

struct BlobParams {
    int n_per_class = 25;  // real utterances per class
    int n_synthetic = 0;   // synthetic utterances, labels round-robin
    std::uint16_t dims = 768;
    std::uint16_t layers = 1;
    std::uint32_t t_min = 20;
    std::uint32_t t_max = 60;
    double class_separation = 5.0;
    double noise_std = 1.0;
    double domain_shift = 0.0;
    std::uint64_t seed = 0;
};

struct Corpus {
    std::vector<UtteranceRecord> records;
    /// Keyed by record id.
    std::map<std::string, FeatureTensor> features;
};

/// Frame hop assumed when converting frame counts to durations.
inline constexpr double kFrameSeconds = 0.02;

/// Style assigned to synthetic blob utterances of each class.
std::string_view blob_style(Label label);

/// Gaussian-cluster stand-in for SSL features. Class c has mean
/// separation * e_c; synthetic utterances are offset by domain_shift along
/// the unit vector (1, ..., 1) / sqrt(D). Layer l holds the base frames
/// scaled by 1 / (1 + l). Real utterances get sessions round-robin 1..5.
Corpus generate_blob_corpus(const BlobParams& params);

/// Writes `features/<id>.serf` files and `manifest.jsonl` under `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Loads a manifest and every feature file it references.
Corpus load_corpus(const std::filesystem::path& manifest_path);

}  // namespace sersyn::corpus
