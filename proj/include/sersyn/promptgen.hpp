#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sersyn::promptgen {

enum class NarrativeStyle { dialogue, narrative };

std::string_view to_string(NarrativeStyle style);
NarrativeStyle parse_narrative_style(std::string_view name);

/// The four generation axes plus sampling knobs. Defaults reproduce the
/// text-generation half of the dataset table (2 x 24 x 12 x 3).
struct GenerationConfig {
    std::vector<NarrativeStyle> narrative_styles;
    std::vector<std::string> scenarios;
    std::vector<std::string> emotions;
    std::vector<int> max_tokens;
    int samples_per_tuple = 4;
    std::map<int, std::string> length_names = default_length_names();

    static std::map<int, std::string> default_length_names();
    static GenerationConfig standard();

    /// Throws ConfigError on empty lists, duplicates, or unmapped lengths.
    void validate() const;
};

const std::vector<std::string>& standard_scenarios();
const std::vector<std::string>& standard_emotions();

struct GenerationTuple {
    NarrativeStyle narrative_style = NarrativeStyle::dialogue;
    std::string scenario;
    std::string emotion;
    int max_tokens = 10;

    auto operator<=>(const GenerationTuple&) const = default;
};

struct Prompt {
    std::string system;
    std::string user;
};

struct GeneratedText {
    std::string id;
    GenerationTuple tuple;
    std::string raw;
    std::optional<std::string> cleaned;
    std::optional<std::string> rejected_reason;

    bool accepted() const { return cleaned.has_value(); }
};

inline constexpr std::string_view kSystemRole =
    "You are a helpful assistant with human emotions and talking styles.";

/// Cartesian product in config-list order: narrative style outermost,
/// max_tokens innermost.
std::vector<GenerationTuple> group_tuples(const GenerationConfig& config);

std::string length2str(int max_tokens,
                       const std::map<int, std::string>& names =
                           GenerationConfig::default_length_names());

Prompt render_prompt(const GenerationTuple& tuple,
                     const std::map<int, std::string>& names =
                         GenerationConfig::default_length_names());

/// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

std::size_t count_words(std::string_view text);

/// Data-engineering pass over one raw completion.
///
/// Rules run in a fixed order: trim, strip a matching pair of surrounding
/// quotes, strip leading "Response:"/"Answer:"/"Text:" labels (quote and label
/// stripping repeat until neither applies), refusal filter on the raw text,
/// word-count filter, then case-insensitive dedupe against `seen`. Accepted
/// texts are inserted into `seen` in lowercase.
GeneratedText clean_text(std::string_view raw, const GenerationTuple& tuple,
                         std::set<std::string>& seen);

nlohmann::json tuple_to_json(const GenerationTuple& tuple);
GenerationTuple tuple_from_json(const nlohmann::json& j);

/// {tuple, system, user}
nlohmann::json prompt_record(const GenerationTuple& tuple, const Prompt& prompt);
/// {id, tuple, text}; requires an accepted text.
nlohmann::json text_record(const GeneratedText& text);
GeneratedText text_from_record(const nlohmann::json& j);

}  // namespace sersyn::promptgen
