#include "sersyn/promptgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "sersyn/errors.hpp"

namespace sersyn::promptgen {

namespace {

template <typename T>
void require_unique_nonempty(const std::vector<T>& items, std::string_view what) {
    if (items.empty()) {
        throw ConfigError("generation config: '" + std::string(what) + "' list is empty");
    }
    std::vector<T> sorted(items);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ConfigError("generation config: '" + std::string(what) +
                          "' list contains duplicates");
    }
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool starts_with(std::string_view s, std::string_view p) {
    return s.substr(0, p.size()) == p;
}

bool ends_with(std::string_view s, std::string_view p) {
    return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

// Pairs of (open, close) quote marks, UTF-8 encoded.
constexpr std::array<std::pair<std::string_view, std::string_view>, 4> kQuotePairs{{
    {"\"", "\""},
    {"'", "'"},
    {"\xE2\x80\x9C", "\xE2\x80\x9D"},  // “ ”
    {"\xE2\x80\x98", "\xE2\x80\x99"},  // ‘ ’
}};

bool strip_quotes(std::string_view& s) {
    for (const auto& [open, close] : kQuotePairs) {
        if (s.size() >= open.size() + close.size() && starts_with(s, open) &&
            ends_with(s, close)) {
            s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
            return true;
        }
    }
    return false;
}

// ^(Response|Answer|Text)\s*:\s*
bool strip_label(std::string_view& s) {
    for (std::string_view label : {"Response", "Answer", "Text"}) {
        if (!starts_with(s, label)) continue;
        std::size_t i = label.size();
        while (i < s.size() && is_space(s[i])) ++i;
        if (i < s.size() && s[i] == ':') {
            s = trim(s.substr(i + 1));
            return true;
        }
    }
    return false;
}

constexpr std::array<std::string_view, 3> kRefusalPhrases{"as an ai", "i cannot",
                                                          "i'm sorry, but"};

}  // namespace

std::string_view to_string(NarrativeStyle style) {
    return style == NarrativeStyle::dialogue ? "dialogue" : "narrative";
}

NarrativeStyle parse_narrative_style(std::string_view name) {
    if (name == "dialogue") return NarrativeStyle::dialogue;
    if (name == "narrative") return NarrativeStyle::narrative;
    throw ConfigError("unknown narrative style '" + std::string(name) + "'");
}

std::map<int, std::string> GenerationConfig::default_length_names() {
    return {{10, "short"}, {30, "middle"}, {50, "long"}};
}

const std::vector<std::string>& standard_scenarios() {
    static const std::vector<std::string> kScenarios{
        "arts",
        "autos and vehicles",
        "business",
        "comedy",
        "crime",
        "education",
        "entertainment",
        "film and animation",
        "gaming",
        "health and fitness",
        "history",
        "howto and style",
        "kids and family",
        "leisure",
        "music",
        "news and politics",
        "nonprofits and activism",
        "people and blogs",
        "pets and animals",
        "religion and spirituality",
        "science and technology",
        "society and culture",
        "sports",
        "travel and events",
    };
    return kScenarios;
}

const std::vector<std::string>& standard_emotions() {
    // "empathetic" fills the slot of the duplicated "terrified" entry so the
    // list holds twelve distinct styles.
    static const std::vector<std::string> kEmotions{
        "angry",     "cheerful",   "excited",    "friendly", "hopeful", "sad",
        "shouting",  "terrified",  "unfriendly", "whispering", "empathetic", "neutral",
    };
    return kEmotions;
}

GenerationConfig GenerationConfig::standard() {
    GenerationConfig cfg;
    cfg.narrative_styles = {NarrativeStyle::dialogue, NarrativeStyle::narrative};
    cfg.scenarios = standard_scenarios();
    cfg.emotions = standard_emotions();
    cfg.max_tokens = {10, 30, 50};
    return cfg;
}

void GenerationConfig::validate() const {
    require_unique_nonempty(narrative_styles, "narrative_styles");
    require_unique_nonempty(scenarios, "scenarios");
    require_unique_nonempty(emotions, "emotions");
    require_unique_nonempty(max_tokens, "max_tokens");
    for (int m : max_tokens) {
        if (m <= 0) throw ConfigError("generation config: max_tokens must be positive");
        if (!length_names.contains(m)) {
            throw ConfigError("generation config: no length name for max_tokens " +
                              std::to_string(m));
        }
    }
    if (samples_per_tuple < 1) {
        throw ConfigError("generation config: samples_per_tuple must be >= 1");
    }
}

std::vector<GenerationTuple> group_tuples(const GenerationConfig& config) {
    config.validate();
    std::vector<GenerationTuple> tuples;
    tuples.reserve(config.narrative_styles.size() * config.scenarios.size() *
                   config.emotions.size() * config.max_tokens.size());
    for (NarrativeStyle n : config.narrative_styles)
        for (const auto& s : config.scenarios)
            for (const auto& e : config.emotions)
                for (int m : config.max_tokens) tuples.push_back({n, s, e, m});
    return tuples;
}

std::string length2str(int max_tokens, const std::map<int, std::string>& names) {
    auto it = names.find(max_tokens);
    if (it == names.end()) {
        throw ConfigError("no length description for max_tokens " + std::to_string(max_tokens));
    }
    return it->second;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

Prompt render_prompt(const GenerationTuple& tuple, const std::map<int, std::string>& names) {
    const std::string length = length2str(tuple.max_tokens, names);
    const std::string limit = std::to_string(tuple.max_tokens);
    std::string user = " In the context of " + tuple.scenario + ", ";
    if (tuple.narrative_style == NarrativeStyle::dialogue) {
        user += "say something in first-person or second-person that expresses your feeling, "
                "or using the speaking style of " +
                tuple.emotion + ", as if you are talking to somebody. ";
    } else {
        user += "describe a third-person scene that conveys the emotion, "
                "or using the speaking style of " +
                tuple.emotion + ". ";
    }
    user += "Do not write any explanations and just answer the question. "
            "What you say should be " +
            length + " length with no more than " + limit + " words. ";
    return {std::string(kSystemRole), normalize_whitespace(user)};
}

std::size_t count_words(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        if (is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

GeneratedText clean_text(std::string_view raw, const GenerationTuple& tuple,
                         std::set<std::string>& seen) {
    GeneratedText out;
    out.tuple = tuple;
    out.raw = std::string(raw);

    std::string_view s = trim(raw);
    while (strip_quotes(s) || strip_label(s)) {
    }

    const std::string lowered_raw = to_lower(raw);
    for (std::string_view phrase : kRefusalPhrases) {
        if (lowered_raw.find(phrase) != std::string::npos) {
            out.rejected_reason = "refusal";
            return out;
        }
    }

    const std::size_t words = count_words(s);
    if (words == 0) {
        out.rejected_reason = "empty";
        return out;
    }
    if (words > static_cast<std::size_t>(tuple.max_tokens)) {
        out.rejected_reason = "too_long";
        return out;
    }

    std::string key = to_lower(s);
    if (seen.contains(key)) {
        out.rejected_reason = "duplicate";
        return out;
    }
    seen.insert(std::move(key));
    out.cleaned = std::string(s);
    return out;
}

nlohmann::json tuple_to_json(const GenerationTuple& tuple) {
    return {{"narrative_style", to_string(tuple.narrative_style)},
            {"scenario", tuple.scenario},
            {"emotion", tuple.emotion},
            {"max_tokens", tuple.max_tokens}};
}

GenerationTuple tuple_from_json(const nlohmann::json& j) {
    GenerationTuple t;
    t.narrative_style = parse_narrative_style(j.at("narrative_style").get<std::string>());
    t.scenario = j.at("scenario").get<std::string>();
    t.emotion = j.at("emotion").get<std::string>();
    t.max_tokens = j.at("max_tokens").get<int>();
    return t;
}

nlohmann::json prompt_record(const GenerationTuple& tuple, const Prompt& prompt) {
    return {{"tuple", tuple_to_json(tuple)}, {"system", prompt.system}, {"user", prompt.user}};
}

nlohmann::json text_record(const GeneratedText& text) {
    if (!text.cleaned) throw ValidationError("text record requires an accepted text");
    return {{"id", text.id}, {"tuple", tuple_to_json(text.tuple)}, {"text", *text.cleaned}};
}

GeneratedText text_from_record(const nlohmann::json& j) {
    GeneratedText t;
    t.id = j.at("id").get<std::string>();
    t.tuple = tuple_from_json(j.at("tuple"));
    t.raw = j.at("text").get<std::string>();
    t.cleaned = t.raw;
    return t;
}

}  // namespace sersyn::promptgen
