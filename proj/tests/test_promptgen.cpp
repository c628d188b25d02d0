#include "doctest.h"

#include <nlohmann/json.hpp>
#include <set>

#include "sersyn/errors.hpp"
#include "sersyn/promptgen.hpp"
#include "sersyn/rng.hpp"

using namespace sersyn;
using namespace sersyn::promptgen;

namespace {

GenerationConfig single(NarrativeStyle n, std::string s, std::string e, int m) {
    GenerationConfig c;
    c.narrative_styles = {n};
    c.scenarios = {std::move(s)};
    c.emotions = {std::move(e)};
    c.max_tokens = {m};
    return c;
}

GenerationTuple tup(int max_tokens = 10) {
    return {NarrativeStyle::dialogue, "sports", "angry", max_tokens};
}

}  // namespace

TEST_CASE("group_tuples enumerates the product in config order") {
    auto c = single(NarrativeStyle::dialogue, "music", "sad", 10);
    auto t = group_tuples(c);
    REQUIRE(t.size() == 1);
    CHECK(t[0] == GenerationTuple{NarrativeStyle::dialogue, "music", "sad", 10});

    c.narrative_styles = {NarrativeStyle::dialogue, NarrativeStyle::narrative};
    t = group_tuples(c);
    REQUIRE(t.size() == 2);
    CHECK(t[0].narrative_style == NarrativeStyle::dialogue);
    CHECK(t[1].narrative_style == NarrativeStyle::narrative);

    const auto full = GenerationConfig::standard();
    CHECK(full.narrative_styles.size() == 2);
    CHECK(full.scenarios.size() == 24);
    CHECK(full.emotions.size() == 12);
    CHECK(full.max_tokens.size() == 3);
    const auto all = group_tuples(full);
    CHECK(all.size() == 1728);
    CHECK(std::set<GenerationTuple>(all.begin(), all.end()).size() == all.size());
    // max_tokens varies fastest
    CHECK(all[0].max_tokens == 10);
    CHECK(all[1].max_tokens == 30);
    CHECK(all[3].emotion == full.emotions[1]);
}

TEST_CASE("group_tuples rejects invalid configurations") {
    auto c = single(NarrativeStyle::dialogue, "music", "sad", 10);
    c.scenarios.clear();
    CHECK_THROWS_AS(group_tuples(c), ConfigError);

    c = single(NarrativeStyle::dialogue, "music", "sad", 10);
    c.emotions = {"sad", "sad"};
    CHECK_THROWS_AS(group_tuples(c), ConfigError);

    c = single(NarrativeStyle::dialogue, "music", "sad", 20);
    CHECK_THROWS_AS(group_tuples(c), ConfigError);
}

TEST_CASE("length2str") {
    CHECK(length2str(10) == "short");
    CHECK(length2str(30) == "middle");
    CHECK(length2str(50) == "long");
    CHECK_THROWS_AS(length2str(20), ConfigError);
    CHECK(length2str(20, {{20, "brief"}}) == "brief");
}

TEST_CASE("render_prompt dialogue and narrative templates") {
    const auto p = render_prompt({NarrativeStyle::dialogue, "sports", "angry", 10});
    CHECK(p.system == "You are a helpful assistant with human emotions and talking styles.");
    CHECK(p.user ==
          "In the context of sports, say something in first-person or second-person that "
          "expresses your feeling, or using the speaking style of angry, as if you are talking "
          "to somebody. Do not write any explanations and just answer the question. What you "
          "say should be short length with no more than 10 words.");

    const auto n = render_prompt({NarrativeStyle::narrative, "history", "sad", 50});
    CHECK(n.user ==
          "In the context of history, describe a third-person scene that conveys the emotion, "
          "or using the speaking style of sad. Do not write any explanations and just answer "
          "the question. What you say should be long length with no more than 50 words.");
    CHECK(n.user.find("describe a third-person scene that conveys the emotion") != std::string::npos);
    CHECK(n.user.find("long length with no more than 50 words") != std::string::npos);
    CHECK(n.system == p.system);

    // pure function
    CHECK(render_prompt({NarrativeStyle::narrative, "history", "sad", 50}).user == n.user);
}

TEST_CASE("normalize_whitespace") {
    CHECK(normalize_whitespace("  a \t b\n\nc  ") == "a b c");
    CHECK(normalize_whitespace("") == "");
    CHECK(normalize_whitespace("   ") == "");
}

TEST_CASE("clean_text rule chain") {
    std::set<std::string> seen;
    auto r = clean_text("\"I can't believe you did that!\"", tup(), seen);
    REQUIRE(r.cleaned);
    CHECK(*r.cleaned == "I can't believe you did that!");
    CHECK_FALSE(r.rejected_reason);

    r = clean_text("As an AI, I don't have feelings.", tup(), seen);
    CHECK_FALSE(r.cleaned);
    CHECK(*r.rejected_reason == "refusal");

    r = clean_text("one two three four five six seven eight nine ten eleven twelve thirteen",
                   tup(), seen);
    CHECK(*r.rejected_reason == "too_long");

    r = clean_text("   \"\"  ", tup(), seen);
    CHECK(*r.rejected_reason == "empty");

    r = clean_text("Answer:   \xE2\x80\x9CWhat a game tonight!\xE2\x80\x9D", tup(), seen);
    REQUIRE(r.cleaned);
    CHECK(*r.cleaned == "What a game tonight!");

    r = clean_text("what a GAME tonight!", tup(), seen);
    CHECK(*r.rejected_reason == "duplicate");

    r = clean_text("I'm sorry, but I can't help.", tup(), seen);
    CHECK(*r.rejected_reason == "refusal");

    // Labels are only stripped when followed by a colon.
    r = clean_text("Text me later, okay?", tup(), seen);
    REQUIRE(r.cleaned);
    CHECK(*r.cleaned == "Text me later, okay?");

    // Exactly max_tokens words is accepted.
    r = clean_text("a b c d e f g h i j", tup(), seen);
    CHECK(r.cleaned);
}

TEST_CASE("clean_text properties over random inputs") {
    const std::vector<std::string> pieces{"\"", "'", "Answer:", "Response :", "Text:", "  ",
                                          "hello", "World", "go", "team", "\xE2\x80\x9C",
                                          "\xE2\x80\x9D", "I cannot", "wow"};
    Rng rng(7);
    std::set<std::string> seen;
    std::set<std::string> accepted_lower;
    for (int trial = 0; trial < 2000; ++trial) {
        std::string raw;
        const auto n = 1 + rng.below(8);
        for (std::uint64_t i = 0; i < n; ++i) {
            raw += pieces[rng.below(pieces.size())];
            if (rng.below(2)) raw += " ";
        }
        const auto t = tup(static_cast<int>(1 + rng.below(6)));
        const auto r = clean_text(raw, t, seen);
        CHECK(r.cleaned.has_value() != r.rejected_reason.has_value());
        if (!r.cleaned) continue;
        const auto words = count_words(*r.cleaned);
        CHECK(words >= 1);
        CHECK(words <= static_cast<std::size_t>(t.max_tokens));

        std::string lower = *r.cleaned;
        for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        CHECK(accepted_lower.insert(lower).second);

        std::set<std::string> fresh;
        const auto again = clean_text(*r.cleaned, t, fresh);
        REQUIRE(again.cleaned);
        CHECK(*again.cleaned == *r.cleaned);
    }
}

TEST_CASE("JSON records") {
    const GenerationTuple t{NarrativeStyle::narrative, "music", "sad", 30};
    const auto p = prompt_record(t, render_prompt(t));
    CHECK(p.at("tuple").at("narrative_style") == "narrative");
    CHECK(p.at("tuple").at("max_tokens") == 30);
    CHECK(p.contains("system"));
    CHECK(p.contains("user"));

    GeneratedText g;
    g.id = "t00001_s00";
    g.tuple = t;
    g.cleaned = "hi there";
    const auto j = text_record(g);
    CHECK(j.at("text") == "hi there");
    const auto back = text_from_record(j);
    CHECK(back.tuple == t);
    CHECK(*back.cleaned == "hi there");

    g.cleaned.reset();
    g.rejected_reason = "refusal";
    CHECK_THROWS_AS(text_record(g), ValidationError);
}
