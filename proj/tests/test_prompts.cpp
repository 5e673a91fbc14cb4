#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "iqabench/error.hpp"
#include "iqabench/prompts.hpp"
#include "iqabench/rng.hpp"
#include "helpers.hpp"

using namespace iqa;

namespace {

PromptSpec make_spec(Scenario sc, StimulusMethod m, NlpStrategy st) {
    PromptSpec spec;
    spec.scenario = sc;
    spec.stimulus_method = m;
    spec.nlp_strategy = st;
    if (st == NlpStrategy::InContext) spec.exemplar = Exemplar{};
    return spec;
}

}  // namespace

TEST_CASE("all 18 templates are byte-identical to the golden files") {
    const auto ids = all_template_ids();
    REQUIRE(ids.size() == 18);
    for (const std::string& id : ids) {
        CAPTURE(id);
        const std::string golden = testutil::read_file(std::string(TEMPLATE_DIR) + "/" + id + ".txt");
        CHECK(template_text(id) + "\n" == golden);
    }
}

TEST_CASE("build_prompt fills substitution slots") {
    SUBCASE("NR single in-context carries the exemplar score") {
        PromptSpec spec = make_spec(Scenario::NR, StimulusMethod::Single, NlpStrategy::InContext);
        spec.exemplar->image_ids = {"ex"};
        spec.exemplar->score = 50;
        const BuiltPrompt p = build_prompt(spec, {"test"});
        CHECK(p.text.find("the human perceptual quality score of the first image is 50") !=
              std::string::npos);
        CHECK(p.attachments == std::vector<std::string>{"ex", "test"});
    }
    SUBCASE("FR double standard attaches the reference first") {
        const PromptSpec spec = make_spec(Scenario::FR, StimulusMethod::Double, NlpStrategy::Standard);
        const BuiltPrompt p = build_prompt(spec, {"ref", "a", "b"});
        REQUIRE(p.attachments.size() == 3);
        CHECK(p.attachments[0] == "ref");
        CHECK(p.text.find("the first image is a reference high-quality image") != std::string::npos);
    }
    SUBCASE("NR multiple standard states the bracketed response format") {
        const PromptSpec spec = make_spec(Scenario::NR, StimulusMethod::Multiple, NlpStrategy::Standard);
        const BuiltPrompt p = build_prompt(spec, {"a", "b", "c", "d"});
        CHECK(p.text.find("Score: [first: , second: , third: , ...]") != std::string::npos);
    }
    SUBCASE("double in-context substitutes the comparison sentence") {
        PromptSpec spec = make_spec(Scenario::NR, StimulusMethod::Double, NlpStrategy::InContext);
        spec.exemplar->image_ids = {"e1", "e2"};
        spec.exemplar->comparison = 0;
        const BuiltPrompt p = build_prompt(spec, {"a", "b"});
        CHECK(p.text.find("the second image is of better quality than the first image") !=
              std::string::npos);
        CHECK(p.attachments.size() == 4);
    }
    SUBCASE("multiple in-context substitutes the four ranks") {
        PromptSpec spec = make_spec(Scenario::NR, StimulusMethod::Multiple, NlpStrategy::InContext);
        spec.exemplar->image_ids = {"e1", "e2", "e3", "e4"};
        spec.exemplar->ranking = {3, 0, 2, 1};
        const BuiltPrompt p = build_prompt(spec, {"a", "b", "c", "d"});
        CHECK(p.text.find("[first: 3, second: 1, third: 2, fourth: 1]") == std::string::npos);
        CHECK(p.text.find("[first: 3, second: 0, third: 2, fourth: 1]") != std::string::npos);
        CHECK(p.attachments.size() == 8);
    }
}

TEST_CASE("build_prompt validates its inputs") {
    CHECK_THROWS_AS(build_prompt(make_spec(Scenario::NR, StimulusMethod::Single,
                                           NlpStrategy::Standard),
                                 {"a", "b"}),
                    Error);
    CHECK_THROWS_AS(build_prompt(make_spec(Scenario::FR, StimulusMethod::Double,
                                           NlpStrategy::Standard),
                                 {"a", "b"}),  // missing reference
                    Error);
    PromptSpec no_exemplar = make_spec(Scenario::NR, StimulusMethod::Single, NlpStrategy::InContext);
    no_exemplar.exemplar.reset();
    CHECK_THROWS_AS(build_prompt(no_exemplar, {"a"}), Error);

    PromptSpec stray = make_spec(Scenario::NR, StimulusMethod::Single, NlpStrategy::Standard);
    stray.exemplar = Exemplar{};
    CHECK_THROWS_AS(build_prompt(stray, {"a"}), Error);

    PromptSpec l5 = make_spec(Scenario::NR, StimulusMethod::Multiple, NlpStrategy::Standard);
    l5.list_size = 5;
    CHECK_THROWS_AS(build_prompt(l5, {"a", "b", "c", "d", "e"}), Error);
}

TEST_CASE("parse_response extracts structured outcomes") {
    const PromptSpec single = make_spec(Scenario::NR, StimulusMethod::Single, NlpStrategy::Standard);
    const PromptSpec double_cot = make_spec(Scenario::NR, StimulusMethod::Double, NlpStrategy::Cot);
    PromptSpec multiple = make_spec(Scenario::NR, StimulusMethod::Multiple, NlpStrategy::Standard);

    SUBCASE("plain score") {
        const ParsedOutcome o = parse_response("Score: 85", single);
        CHECK(o.kind == OutcomeKind::Score);
        CHECK(o.score == 85);
        CHECK_FALSE(o.clamped);
    }
    SUBCASE("cot description with tie comparison") {
        const ParsedOutcome o =
            parse_response("Description: both images look equally sharp. Score: 2", double_cot);
        CHECK(o.kind == OutcomeKind::Comparison);
        CHECK(o.comparison == 2);
        CHECK(o.description == "both images look equally sharp");
    }
    SUBCASE("bracketed ranking") {
        const ParsedOutcome o =
            parse_response("Score: [first: 2, second: 0, third: 1, fourth: 3]", multiple);
        CHECK(o.kind == OutcomeKind::Ranking);
        CHECK(o.ranking == std::vector<int>{2, 0, 1, 3});
    }
    SUBCASE("the LAST Score occurrence wins") {
        const ParsedOutcome o =
            parse_response("I would estimate Score: 10 at first glance. Final Score: 64", single);
        CHECK(o.score == 64);
    }
    SUBCASE("out-of-range single scores clamp with a flag") {
        ParsedOutcome o = parse_response("Score: 150", single);
        CHECK(o.score == 100);
        CHECK(o.clamped);
        o = parse_response("Score: -3", single);
        CHECK(o.score == 0);
        CHECK(o.clamped);
    }
    SUBCASE("unparseable text is invalid, never a throw") {
        ParsedOutcome o = parse_response("I cannot rate these images.", single);
        CHECK(o.kind == OutcomeKind::Invalid);
        CHECK(o.raw_text == "I cannot rate these images.");
        CHECK(parse_response("Score: 7", multiple).kind == OutcomeKind::Invalid);
        CHECK(parse_response("Score: 5", double_cot).kind == OutcomeKind::Invalid);
        CHECK(parse_response("Score: [first: 2, second: 9, third: 1, fourth: 3]", multiple).kind ==
              OutcomeKind::Invalid);
        CHECK(parse_response("", single).kind == OutcomeKind::Invalid);
    }
}

TEST_CASE("format/parse round-trip is the identity on valid outcomes") {
    Rng rng(77);
    const char* words[] = {"soft", "blocky", "noisy", "sharp", "washed", "vivid"};
    for (int trial = 0; trial < 1000; ++trial) {
        PromptSpec spec;
        spec.scenario = rng.below(2) ? Scenario::FR : Scenario::NR;
        const int method = static_cast<int>(rng.below(3));
        spec.stimulus_method = static_cast<StimulusMethod>(method);
        spec.nlp_strategy = rng.below(2) ? NlpStrategy::Cot : NlpStrategy::Standard;

        ParsedOutcome out;
        if (spec.nlp_strategy == NlpStrategy::Cot)
            out.description = std::string(words[rng.below(6)]) + " " + words[rng.below(6)];
        switch (spec.stimulus_method) {
            case StimulusMethod::Single:
                out.score = std::floor(rng.uniform01() * 10000) / 100.0;
                out.kind = !out.description.empty() ? OutcomeKind::DescriptionAndScore
                                                    : OutcomeKind::Score;
                break;
            case StimulusMethod::Double:
                out.comparison = static_cast<int>(rng.below(3));
                out.kind = OutcomeKind::Comparison;
                break;
            case StimulusMethod::Multiple:
                out.kind = OutcomeKind::Ranking;
                for (int i = 0; i < 4; ++i)
                    out.ranking.push_back(static_cast<int>(rng.below(4)));
                break;
        }
        const std::string text = format_outcome(out, spec);
        const ParsedOutcome back = parse_response(text, spec);
        CAPTURE(text);
        CHECK(back.kind == out.kind);
        CHECK(back.score == out.score);
        CHECK(back.comparison == out.comparison);
        CHECK(back.ranking == out.ranking);
        CHECK(back.description == out.description);
        CHECK_FALSE(back.clamped);
    }
}

TEST_CASE("expand_ranking enumerates all pairwise outcomes") {
    SUBCASE("[3,1,0,2]: stimulus 0 beats everyone") {
        const auto pairs = expand_ranking({3, 1, 0, 2});
        REQUIRE(pairs.size() == 6);
        // hand enumeration: (0,1)F (0,2)F (0,3)F (1,2)F (1,3)S (2,3)S
        const PairResult want[6] = {PairResult::FirstBetter, PairResult::FirstBetter,
                                    PairResult::FirstBetter, PairResult::FirstBetter,
                                    PairResult::SecondBetter, PairResult::SecondBetter};
        const int wi[6] = {0, 0, 0, 1, 1, 2};
        const int wj[6] = {1, 2, 3, 2, 3, 3};
        for (int k = 0; k < 6; ++k) {
            CHECK(pairs[k].i == wi[k]);
            CHECK(pairs[k].j == wj[k]);
            CHECK(pairs[k].result == want[k]);
        }
    }
    SUBCASE("[1,1] is a single tie") {
        const auto pairs = expand_ranking({1, 1});
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].result == PairResult::Tie);
    }
    SUBCASE("[0,1] prefers stimulus 1") {
        const auto pairs = expand_ranking({0, 1});
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].result == PairResult::SecondBetter);
    }
    SUBCASE("cardinality is L(L-1)/2 and bad ranks throw") {
        for (int L = 2; L <= 6; ++L) {
            std::vector<int> r(L, 0);
            CHECK(expand_ranking(r).size() == static_cast<size_t>(L * (L - 1) / 2));
        }
        CHECK_THROWS_AS(expand_ranking({0, 4}), Error);
    }
}
