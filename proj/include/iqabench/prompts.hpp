#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"

namespace iqa {

enum class StimulusMethod { Single, Double, Multiple };
enum class NlpStrategy { Standard, Cot, InContext };

std::string to_string(StimulusMethod m);
StimulusMethod stimulus_method_from_string(const std::string& s);
std::string to_string(NlpStrategy s);
NlpStrategy nlp_strategy_from_string(const std::string& s);

// One solved exemplar instance for in-context prompting. The value used is
// the one matching the stimulus method.
struct Exemplar {
    std::vector<std::string> image_ids;  // attached before the test stimuli
    double score = 50.0;                 // single
    int comparison = 1;                  // double: 1 first better, 0 second, 2 tie
    std::vector<int> ranking = {0, 1, 2, 3};  // multiple
};

struct PromptSpec {
    StimulusMethod stimulus_method = StimulusMethod::Single;
    NlpStrategy nlp_strategy = NlpStrategy::Standard;
    Scenario scenario = Scenario::NR;
    int list_size = 4;  // multiple only; templates support L=4
    std::optional<Exemplar> exemplar;

    // "{scenario}-{method}-{strategy}", e.g. "nr-double-cot"
    std::string template_id() const;
};

struct BuiltPrompt {
    std::string text;
    std::vector<std::string> attachments;  // image ids in template order
};

// Number of stimuli build_prompt expects (FR includes the reference first).
int expected_stimulus_count(const PromptSpec& spec);
// Number of exemplar images expected for in-context prompting.
int expected_exemplar_count(const PromptSpec& spec);

BuiltPrompt build_prompt(const PromptSpec& spec, const std::vector<std::string>& stimuli);

// Template text with canonical placeholder values (score 50, first-better
// comparison, ranking 0..3), as checked against the golden files.
std::string template_text(const std::string& template_id);
std::vector<std::string> all_template_ids();

enum class OutcomeKind { Score, Comparison, Ranking, DescriptionAndScore, Invalid };

struct ParsedOutcome {
    OutcomeKind kind = OutcomeKind::Invalid;
    double score = 0.0;  // single, in [0,100] after clamping
    bool clamped = false;
    int comparison = -1;       // 1 first better, 0 second better, 2 tie
    std::vector<int> ranking;  // one rank per stimulus, in [0, L-1]
    std::string description;   // cot
    std::string raw_text;      // retained when invalid
};

// Never throws: anything unparseable yields kind=Invalid.
ParsedOutcome parse_response(const std::string& text, const PromptSpec& spec);

// Render a valid outcome in the template's response format.
std::string format_outcome(const ParsedOutcome& outcome, const PromptSpec& spec);

enum class PairResult { FirstBetter, SecondBetter, Tie };

struct PairwiseOutcome {
    int i = 0;
    int j = 0;
    PairResult result = PairResult::Tie;
};

// All L*(L-1)/2 pairwise outcomes implied by a ranking; a higher rank value
// means higher quality, equal ranks tie.
std::vector<PairwiseOutcome> expand_ranking(const std::vector<int>& ranking);

}  // namespace iqa
