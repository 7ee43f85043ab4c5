#pragma once

#include "covaug/change_model.hpp"
#include "covaug/exec_backend.hpp"
#include "covaug/llm_gateway.hpp"
#include "covaug/patch_coverage.hpp"
#include "covaug/pr_context.hpp"
#include "covaug/test_context.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

enum class FeedbackState { Accept, FixError, FixPreserveCoverage, IncreaseCoverage, Exhausted };

std::string_view to_string(FeedbackState s);
std::optional<FeedbackState> feedback_state_from_string(std::string_view s);

/// Four-outcome table with the refinement cap. Total over all inputs.
FeedbackState next_state(bool passed, bool added_any, int round, int max_rounds);

struct TestOutcome {
    bool passed = false;
    /// Candidate-covered lines intersected with U.
    LineSet added_lines;
    std::string stderr_excerpt;
    std::string stdout_excerpt;
    double duration_s = 0.0;
    bool timed_out = false;
};

struct RoundRecord {
    int round = 0;
    bool passed = false;
    std::size_t added = 0;
    FeedbackState state = FeedbackState::Exhausted;
};

struct CandidateTest {
    std::string id;
    std::string source;
    std::string focal;
    TestContext context_used;
    int round = 0;
    std::optional<TestOutcome> outcome;
    FeedbackState state = FeedbackState::Exhausted;
    std::string uncovered_summary;
    std::vector<RoundRecord> history;
    /// Set when the attempt ended on an execution or response failure rather than the round cap.
    std::string failure;
    /// Conversation so far; refinements continue it.
    std::vector<Message> conversation;

    bool accepted() const { return state == FeedbackState::Accept; }
};

nlohmann::json to_json(const CandidateTest& c);
CandidateTest candidate_from_json(const nlohmann::json& doc);

class NoCodeBlock : public Error {
public:
    using Error::Error;
};

/// Contents of the first ``` fenced block, always newline-terminated; nullopt when there is none.
std::optional<std::string> extract_code_block(std::string_view response);

/// Keeps the last `limit` characters.
std::string tail_excerpt(std::string_view text, std::size_t limit = 4000);

/// Removes the uncovered/branch markers that annotate_uncovered appended.
std::string strip_markers(std::string_view annotated);

std::string summarize_uncovered(Gateway& llm, std::string_view diff_text, const PrContextSummary& pr_ctx,
                                const FocalFunction& focal);

CandidateTest generate_candidate(Gateway& llm, const PrContextSummary& pr_ctx, std::string_view uncovered_summary,
                                 const FocalFunction& focal, const TestContext& ctx);

/// Runs the candidate alone and intersects its coverage with U.
TestOutcome evaluate_candidate(ExecutionBackend& backend, Workspace& ws, std::string_view source,
                               const PatchCoverage& pc);

/// One feedback round: prompt chosen by `state`, round incremented, source replaced.
void refine(Gateway& llm, CandidateTest& candidate, FeedbackState state, const FocalFunction& focal,
            const PatchCoverage& pc);

struct GenerationInputs {
    std::string diff_text;
    PrContextSummary pr_context;
    PatchCoverage patch_coverage;
    std::vector<FocalFunction> focals;
    TestContextMap contexts;
};

struct GenerationOptions {
    int tests_per_pr = 6;
    int max_feedback_rounds = 3;
};

struct GenerationRun {
    std::vector<CandidateTest> candidates;
    /// Attempts that produced no candidate at all (no code block after the re-ask).
    std::vector<std::string> failed_attempts;
};

/// Up to N attempts, cycling focal functions and their contexts round-robin.
GenerationRun run_generation(Gateway& llm, ExecutionBackend& backend, Workspace& ws, const GenerationInputs& in,
                             const GenerationOptions& options = {});

nlohmann::json to_json(const GenerationRun& run);
GenerationRun generation_run_from_json(const nlohmann::json& doc);

} // namespace covaug
