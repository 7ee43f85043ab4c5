#include "covaug/generation_loop.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>

namespace covaug {

using nlohmann::json;

std::string_view to_string(FeedbackState s)
{
    switch (s) {
    case FeedbackState::Accept: return "ACCEPT";
    case FeedbackState::FixError: return "FIX_ERROR";
    case FeedbackState::FixPreserveCoverage: return "FIX_PRESERVE_COVERAGE";
    case FeedbackState::IncreaseCoverage: return "INCREASE_COVERAGE";
    case FeedbackState::Exhausted: return "EXHAUSTED";
    }
    return "EXHAUSTED";
}

std::optional<FeedbackState> feedback_state_from_string(std::string_view s)
{
    for (auto st : {FeedbackState::Accept, FeedbackState::FixError, FeedbackState::FixPreserveCoverage,
                    FeedbackState::IncreaseCoverage, FeedbackState::Exhausted})
        if (to_string(st) == s)
            return st;
    return std::nullopt;
}

FeedbackState next_state(bool passed, bool added_any, int round, int max_rounds)
{
    if (passed && added_any)
        return FeedbackState::Accept;
    if (round >= max_rounds)
        return FeedbackState::Exhausted;
    if (!passed && !added_any)
        return FeedbackState::FixError;
    if (!passed)
        return FeedbackState::FixPreserveCoverage;
    return FeedbackState::IncreaseCoverage;
}

std::optional<std::string> extract_code_block(std::string_view response)
{
    size_t open = response.find("```");
    while (open != std::string_view::npos && open > 0 && response[open - 1] != '\n')
        open = response.find("```", open + 3);
    if (open == std::string_view::npos)
        return std::nullopt;
    size_t body = response.find('\n', open);
    if (body == std::string_view::npos)
        return std::nullopt;
    ++body;
    size_t close = body;
    for (;;) {
        close = response.find("```", close);
        if (close == std::string_view::npos)
            return std::nullopt;
        if (close == body || response[close - 1] == '\n')
            break;
        close += 3;
    }
    std::string code(response.substr(body, close - body));
    if (code.find_first_not_of(" \t\r\n") == std::string::npos)
        return std::nullopt;
    if (code.back() != '\n')
        code += '\n';
    return code;
}

std::string tail_excerpt(std::string_view text, std::size_t limit)
{
    if (text.size() <= limit)
        return std::string(text);
    return std::string(text.substr(text.size() - limit));
}

std::string strip_markers(std::string_view annotated)
{
    std::string out;
    out.reserve(annotated.size());
    size_t pos = 0;
    while (pos < annotated.size()) {
        size_t nl = annotated.find('\n', pos);
        size_t end = nl == std::string_view::npos ? annotated.size() : nl;
        std::string_view line = annotated.substr(pos, end - pos);
        bool cr = !line.empty() && line.back() == '\r';
        if (cr)
            line.remove_suffix(1);
        for (auto marker : {kUncoveredMarker, kBranchMarker, kCoveredByTestMarker})
            if (line.ends_with(marker)) {
                line.remove_suffix(marker.size());
                break;
            }
        out += line;
        if (cr)
            out += '\r';
        if (nl != std::string_view::npos)
            out += '\n';
        pos = nl == std::string_view::npos ? annotated.size() : nl + 1;
    }
    return out;
}

namespace {

const char* kSystemPrompt = "You are an expert Python developer who writes focused pytest regression tests.";

std::string context_block(const PrContextSummary& pr_ctx)
{
    return "Pull request summary:\n" + pr_ctx.summary + "\n";
}

Completion ask_for_code(Gateway& llm, PromptRole role, std::vector<Message>& conversation, std::string& code)
{
    Completion r = llm.complete(role, conversation);
    conversation.push_back({"assistant", r.text});
    if (auto block = extract_code_block(r.text)) {
        code = *block;
        return r;
    }
    conversation.push_back({"user", "Your answer did not contain a code block. Reply with the complete test module "
                                    "inside a single ```python fenced block."});
    r = llm.complete(role, conversation);
    conversation.push_back({"assistant", r.text});
    if (auto block = extract_code_block(r.text)) {
        code = *block;
        return r;
    }
    throw NoCodeBlock(std::string("no fenced code block in ") + std::string(to_string(role)) + " response");
}

std::string annotate_focal(const FocalFunction& focal, const LineSet& added)
{
    std::map<int, std::string_view> markers;
    for (int line = focal.start_line; line <= focal.end_line; ++line) {
        int rel = line - focal.start_line + 1;
        if (added.contains({focal.file, line}))
            markers[rel] = kCoveredByTestMarker;
        else if (focal.uncovered_lines.contains(line))
            markers[rel] = kUncoveredMarker;
    }
    return annotate_lines(strip_markers(focal.annotated_source), markers);
}

} // namespace

std::string summarize_uncovered(Gateway& llm, std::string_view diff_text, const PrContextSummary& pr_ctx,
                                const FocalFunction& focal)
{
    if (focal.annotated_source.find(kUncoveredMarker) == std::string::npos
        && focal.annotated_source.find(kBranchMarker) == std::string::npos)
        throw Error("focal function " + focal.qualified_name + " has no uncovered marker");
    Completion r = llm.complete(
        PromptRole::SummarizeUncovered,
        {{"system", kSystemPrompt},
         {"user", context_block(pr_ctx) + "\nPull request diff:\n\n" + std::string(diff_text)
                      + "\nThe function " + focal.qualified_name + " in " + focal.file
                      + " was changed by this pull request. Lines marked `" + std::string(kUncoveredMarker.substr(1))
                      + "` are not executed by any existing test:\n\n```python\n" + focal.annotated_source
                      + (focal.annotated_source.ends_with('\n') ? "" : "\n")
                      + "```\n\nInspect and summarize the modified lines that are uncovered, and describe the "
                        "inputs and program state needed to execute them."}});
    return r.text;
}

CandidateTest generate_candidate(Gateway& llm, const PrContextSummary& pr_ctx, std::string_view uncovered_summary,
                                 const FocalFunction& focal, const TestContext& ctx)
{
    CandidateTest c;
    c.focal = focal.qualified_name;
    c.context_used = ctx;
    c.uncovered_summary = std::string(uncovered_summary);
    std::string where = ctx.class_name.empty() ? ctx.method_name : ctx.class_name + "." + ctx.method_name;
    c.conversation = {
        {"system", kSystemPrompt},
        {"user", context_block(pr_ctx) + "\nUncovered lines of " + focal.qualified_name + ":\n"
                     + std::string(uncovered_summary) + "\n\nFocal function (" + focal.file + "):\n\n```python\n"
                     + focal.annotated_source + (focal.annotated_source.ends_with('\n') ? "" : "\n")
                     + "```\n\nAn existing related test is " + where + " in " + ctx.file
                     + ". Its surrounding test code:\n\n```python\n" + ctx.scaffold
                     + "```\n\nWrite a new pytest test that executes the lines marked UNCOVERED! and checks the "
                       "behaviour introduced by the pull request. Reuse the existing imports and fixtures. Return "
                       "one complete, standalone test module in a single ```python fenced block."}};
    ask_for_code(llm, PromptRole::GenTest, c.conversation, c.source);
    c.round = 0;
    return c;
}

TestOutcome evaluate_candidate(ExecutionBackend& backend, Workspace& ws, std::string_view source,
                               const PatchCoverage& pc)
{
    ExecutionResult r = backend.run_candidate(ws, source);
    TestOutcome o;
    o.duration_s = r.duration_s;
    o.timed_out = r.timed_out;
    o.passed = r.passed && !r.timed_out;
    o.stderr_excerpt = tail_excerpt(r.timed_out ? "TIMEOUT after " + std::to_string(static_cast<int>(r.duration_s))
                                                      + "s\n" + r.stderr_text
                                                : r.stderr_text);
    o.stdout_excerpt = tail_excerpt(r.stdout_text);
    if (r.coverage && !r.timed_out)
        for (const auto& f : r.coverage->files)
            for (int line : f.covered_lines)
                if (pc.uncovered.contains({f.path, line}))
                    o.added_lines.insert({f.path, line});
    return o;
}

void refine(Gateway& llm, CandidateTest& candidate, FeedbackState state, const FocalFunction& focal,
            const PatchCoverage& pc)
{
    if (!candidate.outcome)
        throw Error("refine called on a candidate without an outcome");
    const TestOutcome& o = *candidate.outcome;
    std::string prompt;
    PromptRole role;
    switch (state) {
    case FeedbackState::FixError:
        role = PromptRole::FixError;
        prompt = "The test failed and did not cover any of the uncovered lines. Error output:\n\n```\n"
                 + o.stderr_excerpt + "\n```\n\nFix the test so that it passes and executes the lines marked "
                 + "UNCOVERED!.";
        break;
    case FeedbackState::FixPreserveCoverage:
        role = PromptRole::FixPreserveCoverage;
        prompt = "The test failed, but it covered new lines. Error output:\n\n```\n" + o.stderr_excerpt
                 + "\n```\n\nCoverage of the focal function by this test:\n\n```python\n" + annotate_focal(focal, o.added_lines)
                 + "```\n\nFix the failure while keeping the lines marked COVERED BY THIS TEST covered.";
        break;
    case FeedbackState::IncreaseCoverage: {
        role = PromptRole::IncreaseCoverage;
        LineSet none;
        prompt = "The test passed but did not execute any of the uncovered lines. Lines still uncovered:\n\n```python\n"
                 + annotate_focal(focal, none) + "```\n\nChange the test so that it executes the lines marked UNCOVERED!.";
        break;
    }
    default:
        throw Error("refine called in terminal state " + std::string(to_string(state)));
    }
    (void)pc;
    prompt += " Return the complete test module in a single ```python fenced block.";
    candidate.conversation.push_back({"user", prompt});
    std::string code;
    ask_for_code(llm, role, candidate.conversation, code);
    candidate.source = code;
    candidate.outcome.reset();
    ++candidate.round;
}

GenerationRun run_generation(Gateway& llm, ExecutionBackend& backend, Workspace& ws, const GenerationInputs& in,
                             const GenerationOptions& options)
{
    if (options.tests_per_pr < 1)
        throw InputError("tests_per_pr must be at least 1");
    GenerationRun run;
    std::vector<const FocalFunction*> focals;
    for (const auto& f : in.focals) {
        auto it = in.contexts.entries.find(f.qualified_name);
        if (it != in.contexts.entries.end() && !it->second.empty())
            focals.push_back(&f);
        else
            spdlog::warn("no test context for {}; skipped", f.qualified_name);
    }
    if (focals.empty())
        return run;

    std::map<std::string, std::string> summaries;
    for (int attempt = 0; attempt < options.tests_per_pr; ++attempt) {
        const FocalFunction& focal = *focals[static_cast<size_t>(attempt) % focals.size()];
        const auto& ctxs = in.contexts.entries.at(focal.qualified_name);
        const TestContext& ctx = ctxs[(static_cast<size_t>(attempt) / focals.size()) % ctxs.size()];
        char id[32];
        std::snprintf(id, sizeof id, "cand-%02d", attempt + 1);

        if (!summaries.contains(focal.qualified_name))
            summaries[focal.qualified_name] = summarize_uncovered(llm, in.diff_text, in.pr_context, focal);

        CandidateTest c;
        try {
            c = generate_candidate(llm, in.pr_context, summaries[focal.qualified_name], focal, ctx);
        } catch (const NoCodeBlock& e) {
            spdlog::warn("{}: {}", id, e.what());
            run.failed_attempts.push_back(std::string(id) + ": " + e.what());
            continue;
        }
        c.id = id;
        for (;;) {
            try {
                c.outcome = evaluate_candidate(backend, ws, c.source, in.patch_coverage);
            } catch (const Error& e) {
                spdlog::warn("{}: execution failed: {}", c.id, e.what());
                c.failure = std::string("execution failed: ") + e.what();
                c.outcome = TestOutcome{};
                c.outcome->stderr_excerpt = tail_excerpt(e.what());
                c.state = FeedbackState::Exhausted;
                c.history.push_back({c.round, false, 0, c.state});
                break;
            }
            c.state = next_state(c.outcome->passed, !c.outcome->added_lines.empty(), c.round,
                                 options.max_feedback_rounds);
            c.history.push_back({c.round, c.outcome->passed, c.outcome->added_lines.size(), c.state});
            spdlog::info("{} round {}: passed={} added={} -> {}", c.id, c.round, c.outcome->passed,
                         c.outcome->added_lines.size(), to_string(c.state));
            if (c.state == FeedbackState::Accept || c.state == FeedbackState::Exhausted)
                break;
            TestOutcome last = *c.outcome;
            try {
                refine(llm, c, c.state, focal, in.patch_coverage);
            } catch (const NoCodeBlock& e) {
                spdlog::warn("{}: {}", c.id, e.what());
                c.outcome = last;
                c.failure = e.what();
                c.state = FeedbackState::Exhausted;
                break;
            }
        }
        run.candidates.push_back(std::move(c));
    }
    return run;
}

// ---- JSON ------------------------------------------------------------------------------

json to_json(const CandidateTest& c)
{
    json history = json::array();
    for (const auto& h : c.history)
        history.push_back({{"round", h.round}, {"passed", h.passed}, {"added", h.added}, {"state", to_string(h.state)}});
    json conversation = json::array();
    for (const auto& m : c.conversation)
        conversation.push_back({{"speaker", m.speaker}, {"text", m.text}});
    json outcome = nullptr;
    if (c.outcome)
        outcome = {{"passed", c.outcome->passed},
                   {"added_lines", lines_to_json(c.outcome->added_lines)},
                   {"stderr_excerpt", c.outcome->stderr_excerpt},
                   {"stdout_excerpt", c.outcome->stdout_excerpt},
                   {"duration", c.outcome->duration_s},
                   {"timed_out", c.outcome->timed_out}};
    return {{"id", c.id},
            {"focal", c.focal},
            {"context_used", to_json(c.context_used)},
            {"round", c.round},
            {"state", to_string(c.state)},
            {"failure", c.failure},
            {"uncovered_summary", c.uncovered_summary},
            {"source", c.source},
            {"outcome", outcome},
            {"history", history},
            {"conversation", conversation}};
}

CandidateTest candidate_from_json(const json& doc)
{
    CandidateTest c;
    c.id = doc.at("id").get<std::string>();
    c.focal = doc.at("focal").get<std::string>();
    c.context_used = test_context_from_json(doc.at("context_used"));
    c.round = doc.at("round").get<int>();
    auto st = feedback_state_from_string(doc.at("state").get<std::string>());
    if (!st)
        throw InputError("unknown feedback state in candidate " + c.id);
    c.state = *st;
    c.failure = doc.value("failure", "");
    c.uncovered_summary = doc.value("uncovered_summary", "");
    c.source = doc.at("source").get<std::string>();
    if (const auto& o = doc.at("outcome"); !o.is_null()) {
        TestOutcome out;
        out.passed = o.at("passed").get<bool>();
        out.added_lines = lines_from_json(o.at("added_lines"));
        out.stderr_excerpt = o.value("stderr_excerpt", "");
        out.stdout_excerpt = o.value("stdout_excerpt", "");
        out.duration_s = o.value("duration", 0.0);
        out.timed_out = o.value("timed_out", false);
        c.outcome = out;
    }
    for (const auto& h : doc.value("history", json::array()))
        c.history.push_back({h.at("round").get<int>(), h.at("passed").get<bool>(), h.at("added").get<std::size_t>(),
                             feedback_state_from_string(h.at("state").get<std::string>()).value_or(FeedbackState::Exhausted)});
    for (const auto& m : doc.value("conversation", json::array()))
        c.conversation.push_back({m.at("speaker").get<std::string>(), m.at("text").get<std::string>()});
    return c;
}

json to_json(const GenerationRun& run)
{
    json cands = json::array();
    for (const auto& c : run.candidates)
        cands.push_back(to_json(c));
    return {{"schema_version", 1}, {"candidates", cands}, {"failed_attempts", run.failed_attempts}};
}

GenerationRun generation_run_from_json(const json& doc)
{
    require_schema_v1(doc, "candidates");
    GenerationRun run;
    try {
        for (const auto& c : doc.at("candidates"))
            run.candidates.push_back(candidate_from_json(c));
        run.failed_attempts = doc.value("failed_attempts", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw InputError(std::string("candidates schema error: ") + e.what());
    }
    return run;
}

} // namespace covaug
