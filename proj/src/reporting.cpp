#include "covaug/reporting.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <regex>

namespace covaug {

using nlohmann::json;

std::vector<CoverageCluster> cluster_by_coverage(const std::vector<CandidateTest>& accepted)
{
    std::map<LineSet, std::vector<CandidateTest>> groups;
    for (const auto& c : accepted) {
        if (!c.outcome || c.outcome->added_lines.empty())
            continue;
        groups[c.outcome->added_lines].push_back(c);
    }
    std::vector<CoverageCluster> out;
    for (auto& [key, members] : groups) {
        bool dominated = false;
        for (const auto& [other, _] : groups)
            if (other.size() > key.size() && std::includes(other.begin(), other.end(), key.begin(), key.end())) {
                dominated = true;
                break;
            }
        if (!dominated)
            out.push_back({key, std::move(members)});
    }
    std::stable_sort(out.begin(), out.end(), [](const CoverageCluster& a, const CoverageCluster& b) {
        if (a.key.size() != b.key.size())
            return a.key.size() > b.key.size();
        return a.key < b.key;
    });
    return out;
}

const char* const kSelectionExamples =
    "Example of a good test: it calls the changed function with inputs that reach the new branch, asserts on the "
    "returned value, and reuses the fixtures of the surrounding test class.\n"
    "Example of a poor test: it only checks that no exception is raised, duplicates an existing assertion, or mocks "
    "the function under test.\n";

std::size_t parse_selection(std::string_view response, const CoverageCluster& cluster)
{
    std::string text(response);
    for (size_t i = 0; i < cluster.members.size(); ++i)
        if (!cluster.members[i].id.empty() && text.find(cluster.members[i].id) != std::string::npos)
            return i;
    static const std::regex labelled(R"((?:[Tt]est|#)\s*(\d+))");
    static const std::regex bare(R"(\b(\d+)\b)");
    std::smatch m;
    for (const auto* re : {&labelled, &bare})
        if (std::regex_search(text, m, *re)) {
            long v = std::stol(m[1].str());
            if (v >= 1 && static_cast<size_t>(v) <= cluster.members.size())
                return static_cast<size_t>(v - 1);
        }
    return 0;
}

CandidateTest select_best(Gateway& llm, const CoverageCluster& cluster, const PrContextSummary& pr_ctx,
                          std::string_view diff_text, const PatchCoverage& pc)
{
    if (cluster.members.empty())
        throw Error("select_best called on an empty cluster");
    if (cluster.members.size() == 1)
        return cluster.members.front();
    char ratio[64];
    std::snprintf(ratio, sizeof ratio, "%zu of %zu changed executable lines (%.1f%%)", pc.covered_count(),
                  pc.executable_count(), 100.0 * pc.ratio());
    std::string tests;
    for (size_t i = 0; i < cluster.members.size(); ++i)
        tests += "Test " + std::to_string(i + 1) + ":\n```python\n" + cluster.members[i].source + "```\n\n";
    Completion r = llm.complete(
        PromptRole::SelectBest,
        {{"system", "You review regression tests proposed for a pull request."},
         {"user", "Pull request summary:\n" + pr_ctx.summary + "\n\nDiff:\n\n" + std::string(diff_text)
                      + "\nExisting tests cover " + ratio + ". Each test below covers the same previously uncovered "
                      "lines.\n\n" + tests
                      + "Pick the single best test using these criteria:\n"
                        "1. worthiness: how likely the test is to catch regressions of the changed behaviour;\n"
                        "2. integration: how naturally it fits the existing test suite;\n"
                        "3. relevance: how closely it targets the changes made by the pull request.\n\n"
                      + kSelectionExamples + "\nAnswer with \"Test <number>\"."}});
    return cluster.members[parse_selection(r.text, cluster)];
}

double pc_after(const PatchCoverage& pc, const std::vector<CandidateTest>& selected)
{
    if (pc.executable.empty())
        return 1.0;
    LineSet covered = pc.covered;
    for (const auto& t : selected)
        if (t.outcome)
            for (const auto& l : t.outcome->added_lines)
                if (pc.executable.contains(l))
                    covered.insert(l);
    return static_cast<double>(covered.size()) / static_cast<double>(pc.executable.size());
}

namespace {

std::string fence_for(std::string_view body)
{
    size_t longest = 0, run = 0;
    for (char c : body) {
        run = c == '`' ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    return std::string(std::max<size_t>(3, longest + 1), '`');
}

std::string fenced(std::string_view lang, std::string_view body)
{
    std::string f = fence_for(body);
    std::string out = f + std::string(lang) + "\n" + std::string(body);
    if (!body.empty() && body.back() != '\n')
        out += '\n';
    return out + f + "\n";
}

std::string percent(double r)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r);
    return buf;
}

std::string line_list(const LineSet& lines)
{
    std::string s;
    for (const auto& [path, ls] : group_by_file(lines)) {
        if (!s.empty())
            s += "; ";
        s += path + ":";
        bool first = true;
        for (int l : ls) {
            s += (first ? " " : ", ") + std::to_string(l);
            first = false;
        }
    }
    return s;
}

} // namespace

std::string summarize_entry(const ReportEntry& e)
{
    const CandidateTest& t = e.test;
    std::string where = e.plan.class_name.empty() ? e.plan.file : e.plan.file + "::" + e.plan.class_name;
    std::string s = "This test exercises `" + t.focal + "`";
    size_t added = t.outcome ? t.outcome->added_lines.size() : 0;
    s += " and executes " + std::to_string(added) + " changed line" + (added == 1 ? "" : "s")
         + " that no existing test reached";
    if (t.outcome)
        s += " (" + line_list(t.outcome->added_lines) + ")";
    s += ".\n\n";
    if (e.plan.mode == IntegrationMode::ExtendExisting)
        s += "It extends the existing test `" + e.plan.method_name + "` in `" + where + "`.";
    else
        s += "It is added as a new test in `" + where + "`.";
    s += " It passed after " + std::to_string(t.round) + " feedback round" + (t.round == 1 ? "" : "s") + ".\n";
    if (!e.merge.added_imports.empty()) {
        s += "\nNew imports:";
        for (const auto& i : e.merge.added_imports)
            s += " `" + i + "`";
        s += "\n";
    }
    if (!t.uncovered_summary.empty()) {
        s += "\nWhat the previously uncovered code does:\n\n";
        for (const auto& line : split_lines(t.uncovered_summary))
            s += "> " + line + "\n";
    }
    for (const auto& n : e.merge.notices)
        s += "\n**Notice:** " + n + "\n";
    return s;
}

std::string render_coverage(const PatchCoverage& pc, const LineSet& added, const std::map<std::string, std::string>& sources)
{
    std::string out;
    const LinesByFile exec = group_by_file(pc.executable);
    for (const auto& [path, lines] : group_by_file(added)) {
        auto src = sources.find(path);
        std::vector<std::string> text = src == sources.end() ? std::vector<std::string>{} : split_lines(src->second);
        std::string body;
        auto it = exec.find(path);
        std::set<int> shown = it == exec.end() ? std::set<int>{} : it->second;
        shown.insert(lines.begin(), lines.end());
        for (int l : shown) {
            char num[16];
            std::snprintf(num, sizeof num, "%5d | ", l);
            std::string code = l >= 1 && static_cast<size_t>(l) <= text.size() ? text[static_cast<size_t>(l - 1)] : "";
            if (!code.empty() && code.back() == '\r')
                code.pop_back();
            body += num + code;
            if (lines.contains(l))
                body += kCoveredByTestMarker;
            else if (pc.uncovered.contains({path, l}))
                body += kUncoveredMarker;
            body += "\n";
        }
        out += "`" + path + "` (changed executable lines):\n\n" + fenced("python", body) + "\n";
    }
    return out;
}

std::string render_report(const ReportData& d)
{
    std::vector<CandidateTest> selected;
    for (const auto& e : d.entries)
        selected.push_back(e.test);
    const PatchCoverage& pc = d.patch_coverage;
    const double after = pc_after(pc, selected);
    LineSet added_all;
    for (const auto& t : selected)
        if (t.outcome)
            added_all.insert(t.outcome->added_lines.begin(), t.outcome->added_lines.end());

    std::string out = "# Test augmentation report: PR " + d.pr_id + "\n\n";
    if (!d.pr_title.empty())
        out += "**" + d.pr_title + "**\n\n";
    out += "| | covered / executable changed lines | patch coverage |\n|---|---|---|\n";
    out += "| before | " + std::to_string(pc.covered_count()) + " / " + std::to_string(pc.executable_count()) + " | "
           + percent(pc.ratio()) + " |\n";
    out += "| after | " + std::to_string(pc.covered_count() + added_all.size()) + " / "
           + std::to_string(pc.executable_count()) + " | " + percent(after) + " |\n\n";
    out += "Candidates generated: " + std::to_string(d.candidates_generated) + ", accepted: "
           + std::to_string(d.candidates_accepted) + ", selected: " + std::to_string(d.entries.size()) + ".\n\n";
    char cost[128];
    std::snprintf(cost, sizeof cost, "LLM usage: %lld prompt tokens, %lld completion tokens, $%.4f.\n\n",
                  static_cast<long long>(d.cost.prompt_tokens), static_cast<long long>(d.cost.completion_tokens),
                  d.cost.usd);
    out += cost;
    for (const auto& n : d.notes)
        out += "- " + n + "\n";
    if (!d.notes.empty())
        out += "\n";

    if (d.entries.empty()) {
        out += "No test was contributed: no generated test both passed and executed previously uncovered lines.\n";
        return out;
    }
    for (size_t i = 0; i < d.entries.size(); ++i) {
        const ReportEntry& e = d.entries[i];
        out += "---\n\n# Test " + std::to_string(i + 1) + ": " + e.test.id + "\n\n";
        out += "## Summary\n\n" + summarize_entry(e) + "\n";
        out += "## Coverage\n\n"
               + render_coverage(pc, e.test.outcome ? e.test.outcome->added_lines : LineSet{}, d.sources);
        out += "## Runtime Log\n\n";
        std::string log;
        for (const auto& h : e.test.history)
            log += "round " + std::to_string(h.round) + ": " + (h.passed ? "passed" : "failed") + ", "
                   + std::to_string(h.added) + " uncovered line" + (h.added == 1 ? "" : "s") + " executed -> "
                   + std::string(to_string(h.state)) + "\n";
        if (e.test.outcome) {
            if (!e.test.outcome->stdout_excerpt.empty())
                log += "\n[stdout]\n" + e.test.outcome->stdout_excerpt;
            if (!e.test.outcome->stderr_excerpt.empty())
                log += (log.ends_with('\n') ? "" : "\n") + std::string("\n[stderr]\n") + e.test.outcome->stderr_excerpt;
        }
        out += fenced("text", log) + "\n";
        out += "## Test Patch\n\n" + fenced("diff", e.patch) + "\n";
        out += "## Full Test File\n\n`" + e.plan.file + "`\n\n" + fenced("python", e.merge.merged_file) + "\n";
    }
    return out;
}

std::filesystem::path emit_report(const ReportData& data, const std::filesystem::path& out_dir)
{
    std::filesystem::path p = out_dir / data.pr_id / "report.md";
    write_file_atomic(p.string(), render_report(data));
    return p;
}

json to_json(const ReportEntry& e)
{
    return {{"test", to_json(e.test)}, {"plan", to_json(e.plan)}, {"merge", to_json(e.merge)}, {"patch", e.patch}};
}

ReportEntry report_entry_from_json(const json& doc)
{
    return {candidate_from_json(doc.at("test")), integration_plan_from_json(doc.at("plan")),
            merge_result_from_json(doc.at("merge")), doc.at("patch").get<std::string>()};
}

} // namespace covaug
