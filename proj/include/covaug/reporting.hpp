#pragma once

#include "covaug/generation_loop.hpp"
#include "covaug/llm_gateway.hpp"
#include "covaug/patch_coverage.hpp"
#include "covaug/pr_context.hpp"
#include "covaug/test_integration.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

struct CoverageCluster {
    LineSet key;
    std::vector<CandidateTest> members;
};

/// Groups by identical added lines, drops groups whose key is a strict subset of another key,
/// orders by key size (descending) then key.
std::vector<CoverageCluster> cluster_by_coverage(const std::vector<CandidateTest>& accepted);

/// Index of the member named by a SELECT_BEST answer ("Test 2", a candidate id, or a bare number); 0 otherwise.
std::size_t parse_selection(std::string_view response, const CoverageCluster& cluster);

/// Positive and negative selection examples shown to the LLM. Plain prompt assets; edit freely.
extern const char* const kSelectionExamples;

CandidateTest select_best(Gateway& llm, const CoverageCluster& cluster, const PrContextSummary& pr_ctx,
                          std::string_view diff_text, const PatchCoverage& pc);

/// |C ∪ added| / |E| over the selected tests.
double pc_after(const PatchCoverage& pc, const std::vector<CandidateTest>& selected);

struct ReportEntry {
    CandidateTest test;
    IntegrationPlan plan;
    MergeResult merge;
    std::string patch;
};

struct ReportData {
    std::string pr_id;
    std::string pr_title;
    PatchCoverage patch_coverage;
    std::vector<ReportEntry> entries;
    /// Post-PR text of the changed source files, used to render coverage.
    std::map<std::string, std::string> sources;
    std::size_t candidates_generated = 0;
    std::size_t candidates_accepted = 0;
    std::vector<std::string> notes;
    CostLedger cost;
};

/// Deterministic per-test summary built from the uncovered-lines summary and the merge outcome.
std::string summarize_entry(const ReportEntry& e);

/// Numbered changed lines of each file touched by the test; key lines carry the COVERED BY THIS TEST marker.
std::string render_coverage(const PatchCoverage& pc, const LineSet& added, const std::map<std::string, std::string>& sources);

std::string render_report(const ReportData& data);

/// Writes <out_dir>/<pr_id>/report.md atomically and returns its path.
std::filesystem::path emit_report(const ReportData& data, const std::filesystem::path& out_dir);

nlohmann::json to_json(const ReportEntry& e);
ReportEntry report_entry_from_json(const nlohmann::json& doc);

} // namespace covaug
