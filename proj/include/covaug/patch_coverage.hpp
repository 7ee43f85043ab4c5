#pragma once

#include "covaug/change_model.hpp"
#include "covaug/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

struct FileCoverage {
    std::string path;
    std::set<int> executable_lines;
    std::set<int> covered_lines;
    std::set<int> missed_branch_lines;
};

struct CoverageReport {
    std::vector<FileCoverage> files;

    const FileCoverage* find(std::string_view path) const;
};

enum class DefKind { Function, Method, Class };

std::string_view to_string(DefKind kind);

struct Definition {
    /// Module-relative qualified name, e.g. "PrimitiveJob.status".
    std::string name;
    DefKind kind = DefKind::Function;
    int start_line = 1;
    int end_line = 1;
};

struct StructureIndex {
    std::map<std::string, std::vector<Definition>> files;
};

/// Dotted module path for a repository-relative source path ("pkg/sub/mod.py" -> "pkg.sub.mod").
std::string module_name_for(std::string_view path);

struct PatchCoverage {
    LineSet executable;
    LineSet covered;
    LineSet uncovered;

    std::size_t covered_count() const { return covered.size(); }
    std::size_t executable_count() const { return executable.size(); }
    /// |C| / |E|, and 1.0 when nothing executable changed.
    double ratio() const;
    bool fully_covered() const { return covered.size() == executable.size(); }
};

struct FocalFunction {
    std::string qualified_name;
    std::string file;
    int start_line = 0;
    int end_line = 0;
    std::set<int> uncovered_lines;
    std::string annotated_source;
};

class CoverageFileMissing : public InputError {
public:
    explicit CoverageFileMissing(const std::string& path)
        : InputError("coverage report has no entry for changed source file " + path)
        , path_(path)
    {
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class LineOutOfRange : public Error {
public:
    LineOutOfRange(int line, std::size_t line_count)
        : Error("line " + std::to_string(line) + " outside source of " + std::to_string(line_count) + " lines")
    {
    }
};

inline constexpr std::string_view kUncoveredMarker = " # UNCOVERED!";
inline constexpr std::string_view kBranchMarker = " # BRANCH PARTIALLY UNCOVERED!";
inline constexpr std::string_view kCoveredByTestMarker = " # COVERED BY THIS TEST";

PatchCoverage compute_patch_coverage(const DiffModel& diff, const CoverageReport& cov);

/// Suffix uncovered lines with the UNCOVERED marker and branch-missed lines with the branch marker.
/// Idempotent; all other bytes are left untouched.
std::string annotate_uncovered(std::string_view source, const std::set<int>& uncovered,
                               const std::set<int>& missed_branch_lines);

/// Generic form used by the feedback prompts: appends `marker` to each listed line unless already present.
std::string annotate_lines(std::string_view source, const std::map<int, std::string_view>& markers);

/// One focal function per innermost enclosing function/method of an uncovered line, sorted by (file, start).
std::vector<FocalFunction> segment_focal_functions(const PatchCoverage& pc, const StructureIndex& idx,
                                                   const std::map<std::string, std::string>& sources,
                                                   const LinesByFile& missed_branch_lines = {});

// JSON artifacts (schema_version 1).
CoverageReport coverage_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CoverageReport& cov);
StructureIndex structure_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const StructureIndex& idx);
nlohmann::json to_json(const PatchCoverage& pc);
PatchCoverage patch_coverage_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const FocalFunction& focal);
FocalFunction focal_from_json(const nlohmann::json& doc);

nlohmann::json lines_to_json(const LineSet& lines);
LineSet lines_from_json(const nlohmann::json& doc);

/// Throws InputError unless doc is an object with "schema_version": 1.
void require_schema_v1(const nlohmann::json& doc, std::string_view what);

} // namespace covaug
