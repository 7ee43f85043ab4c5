#pragma once

#include "covaug/common.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

enum class FileKind { Source, Test, Doc, Other };
enum class ChangeType { Added, Modified, Deleted };

std::string_view to_string(FileKind kind);
std::string_view to_string(ChangeType change);

struct ChangedFile {
    std::string path;
    FileKind kind = FileKind::Other;
    ChangeType change = ChangeType::Modified;
    /// Post-image line numbers of '+' lines; strictly increasing, empty for deletions.
    std::vector<int> touched_lines;
};

struct DiffModel {
    std::vector<ChangedFile> files;
    std::size_t total_code_files = 0;

    const ChangedFile* find(std::string_view path) const;
};

struct Comment {
    std::string author;
    std::string text;
};

struct PullRequest {
    std::string id;
    std::string title;
    std::string body;
    std::vector<Comment> comments;
    std::vector<std::string> links;
    /// Forge repository URL ("https://github.com/owner/name"); resolves short issue references. May be empty.
    std::string repo_url;
    DiffModel diff;
};

class MalformedDiff : public InputError {
public:
    MalformedDiff(std::size_t line_no, const std::string& what);
    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
};

/// Parse a (possibly git-flavoured) unified diff. Line numbers in errors are 1-based.
DiffModel parse_unified_diff(std::string_view raw);

/// Pure function of the path string. See README for the rules.
FileKind classify_file(std::string_view path);

struct SelectionFilter {
    std::vector<std::string> exclusion_keywords{"DOC", "backport"};
    /// Repository-relative path prefixes outside the coverage tracking scope.
    std::vector<std::string> scope_denylist;
    std::size_t max_code_files = 5;
};

bool pr_selection_filter(const PullRequest& pr, const SelectionFilter& filter = {});

/// Load PR metadata JSON ({id,title,body,comments:[{author,text}],links,repo_url?}). The diff is attached separately.
PullRequest load_pr_metadata(std::string_view json_text);

} // namespace covaug
