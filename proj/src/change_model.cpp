#include "covaug/change_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <set>

namespace covaug {

namespace {

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::vector<std::string_view> path_segments(std::string_view path)
{
    std::vector<std::string_view> segs;
    size_t start = 0;
    while (start <= path.size()) {
        size_t slash = path.find('/', start);
        if (slash == std::string_view::npos)
            slash = path.size();
        if (slash > start)
            segs.push_back(path.substr(start, slash - start));
        start = slash + 1;
    }
    return segs;
}

// Unquote a git-style quoted path ("a/with space").
std::string unquote_path(std::string_view raw)
{
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"')
        return std::string(raw);
    std::string out;
    for (size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 2 < raw.size()) {
            char e = raw[++i];
            switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            default: out += e; break;
            }
        } else {
            out += c;
        }
    }
    return out;
}

// Path from a ---/+++ header: drops timestamps and the a/ b/ prefixes. Empty means /dev/null.
std::string header_path(std::string_view rest)
{
    std::string_view p = rest;
    if (!p.empty() && p.front() != '"') {
        size_t tab = p.find('\t');
        if (tab != std::string_view::npos)
            p = p.substr(0, tab);
    }
    while (!p.empty() && (p.back() == ' ' || p.back() == '\r'))
        p.remove_suffix(1);
    std::string path = unquote_path(p);
    if (path == "/dev/null")
        return {};
    if (starts_with(path, "a/") || starts_with(path, "b/"))
        path = path.substr(2);
    return path;
}

bool parse_number(std::string_view& s, int& out)
{
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc{} || ptr == begin)
        return false;
    s.remove_prefix(static_cast<size_t>(ptr - begin));
    return true;
}

struct Range {
    int start = 0;
    int count = 1;
};

bool parse_range(std::string_view& s, char sign, Range& range)
{
    if (s.empty() || s.front() != sign)
        return false;
    s.remove_prefix(1);
    if (!parse_number(s, range.start))
        return false;
    range.count = 1;
    if (!s.empty() && s.front() == ',') {
        s.remove_prefix(1);
        if (!parse_number(s, range.count))
            return false;
    }
    return true;
}

std::optional<std::pair<Range, Range>> parse_hunk_header(std::string_view line)
{
    if (!starts_with(line, "@@ "))
        return std::nullopt;
    line.remove_prefix(3);
    Range old_range, new_range;
    if (!parse_range(line, '-', old_range))
        return std::nullopt;
    if (line.empty() || line.front() != ' ')
        return std::nullopt;
    line.remove_prefix(1);
    if (!parse_range(line, '+', new_range))
        return std::nullopt;
    if (!starts_with(line, " @@"))
        return std::nullopt;
    if (old_range.count < 0 || new_range.count < 0)
        return std::nullopt;
    return std::make_pair(old_range, new_range);
}

struct FileBuilder {
    std::string old_path;
    std::string new_path;
    bool saw_minus = false;
    bool saw_plus = false;
    bool git_new = false;
    bool git_deleted = false;
    bool git_rename = false;
    std::set<int> touched;
};

} // namespace

std::string_view to_string(FileKind kind)
{
    switch (kind) {
    case FileKind::Source: return "SOURCE";
    case FileKind::Test: return "TEST";
    case FileKind::Doc: return "DOC";
    case FileKind::Other: return "OTHER";
    }
    return "OTHER";
}

std::string_view to_string(ChangeType change)
{
    switch (change) {
    case ChangeType::Added: return "ADDED";
    case ChangeType::Modified: return "MODIFIED";
    case ChangeType::Deleted: return "DELETED";
    }
    return "MODIFIED";
}

const ChangedFile* DiffModel::find(std::string_view path) const
{
    for (const auto& f : files)
        if (f.path == path)
            return &f;
    return nullptr;
}

MalformedDiff::MalformedDiff(std::size_t line_no, const std::string& what)
    : InputError("malformed diff at line " + std::to_string(line_no) + ": " + what)
    , line_no_(line_no)
{
}

DiffModel parse_unified_diff(std::string_view raw)
{
    const auto lines = split_lines(raw);
    DiffModel model;
    std::set<std::string> seen_paths;
    std::optional<FileBuilder> current;
    size_t current_start_line = 0;

    auto finish = [&](size_t line_no) {
        if (!current)
            return;
        FileBuilder& fb = *current;
        if (fb.saw_minus != fb.saw_plus)
            throw MalformedDiff(line_no, "file header without matching ---/+++ pair");
        ChangedFile file;
        if (fb.git_deleted || (fb.saw_plus && fb.new_path.empty())) {
            file.change = ChangeType::Deleted;
            file.path = fb.old_path;
        } else if (fb.git_new || fb.git_rename || (fb.saw_minus && fb.old_path.empty())) {
            file.change = ChangeType::Added;
            file.path = fb.new_path;
        } else {
            file.change = ChangeType::Modified;
            file.path = fb.new_path;
        }
        if (file.path.empty())
            throw MalformedDiff(current_start_line, "file section without a path");
        if (!seen_paths.insert(file.path).second)
            throw MalformedDiff(current_start_line, "duplicate file section for " + file.path);
        file.kind = classify_file(file.path);
        if (file.change != ChangeType::Deleted)
            file.touched_lines.assign(fb.touched.begin(), fb.touched.end());
        model.files.push_back(std::move(file));
        current.reset();
    };

    size_t i = 0;
    while (i < lines.size()) {
        std::string_view line = lines[i];
        const size_t line_no = i + 1;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);

        if (starts_with(line, "diff --git ")) {
            finish(line_no);
            current.emplace();
            current_start_line = line_no;
            // "diff --git a/x b/y": the b/ half is authoritative until ---/+++ or rename headers say otherwise.
            std::string_view rest = line.substr(11);
            size_t split = rest.find(" b/");
            if (split != std::string_view::npos) {
                current->old_path = header_path(rest.substr(0, split));
                current->new_path = header_path(rest.substr(split + 1));
            }
            ++i;
            continue;
        }
        if (current && !current->saw_minus) {
            if (starts_with(line, "new file mode")) {
                current->git_new = true;
                ++i;
                continue;
            }
            if (starts_with(line, "deleted file mode")) {
                current->git_deleted = true;
                ++i;
                continue;
            }
            if (starts_with(line, "rename to ")) {
                current->git_rename = true;
                current->new_path = unquote_path(line.substr(10));
                ++i;
                continue;
            }
            if (starts_with(line, "rename from ")) {
                current->old_path = unquote_path(line.substr(12));
                ++i;
                continue;
            }
        }
        if (starts_with(line, "--- ")) {
            if (i + 1 >= lines.size() || !starts_with(lines[i + 1], "+++ "))
                throw MalformedDiff(line_no, "'---' header not followed by '+++'");
            if (!current || current->saw_minus) {
                finish(line_no);
                current.emplace();
                current_start_line = line_no;
            }
            current->saw_minus = true;
            current->saw_plus = true;
            current->old_path = header_path(line.substr(4));
            std::string_view plus = lines[i + 1];
            if (!plus.empty() && plus.back() == '\r')
                plus.remove_suffix(1);
            current->new_path = header_path(plus.substr(4));
            i += 2;
            continue;
        }
        if (starts_with(line, "@@")) {
            if (!current || !current->saw_plus)
                throw MalformedDiff(line_no, "hunk outside of a file section");
            auto ranges = parse_hunk_header(line);
            if (!ranges)
                throw MalformedDiff(line_no, "bad hunk header");
            auto [old_range, new_range] = *ranges;
            int old_left = old_range.count;
            int new_left = new_range.count;
            int new_line = new_range.count == 0 ? new_range.start + 1 : new_range.start;
            ++i;
            while (old_left > 0 || new_left > 0) {
                if (i >= lines.size())
                    throw MalformedDiff(i, "hunk ends early");
                std::string_view body = lines[i];
                if (!body.empty() && body.back() == '\r')
                    body.remove_suffix(1);
                char tag = body.empty() ? ' ' : body.front();
                switch (tag) {
                case ' ':
                    if (old_left == 0 || new_left == 0)
                        throw MalformedDiff(i + 1, "context line exceeds hunk range");
                    --old_left;
                    --new_left;
                    ++new_line;
                    break;
                case '-':
                    if (old_left == 0)
                        throw MalformedDiff(i + 1, "removed line exceeds hunk range");
                    --old_left;
                    break;
                case '+':
                    if (new_left == 0)
                        throw MalformedDiff(i + 1, "added line exceeds hunk range");
                    current->touched.insert(new_line);
                    --new_left;
                    ++new_line;
                    break;
                case '\\':
                    break;
                default:
                    throw MalformedDiff(i + 1, "unexpected line inside hunk");
                }
                ++i;
            }
            while (i < lines.size() && starts_with(lines[i], "\\"))
                ++i;
            if (i < lines.size()) {
                std::string_view next = lines[i];
                if (!next.empty() && (next.front() == '+' || next.front() == '-') && !starts_with(next, "--- ")
                    && !starts_with(next, "+++ "))
                    throw MalformedDiff(i + 1, "line beyond hunk range");
            }
            continue;
        }
        // Preamble, index lines, mode lines, "Binary files ... differ" and similar.
        ++i;
    }
    finish(lines.size());

    model.total_code_files = static_cast<std::size_t>(std::count_if(model.files.begin(), model.files.end(), [](const ChangedFile& f) {
        return f.kind == FileKind::Source || f.kind == FileKind::Test;
    }));
    return model;
}

FileKind classify_file(std::string_view path)
{
    auto segs = path_segments(path);
    if (segs.empty())
        return FileKind::Other;
    std::string base = to_lower(segs.back());
    std::string stem = base;
    std::string ext;
    if (size_t dot = base.rfind('.'); dot != std::string::npos && dot > 0) {
        stem = base.substr(0, dot);
        ext = base.substr(dot);
    }

    for (auto seg : segs) {
        std::string s = to_lower(seg);
        if (s == "tests" || s == "test")
            return FileKind::Test;
    }
    if (starts_with(base, "test_") || (stem.size() > 5 && stem.ends_with("_test")))
        return FileKind::Test;

    if (ext == ".md" || ext == ".rst" || ext == ".txt")
        return FileKind::Doc;
    for (size_t k = 0; k + 1 < segs.size(); ++k) {
        std::string s = to_lower(segs[k]);
        if (s == "doc" || s == "docs")
            return FileKind::Doc;
    }

    static const std::set<std::string> code_ext = {
        ".py", ".pyx", ".pxd", ".pyi", ".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp", ".hxx",
        ".f", ".f90", ".f95", ".for", ".js", ".mjs", ".ts", ".tsx", ".jsx", ".java", ".kt", ".go",
        ".rs", ".rb", ".jl", ".r", ".m", ".mm", ".swift", ".scala", ".cs", ".php", ".lua", ".sh",
    };
    if (code_ext.contains(ext))
        return FileKind::Source;
    return FileKind::Other;
}

namespace {

bool title_has_keyword(std::string_view title, std::string_view keyword)
{
    if (keyword.empty())
        return false;
    std::string t = to_lower(title);
    std::string k = to_lower(keyword);
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    for (size_t pos = t.find(k); pos != std::string::npos; pos = t.find(k, pos + 1)) {
        bool left_ok = pos == 0 || !is_word(t[pos - 1]);
        size_t end = pos + k.size();
        bool right_ok = end >= t.size() || !is_word(t[end]);
        if (left_ok && right_ok)
            return true;
    }
    return false;
}

} // namespace

bool pr_selection_filter(const PullRequest& pr, const SelectionFilter& filter)
{
    const DiffModel& diff = pr.diff;
    bool has_code_change = std::any_of(diff.files.begin(), diff.files.end(), [](const ChangedFile& f) {
        return (f.kind == FileKind::Source || f.kind == FileKind::Test) && f.change != ChangeType::Deleted
            && !f.touched_lines.empty();
    });
    if (!has_code_change)
        return false;
    if (diff.total_code_files > filter.max_code_files)
        return false;
    for (const auto& kw : filter.exclusion_keywords)
        if (title_has_keyword(pr.title, kw))
            return false;
    for (const auto& f : diff.files)
        for (const auto& prefix : filter.scope_denylist)
            if (!prefix.empty() && starts_with(f.path, prefix))
                return false;
    return true;
}

PullRequest load_pr_metadata(std::string_view json_text)
{
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("PR metadata is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw InputError("PR metadata must be a JSON object");
    PullRequest pr;
    try {
        const auto& id = doc.at("id");
        pr.id = id.is_string() ? id.get<std::string>() : id.dump();
        pr.title = doc.value("title", "");
        pr.body = doc.value("body", "");
        if (doc.contains("comments"))
            for (const auto& c : doc.at("comments"))
                pr.comments.push_back({c.value("author", ""), c.at("text").get<std::string>()});
        if (doc.contains("links"))
            pr.links = doc.at("links").get<std::vector<std::string>>();
        pr.repo_url = doc.value("repo_url", "");
        while (!pr.repo_url.empty() && pr.repo_url.back() == '/')
            pr.repo_url.pop_back();
    } catch (const json::exception& e) {
        throw InputError(std::string("PR metadata schema error: ") + e.what());
    }
    if (pr.id.empty())
        throw InputError("PR metadata: empty id");
    return pr;
}

} // namespace covaug
