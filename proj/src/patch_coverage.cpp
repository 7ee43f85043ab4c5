#include "covaug/patch_coverage.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace covaug {

using nlohmann::json;

const FileCoverage* CoverageReport::find(std::string_view path) const
{
    for (const auto& f : files)
        if (f.path == path)
            return &f;
    return nullptr;
}

std::string_view to_string(DefKind kind)
{
    switch (kind) {
    case DefKind::Function: return "function";
    case DefKind::Method: return "method";
    case DefKind::Class: return "class";
    }
    return "function";
}

std::string module_name_for(std::string_view path)
{
    std::string p(path);
    for (std::string_view ext : {".py", ".pyx", ".pyi"}) {
        if (p.size() > ext.size() && p.ends_with(ext)) {
            p.resize(p.size() - ext.size());
            break;
        }
    }
    if (p.ends_with("/__init__"))
        p.resize(p.size() - 9);
    std::replace(p.begin(), p.end(), '/', '.');
    return p;
}

double PatchCoverage::ratio() const
{
    if (executable.empty())
        return 1.0;
    return static_cast<double>(covered.size()) / static_cast<double>(executable.size());
}

PatchCoverage compute_patch_coverage(const DiffModel& diff, const CoverageReport& cov)
{
    PatchCoverage pc;
    for (const auto& file : diff.files) {
        if (file.kind != FileKind::Source || file.change == ChangeType::Deleted || file.touched_lines.empty())
            continue;
        const FileCoverage* fc = cov.find(file.path);
        if (!fc)
            throw CoverageFileMissing(file.path);
        for (int line : file.touched_lines) {
            if (!fc->executable_lines.contains(line))
                continue;
            LineRef ref{file.path, line};
            pc.executable.insert(ref);
            if (fc->covered_lines.contains(line))
                pc.covered.insert(ref);
            else
                pc.uncovered.insert(ref);
        }
    }
    return pc;
}

std::string annotate_lines(std::string_view source, const std::map<int, std::string_view>& markers)
{
    size_t line_count = 0;
    for (size_t pos = 0; pos < source.size();) {
        ++line_count;
        size_t nl = source.find('\n', pos);
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
    for (const auto& [line, marker] : markers)
        if (line < 1 || static_cast<size_t>(line) > line_count)
            throw LineOutOfRange(line, line_count);

    std::string out;
    out.reserve(source.size() + markers.size() * 24);
    int line_no = 0;
    size_t pos = 0;
    while (pos < source.size()) {
        ++line_no;
        size_t nl = source.find('\n', pos);
        size_t end = nl == std::string_view::npos ? source.size() : nl;
        std::string_view body = source.substr(pos, end - pos);
        std::string_view cr;
        if (!body.empty() && body.back() == '\r') {
            body.remove_suffix(1);
            cr = "\r";
        }
        out += body;
        if (auto it = markers.find(line_no); it != markers.end() && !body.ends_with(it->second))
            out += it->second;
        out += cr;
        if (nl == std::string_view::npos)
            break;
        out += '\n';
        pos = nl + 1;
    }
    return out;
}

std::string annotate_uncovered(std::string_view source, const std::set<int>& uncovered,
                               const std::set<int>& missed_branch_lines)
{
    std::map<int, std::string_view> markers;
    for (int line : missed_branch_lines)
        markers[line] = kBranchMarker;
    for (int line : uncovered)
        markers[line] = kUncoveredMarker;
    return annotate_lines(source, markers);
}

namespace {

std::string slice_lines(std::string_view text, int first, int last)
{
    std::string out;
    int line_no = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        ++line_no;
        size_t nl = text.find('\n', pos);
        size_t end = nl == std::string_view::npos ? text.size() : nl + 1;
        if (line_no >= first && line_no <= last)
            out += text.substr(pos, end - pos);
        if (nl == std::string_view::npos || line_no >= last)
            break;
        pos = nl + 1;
    }
    return out;
}

} // namespace

std::vector<FocalFunction> segment_focal_functions(const PatchCoverage& pc, const StructureIndex& idx,
                                                   const std::map<std::string, std::string>& sources,
                                                   const LinesByFile& missed_branch_lines)
{
    std::vector<FocalFunction> focals;
    for (const auto& [path, lines] : group_by_file(pc.uncovered)) {
        auto defs_it = idx.files.find(path);
        if (defs_it == idx.files.end()) {
            spdlog::warn("no structure index for {}; its uncovered lines yield no focal function", path);
            continue;
        }
        const auto& defs = defs_it->second;
        // Innermost owner = the containing function/method with the latest start (ties: earliest end).
        std::map<const Definition*, std::set<int>> owned;
        for (int line : lines) {
            const Definition* best = nullptr;
            for (const auto& d : defs) {
                if (d.kind == DefKind::Class || line < d.start_line || line > d.end_line)
                    continue;
                if (!best || d.start_line > best->start_line
                    || (d.start_line == best->start_line && d.end_line < best->end_line))
                    best = &d;
            }
            if (best)
                owned[best].insert(line);
        }
        if (owned.empty())
            continue;
        auto src_it = sources.find(path);
        if (src_it == sources.end()) {
            spdlog::warn("source text for {} unavailable; skipping its focal functions", path);
            continue;
        }
        std::set<int> branches;
        if (auto b = missed_branch_lines.find(path); b != missed_branch_lines.end())
            branches = b->second;
        const std::string annotated = annotate_uncovered(src_it->second, lines, branches);
        const std::string module = module_name_for(path);
        for (const auto& [def, uncovered] : owned) {
            FocalFunction f;
            f.qualified_name = module.empty() ? def->name : module + "." + def->name;
            f.file = path;
            f.start_line = def->start_line;
            f.end_line = def->end_line;
            f.uncovered_lines = uncovered;
            f.annotated_source = slice_lines(annotated, def->start_line, def->end_line);
            focals.push_back(std::move(f));
        }
    }
    std::sort(focals.begin(), focals.end(), [](const FocalFunction& a, const FocalFunction& b) {
        return std::tie(a.file, a.start_line, a.end_line) < std::tie(b.file, b.start_line, b.end_line);
    });
    return focals;
}

void require_schema_v1(const json& doc, std::string_view what)
{
    if (!doc.is_object())
        throw InputError(std::string(what) + ": expected a JSON object");
    auto it = doc.find("schema_version");
    if (it == doc.end())
        throw InputError(std::string(what) + ": missing schema_version");
    if (!it->is_number_integer() || it->get<int>() != 1)
        throw InputError(std::string(what) + ": unsupported schema_version " + it->dump());
}

namespace {

std::set<int> positive_lines(const json& arr, std::string_view what)
{
    std::set<int> out;
    for (const auto& v : arr) {
        int n = v.get<int>();
        if (n < 1)
            throw InputError(std::string(what) + ": line numbers must be positive");
        out.insert(n);
    }
    return out;
}

json set_to_json(const std::set<int>& s)
{
    return json(std::vector<int>(s.begin(), s.end()));
}

} // namespace

CoverageReport coverage_from_json(const json& doc)
{
    require_schema_v1(doc, "coverage report");
    CoverageReport cov;
    try {
        for (const auto& f : doc.at("files")) {
            FileCoverage fc;
            fc.path = f.at("path").get<std::string>();
            fc.executable_lines = positive_lines(f.at("executable_lines"), "coverage report");
            fc.covered_lines = positive_lines(f.value("covered_lines", json::array()), "coverage report");
            fc.missed_branch_lines = positive_lines(f.value("missed_branch_lines", json::array()), "coverage report");
            if (!std::includes(fc.executable_lines.begin(), fc.executable_lines.end(), fc.covered_lines.begin(),
                               fc.covered_lines.end()))
                throw InputError("coverage report: covered lines not executable in " + fc.path);
            if (!std::includes(fc.executable_lines.begin(), fc.executable_lines.end(),
                               fc.missed_branch_lines.begin(), fc.missed_branch_lines.end()))
                throw InputError("coverage report: missed-branch lines not executable in " + fc.path);
            if (cov.find(fc.path))
                throw InputError("coverage report: duplicate entry for " + fc.path);
            cov.files.push_back(std::move(fc));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("coverage report schema error: ") + e.what());
    }
    return cov;
}

json to_json(const CoverageReport& cov)
{
    json files = json::array();
    for (const auto& f : cov.files)
        files.push_back({{"path", f.path},
                         {"executable_lines", set_to_json(f.executable_lines)},
                         {"covered_lines", set_to_json(f.covered_lines)},
                         {"missed_branch_lines", set_to_json(f.missed_branch_lines)}});
    return {{"schema_version", 1}, {"files", files}};
}

StructureIndex structure_from_json(const json& doc)
{
    require_schema_v1(doc, "structure index");
    StructureIndex idx;
    try {
        for (const auto& f : doc.at("files")) {
            auto& defs = idx.files[f.at("path").get<std::string>()];
            for (const auto& d : f.at("defs")) {
                Definition def;
                def.name = d.at("name").get<std::string>();
                std::string kind = d.at("kind").get<std::string>();
                if (kind == "function")
                    def.kind = DefKind::Function;
                else if (kind == "method")
                    def.kind = DefKind::Method;
                else if (kind == "class")
                    def.kind = DefKind::Class;
                else
                    throw InputError("structure index: unknown def kind '" + kind + "'");
                def.start_line = d.at("start").get<int>();
                def.end_line = d.at("end").get<int>();
                if (def.start_line < 1 || def.end_line < def.start_line)
                    throw InputError("structure index: bad span for " + def.name);
                defs.push_back(std::move(def));
            }
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("structure index schema error: ") + e.what());
    }
    return idx;
}

json to_json(const StructureIndex& idx)
{
    json files = json::array();
    for (const auto& [path, defs] : idx.files) {
        json arr = json::array();
        for (const auto& d : defs)
            arr.push_back({{"name", d.name}, {"kind", to_string(d.kind)}, {"start", d.start_line}, {"end", d.end_line}});
        files.push_back({{"path", path}, {"defs", arr}});
    }
    return {{"schema_version", 1}, {"files", files}};
}

json lines_to_json(const LineSet& lines)
{
    json obj = json::object();
    for (const auto& [path, nums] : group_by_file(lines))
        obj[path] = set_to_json(nums);
    return obj;
}

LineSet lines_from_json(const json& doc)
{
    LineSet out;
    for (const auto& [path, arr] : doc.items())
        for (const auto& n : arr)
            out.insert({path, n.get<int>()});
    return out;
}

json to_json(const PatchCoverage& pc)
{
    return {{"schema_version", 1},
            {"executable", lines_to_json(pc.executable)},
            {"covered", lines_to_json(pc.covered)},
            {"uncovered", lines_to_json(pc.uncovered)},
            {"covered_count", pc.covered_count()},
            {"executable_count", pc.executable_count()},
            {"ratio", pc.ratio()}};
}

PatchCoverage patch_coverage_from_json(const json& doc)
{
    require_schema_v1(doc, "patch coverage");
    PatchCoverage pc;
    try {
        pc.executable = lines_from_json(doc.at("executable"));
        pc.covered = lines_from_json(doc.at("covered"));
        pc.uncovered = lines_from_json(doc.at("uncovered"));
    } catch (const json::exception& e) {
        throw InputError(std::string("patch coverage schema error: ") + e.what());
    }
    return pc;
}

json to_json(const FocalFunction& f)
{
    return {{"qualified_name", f.qualified_name},
            {"file", f.file},
            {"start", f.start_line},
            {"end", f.end_line},
            {"uncovered_lines", set_to_json(f.uncovered_lines)},
            {"annotated_source", f.annotated_source}};
}

FocalFunction focal_from_json(const json& doc)
{
    FocalFunction f;
    f.qualified_name = doc.at("qualified_name").get<std::string>();
    f.file = doc.at("file").get<std::string>();
    f.start_line = doc.at("start").get<int>();
    f.end_line = doc.at("end").get<int>();
    for (const auto& n : doc.at("uncovered_lines"))
        f.uncovered_lines.insert(n.get<int>());
    f.annotated_source = doc.at("annotated_source").get<std::string>();
    return f;
}

} // namespace covaug
