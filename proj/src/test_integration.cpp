#include "covaug/test_integration.hpp"

#include "covaug/pysyntax.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <map>
#include <regex>

namespace covaug {

using nlohmann::json;
using py::Module;
using py::Statement;
using py::StmtKind;

std::string_view to_string(IntegrationMode m)
{
    return m == IntegrationMode::NewTest ? "NEW_TEST" : "EXTEND_EXISTING";
}

namespace {

const Statement* find_member(const Statement& cls, std::string_view name)
{
    for (const auto& m : cls.body)
        if ((m.kind == StmtKind::FunctionDef || m.kind == StmtKind::ClassDef) && m.name == name)
            return &m;
    return nullptr;
}

const Statement* find_target_test(const Module& mod, std::string_view cls, std::string_view method)
{
    if (cls.empty()) {
        const Statement* st = mod.find_top(method);
        return st && st->kind == StmtKind::FunctionDef ? st : nullptr;
    }
    const Statement* c = mod.find_class(cls);
    if (!c)
        return nullptr;
    const Statement* m = find_member(*c, method);
    return m && m->kind == StmtKind::FunctionDef ? m : nullptr;
}

Module parse_or_fail(std::string_view source, std::string_view which)
{
    try {
        return py::parse_module(source);
    } catch (const py::ParseError& e) {
        throw ParseFailure(std::string(which) + " does not parse: " + e.what());
    }
}

bool is_docstring(const Module& mod, const Statement& st)
{
    if (st.kind != StmtKind::Other)
        return false;
    std::string_view line = mod.lines[static_cast<size_t>(st.header_line - 1)];
    size_t p = line.find_first_not_of(" \t");
    if (p == std::string_view::npos)
        return false;
    while (p < line.size() && std::strchr("rRbBuUfF", line[p]))
        ++p;
    if (p >= line.size() || (line[p] != '"' && line[p] != '\''))
        return false;
    // The whole statement must be the literal: nothing but blanks in the masked code after the string.
    for (int i = st.header_line; i <= st.last_line; ++i)
        for (char c : mod.code[static_cast<size_t>(i - 1)])
            if (!std::isspace(static_cast<unsigned char>(c)) && c != '"' && c != '\'' && !std::strchr("rRbBuUfF", c))
                return false;
    return true;
}

bool is_main_guard(const Module& mod, const Statement& st)
{
    if (st.kind != StmtKind::Other)
        return false;
    static const std::regex guard(R"(^if\s+__name__\s*==)");
    std::string head = mod.lines[static_cast<size_t>(st.header_line - 1)];
    return std::regex_search(head, guard);
}

std::string leading_ws(std::string_view line)
{
    size_t p = line.find_first_not_of(" \t");
    return std::string(line.substr(0, p == std::string_view::npos ? line.size() : p));
}

/// Statement lines moved from `src_indent` columns to the `target` prefix. Lines that begin inside a string are copied.
std::vector<std::string> reindent(const Module& mod, int first, int last, int src_indent, const std::string& target)
{
    std::vector<std::string> out;
    for (int i = first; i <= last; ++i) {
        const std::string& line = mod.lines[static_cast<size_t>(i - 1)];
        if (mod.starts_in_string[static_cast<size_t>(i - 1)]) {
            out.push_back(line);
            continue;
        }
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            out.emplace_back();
            continue;
        }
        size_t p = 0;
        int width = 0;
        while (p < line.size() && width < src_indent && (line[p] == ' ' || line[p] == '\t')) {
            width = line[p] == '\t' ? (width / 8 + 1) * 8 : width + 1;
            ++p;
        }
        out.push_back(target + line.substr(p));
    }
    return out;
}

std::string join(const std::vector<std::string>& lines)
{
    std::string s;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i)
            s += '\n';
        s += lines[i];
    }
    return s;
}

/// Adds or removes the leading `self` parameter on the def header of a rendered block.
void adjust_self(std::vector<std::string>& lines, const Statement& def, int header_offset, bool want_self)
{
    std::string& header = lines[static_cast<size_t>(header_offset)];
    std::string key = "def " + def.name;
    size_t at = header.find(key);
    if (at == std::string::npos)
        return;
    size_t open = header.find('(', at + key.size());
    if (open == std::string::npos)
        return;
    size_t p = header.find_first_not_of(" \t", open + 1);
    bool has_self = p != std::string::npos && header.compare(p, 4, "self") == 0
        && (p + 4 >= header.size() || !(std::isalnum(static_cast<unsigned char>(header[p + 4])) || header[p + 4] == '_'));
    if (want_self && !has_self) {
        bool empty = p != std::string::npos && header[p] == ')';
        header.insert(open + 1, empty ? "self" : "self, ");
    } else if (!want_self && has_self) {
        size_t end = p + 4;
        size_t q = header.find_first_not_of(" \t", end);
        if (q != std::string::npos && header[q] == ',') {
            end = header.find_first_not_of(" \t", q + 1);
            if (end == std::string::npos)
                end = header.size();
        }
        header.erase(open + 1, end - (open + 1));
    }
}

struct Insertion {
    int after_line;  // insert after this 1-based line of the existing file (0 = top)
    int order;       // tie-break for insertions at the same anchor
    std::vector<std::string> lines;
};

std::string render_import(const Statement& st, const std::vector<std::string>& bindings)
{
    // bindings are "module|name|alias"
    auto item = [](const std::string& b) {
        size_t a = b.find('|');
        size_t c = b.find('|', a + 1);
        std::string name = b.substr(a + 1, c - a - 1);
        std::string alias = b.substr(c + 1);
        return alias.empty() ? name : name + " as " + alias;
    };
    std::string s;
    if (st.kind == StmtKind::FromImport) {
        s = "from " + bindings.front().substr(0, bindings.front().find('|')) + " import ";
    } else {
        s = "import ";
    }
    for (size_t i = 0; i < bindings.size(); ++i)
        s += (i ? ", " : "") + item(bindings[i]);
    return s;
}

std::set<std::string> top_level_names(const Module& mod)
{
    std::set<std::string> names;
    for (const auto& st : mod.statements) {
        if (st.kind == StmtKind::FunctionDef || st.kind == StmtKind::ClassDef)
            names.insert(st.name);
        for (const auto& t : st.targets)
            names.insert(t);
    }
    return names;
}

std::set<std::string> member_names(const Statement& cls)
{
    std::set<std::string> names;
    for (const auto& m : cls.body) {
        if (m.kind == StmtKind::FunctionDef || m.kind == StmtKind::ClassDef)
            names.insert(m.name);
        for (const auto& t : m.targets)
            names.insert(t);
    }
    return names;
}

struct CandidateDef {
    const Statement* stmt;
    bool in_class;
};

} // namespace

IntegrationPlan parse_integration_answer(std::string_view response, const TestContext& ctx,
                                         std::string_view existing_file)
{
    IntegrationPlan plan;
    plan.file = ctx.file;
    plan.class_name = ctx.class_name;
    Module mod;
    try {
        mod = py::parse_module(existing_file);
    } catch (const py::ParseError&) {
        return plan;
    }
    if (!plan.class_name.empty() && !mod.find_class(plan.class_name))
        plan.class_name.clear();

    static const std::regex extend(R"(\bEXTEND(?:_EXISTING)?\b[\s:=(`'"]*([A-Za-z_][A-Za-z_0-9]*)?)");
    static const std::regex new_test(R"(\bNEW_TEST\b)");
    std::string text(response);
    std::smatch m;
    bool says_new = std::regex_search(text, new_test);
    if (!std::regex_search(text, m, extend) || (says_new && text.find("NEW_TEST") < static_cast<size_t>(m.position(0))))
        return plan;
    std::string method = m[1].matched ? m[1].str() : ctx.method_name;
    if (method == "EXISTING" || method.empty())
        method = ctx.method_name;
    if (!find_target_test(mod, plan.class_name, method))
        return plan;
    plan.mode = IntegrationMode::ExtendExisting;
    plan.method_name = method;
    return plan;
}

IntegrationPlan decide_integration_mode(Gateway& llm, const CandidateTest& candidate, const TestContext& ctx,
                                        std::string_view existing_file)
{
    std::string where = ctx.class_name.empty() ? "at module level" : "in class " + ctx.class_name;
    Completion r = llm.complete(
        PromptRole::IntegrationMode,
        {{"system", "You maintain a Python test suite and decide how new tests are integrated."},
         {"user", "Existing test file " + ctx.file + ":\n\n```python\n" + std::string(existing_file)
                      + "```\n\nNew test written for " + candidate.focal + ":\n\n```python\n" + candidate.source
                      + "```\n\nThe related existing test is " + ctx.method_name + " " + where
                      + ". Should the new test be added as a new test, or should its statements extend the body "
                        "of an existing test? Answer NEW_TEST, or EXTEND <test name>."}});
    return parse_integration_answer(r.text, ctx, existing_file);
}

MergeResult merge_test(const IntegrationPlan& plan, std::string_view candidate_source, std::string_view existing_file)
{
    const Module cand = parse_or_fail(candidate_source, "candidate test");
    const Module base = parse_or_fail(existing_file, "existing test file");
    MergeResult result;

    const Statement* target_class = plan.class_name.empty() ? nullptr : base.find_class(plan.class_name);
    if (!plan.class_name.empty() && !target_class)
        throw ParseFailure("class " + plan.class_name + " not found in " + plan.file);
    const Statement* target_method = nullptr;
    if (plan.mode == IntegrationMode::ExtendExisting) {
        target_method = find_target_test(base, plan.class_name, plan.method_name);
        if (!target_method)
            throw ParseFailure("test " + plan.method_name + " not found in " + plan.file);
    }

    // Anchors in the existing file.
    int first_def_line = static_cast<int>(base.lines.size()) + 1;
    for (const auto& st : base.statements)
        if (st.kind == StmtKind::FunctionDef || st.kind == StmtKind::ClassDef || is_main_guard(base, st)) {
            first_def_line = st.first_line;
            break;
        }
    int import_anchor = 0;
    int assign_anchor = 0;
    if (!base.statements.empty() && is_docstring(base, base.statements.front()))
        import_anchor = base.statements.front().last_line;
    for (const auto& st : base.statements) {
        if (st.first_line >= first_def_line)
            break;
        if (st.kind == StmtKind::Import || st.kind == StmtKind::FromImport)
            import_anchor = st.last_line;
        if (st.kind == StmtKind::Assignment)
            assign_anchor = st.last_line;
    }
    assign_anchor = std::max(assign_anchor, import_anchor);

    std::set<std::string> known_bindings;
    for (const auto& st : base.statements)
        if (st.kind == StmtKind::Import || st.kind == StmtKind::FromImport) {
            auto b = py::import_bindings(base, st);
            known_bindings.insert(b.begin(), b.end());
        }
    std::set<std::string> top_names = top_level_names(base);
    std::set<std::string> class_names = target_class ? member_names(*target_class) : std::set<std::string>{};

    std::vector<std::string> new_imports;
    std::vector<std::vector<std::string>> new_assigns;
    std::vector<std::vector<std::string>> new_helpers;  // module level
    std::vector<std::vector<std::string>> new_members;  // inside target class
    std::vector<CandidateDef> tests;

    const std::string member_indent = target_class ? leading_ws(base.lines[static_cast<size_t>(target_class->body.front().header_line - 1)]) : "";

    auto take_helper = [&](const Statement& st, bool in_class) {
        if (in_class && target_class) {
            std::string name = st.kind == StmtKind::Assignment ? (st.targets.empty() ? "" : st.targets.front()) : st.name;
            bool present = st.kind == StmtKind::Assignment
                ? std::all_of(st.targets.begin(), st.targets.end(), [&](const auto& t) { return class_names.contains(t); })
                : class_names.contains(st.name);
            if (present) {
                result.skipped_defs.push_back(plan.class_name + "." + name);
                return;
            }
            auto lines = reindent(cand, st.first_line, st.last_line, st.indent, member_indent);
            if (st.kind == StmtKind::FunctionDef)
                adjust_self(lines, st, st.header_line - st.first_line, true);
            new_members.push_back(std::move(lines));
            result.added_defs.push_back(plan.class_name + "." + name);
            if (st.kind == StmtKind::Assignment)
                class_names.insert(st.targets.begin(), st.targets.end());
            else
                class_names.insert(st.name);
            return;
        }
        // Module level (also class members when there is no target class).
        std::string name = st.kind == StmtKind::Assignment ? (st.targets.empty() ? "" : st.targets.front()) : st.name;
        bool present = st.kind == StmtKind::Assignment
            ? std::all_of(st.targets.begin(), st.targets.end(), [&](const auto& t) { return top_names.contains(t); })
            : top_names.contains(st.name);
        if (present) {
            result.skipped_defs.push_back(name);
            return;
        }
        auto lines = reindent(cand, st.first_line, st.last_line, st.indent, "");
        if (st.kind == StmtKind::FunctionDef && in_class)
            adjust_self(lines, st, st.header_line - st.first_line, false);
        if (st.kind == StmtKind::Assignment) {
            new_assigns.push_back(std::move(lines));
            top_names.insert(st.targets.begin(), st.targets.end());
        } else {
            new_helpers.push_back(std::move(lines));
            top_names.insert(st.name);
        }
        result.added_defs.push_back(name);
    };

    for (const auto& st : cand.statements) {
        switch (st.kind) {
        case StmtKind::Import:
        case StmtKind::FromImport: {
            auto bindings = py::import_bindings(cand, st);
            std::vector<std::string> fresh;
            for (const auto& b : bindings)
                if (!known_bindings.contains(b))
                    fresh.push_back(b);
            std::string text = cand.text(st.first_line, st.last_line);
            if (fresh.empty()) {
                result.skipped_imports.push_back(text);
                break;
            }
            if (fresh.size() < bindings.size()) {
                text = render_import(st, fresh);
                // Keep source order of the remaining names.
                std::string full = cand.text(st.first_line, st.last_line);
                result.skipped_imports.push_back(full);
            }
            known_bindings.insert(fresh.begin(), fresh.end());
            new_imports.push_back(text);
            result.added_imports.push_back(text);
            break;
        }
        case StmtKind::Assignment:
            take_helper(st, false);
            break;
        case StmtKind::FunctionDef:
            if (py::is_test_name(st.name) && !py::is_fixture(st))
                tests.push_back({&st, false});
            else
                take_helper(st, false);
            break;
        case StmtKind::ClassDef: {
            bool has_tests = std::any_of(st.body.begin(), st.body.end(), [](const Statement& m) {
                return m.kind == StmtKind::FunctionDef && py::is_test_name(m.name) && !py::is_fixture(m);
            });
            if (!has_tests && !py::is_test_name(st.name)) {
                take_helper(st, false);
                break;
            }
            for (const auto& m : st.body) {
                if (is_docstring(cand, m))
                    continue;
                if (m.kind == StmtKind::FunctionDef && py::is_test_name(m.name) && !py::is_fixture(m))
                    tests.push_back({&m, true});
                else if (m.kind == StmtKind::FunctionDef || m.kind == StmtKind::Assignment)
                    take_helper(m, true);
                else
                    throw UnmergeableTopLevel("unsupported statement in candidate class " + st.name + " at line "
                                              + std::to_string(m.header_line));
            }
            break;
        }
        case StmtKind::Other:
            if (is_docstring(cand, st) || is_main_guard(cand, st))
                break;
            throw UnmergeableTopLevel("unsupported top-level statement in candidate at line "
                                      + std::to_string(st.header_line) + ": "
                                      + cand.lines[static_cast<size_t>(st.header_line - 1)]);
        }
    }
    if (tests.empty())
        throw ParseFailure("candidate contains no test function");

    std::vector<Insertion> inserts;
    auto blank_sep = [](std::vector<std::string> block, int blanks) {
        block.insert(block.begin(), static_cast<size_t>(blanks), std::string());
        return block;
    };

    if (!new_imports.empty())
        inserts.push_back({import_anchor, 0, new_imports});
    if (!new_assigns.empty()) {
        std::vector<std::string> block;
        for (auto& a : new_assigns)
            block.insert(block.end(), a.begin(), a.end());
        bool after_assignment = false;
        for (const auto& st : base.statements)
            if (st.last_line == assign_anchor && st.kind == StmtKind::Assignment)
                after_assignment = true;
        inserts.push_back({assign_anchor, 1, blank_sep(block, assign_anchor > 0 && !after_assignment ? 1 : 0)});
    }

    const int eof = static_cast<int>(base.lines.size());
    std::vector<std::string> tail_block;  // module-level tail (helpers when no class, tests when no class)
    if (!new_helpers.empty()) {
        std::vector<std::string> block;
        for (auto& h : new_helpers) {
            auto b = blank_sep(h, 2);
            block.insert(block.end(), b.begin(), b.end());
        }
        if (target_class) {
            block.erase(block.begin(), block.begin() + 2);
            block.insert(block.end(), 2, std::string());
            inserts.push_back({target_class->first_line - 1, 2, block});
        } else {
            tail_block.insert(tail_block.end(), block.begin(), block.end());
        }
    }

    // Tests.
    std::vector<std::string> member_block;
    for (auto& m : new_members) {
        auto b = blank_sep(m, 1);
        member_block.insert(member_block.end(), b.begin(), b.end());
    }
    size_t first_new = 0;
    if (plan.mode == IntegrationMode::ExtendExisting) {
        const Statement& src = *tests.front().stmt;
        first_new = 1;
        if (src.body.empty())
            throw ParseFailure("candidate test " + src.name + " has an inline body");
        const std::string body_indent = leading_ws(base.lines[static_cast<size_t>(target_method->body.front().header_line - 1)]);
        auto lines = reindent(cand, src.body.front().first_line, src.body.back().last_line, src.body_indent, body_indent);
        // Already appended?
        int n = static_cast<int>(lines.size());
        bool present = target_method->last_line - n + 1 > target_method->header_line
            && base.text(target_method->last_line - n + 1, target_method->last_line) == join(lines);
        if (present) {
            result.skipped_defs.push_back(plan.method_name + " (extension already present)");
        } else {
            inserts.push_back({target_method->last_line, 4, lines});
            result.added_defs.push_back(plan.method_name + " (extended)");
            for (const auto& d : target_method->decorators)
                if (d.find("parametrize") != std::string::npos) {
                    result.notices.push_back("extended test " + plan.method_name
                                             + " is parametrized; the appended statements run for every parameter set");
                    break;
                }
        }
    }
    for (size_t i = first_new; i < tests.size(); ++i) {
        const Statement& t = *tests[i].stmt;
        std::vector<std::string> lines = reindent(cand, t.first_line, t.last_line, t.indent, member_indent);
        adjust_self(lines, t, t.header_line - t.first_line, target_class != nullptr);
        const Statement* existing = target_class ? find_member(*target_class, t.name) : base.find_top(t.name);
        if (existing) {
            if (base.text(existing->first_line, existing->last_line) == join(lines)) {
                result.skipped_defs.push_back(t.name + " (already present)");
                continue;
            }
            throw NameCollision("test " + t.name + " already exists in " + plan.file
                                + (target_class ? " class " + plan.class_name : std::string()));
        }
        bool dup = target_class ? class_names.contains(t.name) : top_names.contains(t.name);
        if (dup)
            throw NameCollision("name " + t.name + " already bound in " + plan.file);
        (target_class ? class_names : top_names).insert(t.name);
        result.added_defs.push_back(target_class ? plan.class_name + "." + t.name : t.name);
        if (target_class) {
            auto b = blank_sep(lines, 1);
            member_block.insert(member_block.end(), b.begin(), b.end());
        } else {
            auto b = blank_sep(lines, 2);
            tail_block.insert(tail_block.end(), b.begin(), b.end());
        }
    }
    if (!member_block.empty())
        inserts.push_back({target_class->last_line, 3, member_block});
    if (!tail_block.empty()) {
        // Drop leading blanks that would exceed two after the file's own trailing blank lines.
        int trailing_blank = 0;
        for (int i = eof; i >= 1 && base.lines[static_cast<size_t>(i - 1)].find_first_not_of(" \t\r") == std::string::npos; --i)
            ++trailing_blank;
        if (eof == 0)
            trailing_blank = 2;
        int drop = std::min(trailing_blank, 2);
        tail_block.erase(tail_block.begin(), tail_block.begin() + drop);
        inserts.push_back({eof, 5, tail_block});
    }

    // Splice bottom-up so earlier anchors stay valid.
    std::stable_sort(inserts.begin(), inserts.end(), [](const Insertion& a, const Insertion& b) {
        if (a.after_line != b.after_line)
            return a.after_line > b.after_line;
        return a.order > b.order;
    });
    std::vector<std::string> out = base.lines;
    for (const auto& ins : inserts)
        out.insert(out.begin() + ins.after_line, ins.lines.begin(), ins.lines.end());

    bool appended_at_end = std::any_of(inserts.begin(), inserts.end(), [&](const Insertion& i) { return i.after_line == eof; });
    result.merged_file = join(out);
    if (!out.empty() && (base.trailing_newline || appended_at_end))
        result.merged_file += '\n';
    if (inserts.empty())
        result.merged_file = std::string(existing_file);

    try {
        py::parse_module(result.merged_file);
    } catch (const py::ParseError& e) {
        throw ParseFailure(std::string("merged file does not parse: ") + e.what());
    }
    return result;
}

// ---- unified diff -------------------------------------------------------------------------

std::string unified_diff(std::string_view before, std::string_view after, std::string_view path)
{
    if (before == after)
        return {};
    const std::vector<std::string> a = split_lines(before);
    const std::vector<std::string> b = split_lines(after);
    const bool a_nl = before.empty() || before.back() == '\n';
    const bool b_nl = after.empty() || after.back() == '\n';

    // Edit script: common prefix/suffix, LCS over the middle.
    size_t pre = 0;
    while (pre < a.size() && pre < b.size() && a[pre] == b[pre])
        ++pre;
    size_t suf = 0;
    while (suf < a.size() - pre && suf < b.size() - pre && a[a.size() - 1 - suf] == b[b.size() - 1 - suf])
        ++suf;
    // Keep the last line in the edited region when only its trailing newline changed.
    if (a_nl != b_nl && suf > 0)
        suf = 0;
    if (a_nl != b_nl && pre == a.size() && pre == b.size() && pre > 0)
        --pre;

    const size_t n = a.size() - pre - suf;
    const size_t m = b.size() - pre - suf;
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = n; i-- > 0;)
        for (size_t j = m; j-- > 0;)
            lcs[i][j] = a[pre + i] == b[pre + j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);

    struct Op {
        char kind;  // ' ', '-', '+'
        size_t ai, bi;
    };
    std::vector<Op> ops;
    for (size_t k = 0; k < pre; ++k)
        ops.push_back({' ', k, k});
    size_t i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && a[pre + i] == b[pre + j]) {
            ops.push_back({' ', pre + i, pre + j});
            ++i;
            ++j;
        } else if (j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j])) {
            ops.push_back({'+', pre + i, pre + j});
            ++j;
        } else {
            ops.push_back({'-', pre + i, pre + j});
            ++i;
        }
    }
    for (size_t k = 0; k < suf; ++k)
        ops.push_back({' ', a.size() - suf + k, b.size() - suf + k});

    const size_t ctx = 3;
    std::string out = "--- a/" + std::string(path) + "\n+++ b/" + std::string(path) + "\n";
    size_t k = 0;
    while (k < ops.size()) {
        while (k < ops.size() && ops[k].kind == ' ')
            ++k;
        if (k == ops.size())
            break;
        size_t start = k >= ctx ? k - ctx : 0;
        size_t end = k;
        // Extend while the next change is within 2*ctx context lines.
        for (;;) {
            while (end < ops.size() && ops[end].kind != ' ')
                ++end;
            size_t run = end;
            while (run < ops.size() && ops[run].kind == ' ')
                ++run;
            if (run < ops.size() && run - end <= 2 * ctx) {
                end = run;
                continue;
            }
            end = std::min(ops.size(), end + ctx);
            break;
        }
        size_t a_start = ops[start].ai, b_start = ops[start].bi;
        size_t a_len = 0, b_len = 0;
        for (size_t q = start; q < end; ++q) {
            if (ops[q].kind != '+')
                ++a_len;
            if (ops[q].kind != '-')
                ++b_len;
        }
        out += "@@ -" + std::to_string(a_len ? a_start + 1 : a_start) + (a_len == 1 ? "" : "," + std::to_string(a_len))
               + " +" + std::to_string(b_len ? b_start + 1 : b_start) + (b_len == 1 ? "" : "," + std::to_string(b_len))
               + " @@\n";
        for (size_t q = start; q < end; ++q) {
            const Op& op = ops[q];
            const std::string& text = op.kind == '+' ? b[op.bi] : a[op.ai];
            out += op.kind;
            out += text;
            out += '\n';
            bool last_a = op.kind != '+' && op.ai + 1 == a.size() && !a_nl;
            bool last_b = op.kind != '-' && op.bi + 1 == b.size() && !b_nl;
            if (last_a || last_b)
                out += "\\ No newline at end of file\n";
        }
        k = end;
    }
    return out;
}

// ---- JSON ---------------------------------------------------------------------------------

json to_json(const IntegrationPlan& plan)
{
    return {{"mode", to_string(plan.mode)},
            {"file", plan.file},
            {"class_name", plan.class_name},
            {"method_name", plan.method_name}};
}

IntegrationPlan integration_plan_from_json(const json& doc)
{
    IntegrationPlan p;
    p.mode = doc.at("mode").get<std::string>() == "EXTEND_EXISTING" ? IntegrationMode::ExtendExisting
                                                                    : IntegrationMode::NewTest;
    p.file = doc.at("file").get<std::string>();
    p.class_name = doc.value("class_name", "");
    p.method_name = doc.value("method_name", "");
    return p;
}

json to_json(const MergeResult& m)
{
    return {{"merged_file", m.merged_file},
            {"added_imports", m.added_imports},
            {"skipped_imports", m.skipped_imports},
            {"added_defs", m.added_defs},
            {"skipped_defs", m.skipped_defs},
            {"notices", m.notices}};
}

MergeResult merge_result_from_json(const json& doc)
{
    MergeResult m;
    m.merged_file = doc.at("merged_file").get<std::string>();
    m.added_imports = doc.value("added_imports", std::vector<std::string>{});
    m.skipped_imports = doc.value("skipped_imports", std::vector<std::string>{});
    m.added_defs = doc.value("added_defs", std::vector<std::string>{});
    m.skipped_defs = doc.value("skipped_defs", std::vector<std::string>{});
    m.notices = doc.value("notices", std::vector<std::string>{});
    return m;
}

} // namespace covaug
