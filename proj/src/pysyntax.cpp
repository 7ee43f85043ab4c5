#include "covaug/pysyntax.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace covaug::py {

namespace {

bool is_ident_start(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string trim(std::string_view s)
{
    size_t b = 0;
    while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    size_t e = s.size();
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

bool starts_with_keyword(std::string_view s, std::string_view kw)
{
    return s.substr(0, kw.size()) == kw && (s.size() == kw.size() || !is_ident_char(s[kw.size()]));
}

std::string read_identifier(std::string_view s, size_t& pos)
{
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
        ++pos;
    size_t start = pos;
    if (pos < s.size() && is_ident_start(s[pos]))
        while (pos < s.size() && is_ident_char(s[pos]))
            ++pos;
    return std::string(s.substr(start, pos - start));
}

const std::set<std::string>& keywords()
{
    static const std::set<std::string> kw = {
        "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif",
        "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda",
        "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
    };
    return kw;
}

struct LogicalLine {
    int first = 0; // 0-based physical index
    int last = 0;
    int indent = 0;
    std::string code; // masked physical lines joined by '\n'
    std::string text; // original physical lines joined by '\n'
};

class Tokenizer {
public:
    explicit Tokenizer(Module& mod)
        : mod_(mod)
    {
    }

    std::vector<LogicalLine> run()
    {
        const int n = static_cast<int>(mod_.lines.size());
        mod_.code = mod_.lines;
        mod_.starts_in_string.assign(mod_.lines.size(), false);
        std::vector<LogicalLine> out;
        int logical_start = -1;
        for (int idx = 0; idx < n; ++idx) {
            mod_.starts_in_string[idx] = in_string_ && triple_;
            if (logical_start < 0)
                logical_start = idx;
            scan_line(idx);
            if (in_string_ && !triple_ && !escaped_newline_)
                throw ParseError(idx + 1, "unterminated string literal");
            escaped_newline_ = false;
            if (in_string_ || !brackets_.empty() || continuation_) {
                continuation_ = false;
                continue;
            }
            out.push_back(make_logical(logical_start, idx));
            logical_start = -1;
        }
        if (in_string_)
            throw ParseError(string_line_ + 1, "unterminated triple-quoted string literal");
        if (!brackets_.empty())
            throw ParseError(brackets_.back().second + 1, std::string("'") + brackets_.back().first + "' was never closed");
        if (logical_start >= 0)
            out.push_back(make_logical(logical_start, n - 1));
        return out;
    }

private:
    void scan_line(int idx)
    {
        const std::string& src = mod_.lines[idx];
        std::string& code = mod_.code[idx];
        size_t col = 0;
        while (col < src.size()) {
            char c = src[col];
            if (in_string_) {
                if (!raw_ && c == '\\') {
                    code[col] = ' ';
                    if (col + 1 < src.size())
                        code[col + 1] = ' ';
                    else
                        escaped_newline_ = true;
                    col += 2;
                    continue;
                }
                if (raw_ && c == '\\' && col + 1 < src.size()) {
                    // A raw string still cannot end on an escaped quote.
                    code[col] = ' ';
                    code[col + 1] = ' ';
                    col += 2;
                    continue;
                }
                if (c == quote_) {
                    if (!triple_) {
                        in_string_ = false;
                        ++col;
                        continue;
                    }
                    if (col + 2 < src.size() && src[col + 1] == quote_ && src[col + 2] == quote_) {
                        in_string_ = false;
                        col += 3;
                        continue;
                    }
                }
                code[col] = ' ';
                ++col;
                continue;
            }
            if (c == '#') {
                std::fill(code.begin() + static_cast<long>(col), code.end(), ' ');
                return;
            }
            if (c == '"' || c == '\'') {
                raw_ = false;
                size_t p = col;
                while (p > 0 && std::isalpha(static_cast<unsigned char>(src[p - 1])) && col - p < 2)
                    --p;
                bool prefix_ok = p == 0 || !is_ident_char(src[p - 1]);
                if (prefix_ok)
                    for (size_t k = p; k < col; ++k)
                        if (src[k] == 'r' || src[k] == 'R')
                            raw_ = true;
                quote_ = c;
                in_string_ = true;
                string_line_ = idx;
                if (col + 2 < src.size() && src[col + 1] == c && src[col + 2] == c) {
                    triple_ = true;
                    col += 3;
                } else {
                    triple_ = false;
                    ++col;
                }
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                brackets_.push_back({c, idx});
            } else if (c == ')' || c == ']' || c == '}') {
                char open = c == ')' ? '(' : c == ']' ? '[' : '{';
                if (brackets_.empty() || brackets_.back().first != open)
                    throw ParseError(idx + 1, std::string("unmatched '") + c + "'");
                brackets_.pop_back();
            } else if (c == '\\') {
                bool rest_blank = std::all_of(src.begin() + static_cast<long>(col) + 1, src.end(),
                                              [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r'; });
                if (!rest_blank)
                    throw ParseError(idx + 1, "unexpected character after line continuation character");
                code[col] = ' ';
                continuation_ = true;
                return;
            } else if (c == '\r') {
                code[col] = ' ';
            }
            ++col;
        }
    }

    LogicalLine make_logical(int first, int last)
    {
        LogicalLine ll;
        ll.first = first;
        ll.last = last;
        ll.indent = indent_width(mod_.lines[first]);
        for (int i = first; i <= last; ++i) {
            if (i > first) {
                ll.code += '\n';
                ll.text += '\n';
            }
            ll.code += mod_.code[i];
            ll.text += mod_.lines[i];
        }
        return ll;
    }

    Module& mod_;
    bool in_string_ = false;
    bool triple_ = false;
    bool raw_ = false;
    bool escaped_newline_ = false;
    bool continuation_ = false;
    char quote_ = '"';
    int string_line_ = 0;
    std::vector<std::pair<char, int>> brackets_;
};

bool opens_block(const LogicalLine& ll)
{
    std::string t = trim(ll.code);
    return !t.empty() && t.back() == ':';
}

bool valid_target(std::string_view seg)
{
    static const std::regex pattern(R"(^[\s\w.,()\[\]*]+$)");
    std::string s(seg);
    if (!std::regex_match(s, pattern))
        return false;
    size_t pos = 0;
    while (pos < s.size()) {
        if (is_ident_start(s[pos])) {
            size_t start = pos;
            while (pos < s.size() && is_ident_char(s[pos]))
                ++pos;
            if (keywords().contains(s.substr(start, pos - start)))
                return false;
        } else {
            ++pos;
        }
    }
    return true;
}

// Simple names bound by an assignment statement; empty when it is not one.
std::vector<std::string> assignment_targets(std::string_view code)
{
    std::vector<size_t> splits;
    int depth = 0;
    for (size_t i = 0; i < code.size(); ++i) {
        char c = code[i];
        if (c == '(' || c == '[' || c == '{')
            ++depth;
        else if (c == ')' || c == ']' || c == '}')
            --depth;
        else if (c == '=' && depth == 0) {
            char next = i + 1 < code.size() ? code[i + 1] : '\0';
            char prev = i > 0 ? code[i - 1] : '\0';
            if (next == '=') {
                ++i;
                continue;
            }
            if (std::string_view("=!<>+-*/%&|^@:").find(prev) != std::string_view::npos && prev != '\0')
                continue;
            splits.push_back(i);
        }
    }
    std::vector<std::string_view> segments;
    size_t start = 0;
    for (size_t s : splits) {
        segments.push_back(code.substr(start, s - start));
        start = s + 1;
    }
    bool annotated_only = false;
    if (segments.empty()) {
        // Bare annotation "name: type".
        size_t colon = code.find(':');
        if (colon == std::string_view::npos || trim(code).back() == ':')
            return {};
        segments.push_back(code);
        annotated_only = true;
    }
    std::vector<std::string> names;
    for (size_t k = 0; k < segments.size(); ++k) {
        std::string_view seg = segments[k];
        if (k == 0) {
            int d = 0;
            for (size_t i = 0; i < seg.size(); ++i) {
                char c = seg[i];
                if (c == '(' || c == '[' || c == '{')
                    ++d;
                else if (c == ')' || c == ']' || c == '}')
                    --d;
                else if (c == ':' && d == 0) {
                    seg = seg.substr(0, i);
                    break;
                }
            }
        } else if (annotated_only) {
            break;
        }
        if (!valid_target(seg))
            break;
        std::string piece;
        auto flush = [&] {
            std::string t = trim(piece);
            if (!t.empty() && is_ident_start(t[0])
                && std::all_of(t.begin(), t.end(), [](char c) { return is_ident_char(c); }))
                names.push_back(t);
            piece.clear();
        };
        bool complex = false;
        for (char c : seg) {
            if (c == ',' || c == '(' || c == ')' || c == '[' || c == ']' || c == '*') {
                if (c == '[')
                    complex = true;
                flush();
            } else if (c == '.') {
                complex = true;
                piece.clear();
            } else {
                piece += c;
            }
        }
        if (!complex)
            flush();
    }
    return names;
}

class SuiteParser {
public:
    SuiteParser(const Module& mod, const std::vector<LogicalLine>& lines)
        : mod_(mod)
        , lines_(lines)
    {
    }

    std::vector<Statement> parse_top()
    {
        if (lines_.empty())
            return {};
        if (lines_[0].indent != 0)
            throw ParseError(lines_[0].first + 1, "unexpected indent");
        size_t i = 0;
        auto stmts = parse_suite(i, 0);
        if (i != lines_.size())
            throw ParseError(lines_[i].first + 1, "unindent does not match any outer indentation level");
        return stmts;
    }

private:
    std::vector<Statement> parse_suite(size_t& i, int indent)
    {
        std::vector<Statement> stmts;
        while (i < lines_.size()) {
            const auto& ll = lines_[i];
            if (ll.indent < indent)
                break;
            if (ll.indent > indent)
                throw ParseError(ll.first + 1, "unexpected indent");
            stmts.push_back(parse_statement(i, indent));
        }
        return stmts;
    }

    Statement parse_statement(size_t& i, int indent)
    {
        Statement st;
        st.indent = indent;
        st.first_line = lines_[i].first + 1;
        while (i < lines_.size() && lines_[i].indent == indent && trim(lines_[i].code).starts_with("@")) {
            std::string deco = trim(lines_[i].text);
            st.decorators.push_back(trim(std::string_view(deco).substr(1)));
            ++i;
        }
        if (i >= lines_.size() || lines_[i].indent != indent) {
            int at = i < lines_.size() ? lines_[i].first + 1 : static_cast<int>(mod_.lines.size());
            throw ParseError(at, "decorator not followed by a definition");
        }
        const LogicalLine& header = lines_[i];
        st.header_line = header.first + 1;
        std::string code = trim(header.code);
        classify(st, code, header);
        if (!st.decorators.empty() && st.kind != StmtKind::FunctionDef && st.kind != StmtKind::ClassDef)
            throw ParseError(st.header_line, "decorator not followed by a definition");

        st.last_line = header.last + 1;
        ++i;
        bool compound = opens_block(header);
        if (compound) {
            parse_block_body(i, indent, st, header);
            if (st.kind == StmtKind::Other) {
                // Trailing clauses of if/try/for/while.
                while (i < lines_.size() && lines_[i].indent == indent) {
                    std::string c = trim(lines_[i].code);
                    if (!(starts_with_keyword(c, "elif") || starts_with_keyword(c, "else")
                          || starts_with_keyword(c, "except") || starts_with_keyword(c, "finally")))
                        break;
                    const LogicalLine& clause = lines_[i];
                    if (!opens_block(clause))
                        throw ParseError(clause.first + 1, "expected ':'");
                    ++i;
                    Statement scratch;
                    parse_block_body(i, indent, scratch, clause);
                    st.last_line = scratch.last_line;
                }
            }
        }
        return st;
    }

    void parse_block_body(size_t& i, int indent, Statement& st, const LogicalLine& header)
    {
        if (i >= lines_.size() || lines_[i].indent <= indent)
            throw ParseError(header.last + 2 > static_cast<int>(mod_.lines.size()) ? header.last + 1 : header.last + 2,
                             "expected an indented block");
        st.body_indent = lines_[i].indent;
        st.body = parse_suite(i, st.body_indent);
        st.last_line = st.body.back().last_line;
        if (i < lines_.size() && lines_[i].indent > indent && lines_[i].indent < st.body_indent)
            throw ParseError(lines_[i].first + 1, "unindent does not match any outer indentation level");
    }

    void classify(Statement& st, const std::string& code, const LogicalLine& header)
    {
        if (starts_with_keyword(code, "import")) {
            st.kind = StmtKind::Import;
            return;
        }
        if (starts_with_keyword(code, "from")) {
            st.kind = code.find(" import ") != std::string::npos || code.find(" import(") != std::string::npos
                ? StmtKind::FromImport
                : StmtKind::Other;
            return;
        }
        size_t pos = 0;
        if (starts_with_keyword(code, "async")) {
            size_t p = 5;
            std::string next = read_identifier(code, p);
            if (next == "def") {
                st.is_async = true;
                pos = p;
                st.kind = StmtKind::FunctionDef;
            }
        } else if (starts_with_keyword(code, "def")) {
            pos = 3;
            st.kind = StmtKind::FunctionDef;
        } else if (starts_with_keyword(code, "class")) {
            pos = 5;
            st.kind = StmtKind::ClassDef;
        }
        if (st.kind == StmtKind::FunctionDef || st.kind == StmtKind::ClassDef) {
            st.name = read_identifier(code, pos);
            if (st.name.empty())
                throw ParseError(header.first + 1, "invalid syntax: missing name");
            if (st.kind == StmtKind::FunctionDef) {
                // Locate the parameter list in the column-aligned masked code, then copy the original text.
                std::string hcode = header.code;
                size_t open = hcode.find('(');
                if (open == std::string::npos)
                    throw ParseError(header.first + 1, "invalid syntax: def without parameters");
                int depth = 0;
                size_t close = std::string::npos;
                for (size_t k = open; k < hcode.size(); ++k) {
                    if (hcode[k] == '(')
                        ++depth;
                    else if (hcode[k] == ')' && --depth == 0) {
                        close = k;
                        break;
                    }
                }
                if (close == std::string::npos)
                    throw ParseError(header.first + 1, "invalid syntax: unclosed parameter list");
                st.params = header.text.substr(open + 1, close - open - 1);
            }
            return;
        }
        std::string first_word;
        {
            size_t p = 0;
            first_word = read_identifier(code, p);
        }
        if (!first_word.empty() && keywords().contains(first_word))
            return;
        auto targets = assignment_targets(code);
        if (!targets.empty()) {
            st.kind = StmtKind::Assignment;
            st.targets = std::move(targets);
        }
    }

    const Module& mod_;
    const std::vector<LogicalLine>& lines_;
};

} // namespace

int indent_width(std::string_view line)
{
    int width = 0;
    for (char c : line) {
        if (c == ' ')
            ++width;
        else if (c == '\t')
            width = (width / 8 + 1) * 8;
        else if (c == '\f')
            width = 0;
        else
            break;
    }
    return width;
}

const Statement* Module::find_top(std::string_view name) const
{
    for (const auto& s : statements)
        if ((s.kind == StmtKind::FunctionDef || s.kind == StmtKind::ClassDef) && s.name == name)
            return &s;
    return nullptr;
}

const Statement* Module::find_class(std::string_view name) const
{
    for (const auto& s : statements)
        if (s.kind == StmtKind::ClassDef && s.name == name)
            return &s;
    return nullptr;
}

std::string Module::text(int first, int last) const
{
    std::string out;
    for (int i = first; i <= last && i <= static_cast<int>(lines.size()); ++i) {
        if (i > first)
            out += '\n';
        out += lines[static_cast<size_t>(i - 1)];
    }
    return out;
}

Module parse_module(std::string_view source)
{
    Module mod;
    mod.lines = split_lines(source);
    mod.trailing_newline = source.empty() || source.back() == '\n';
    Tokenizer tok(mod);
    std::vector<LogicalLine> logical = tok.run();
    std::erase_if(logical, [](const LogicalLine& ll) { return trim(ll.code).empty(); });
    SuiteParser parser(mod, logical);
    mod.statements = parser.parse_top();
    return mod;
}

bool parses(std::string_view source)
{
    try {
        parse_module(source);
        return true;
    } catch (const ParseError&) {
        return false;
    }
}

std::set<std::string> identifiers(const Module& mod, int first, int last)
{
    std::set<std::string> out;
    for (int i = std::max(first, 1); i <= last && i <= static_cast<int>(mod.code.size()); ++i) {
        const std::string& code = mod.code[static_cast<size_t>(i - 1)];
        size_t pos = 0;
        while (pos < code.size()) {
            if (is_ident_start(code[pos]) && (pos == 0 || !is_ident_char(code[pos - 1]))) {
                size_t start = pos;
                while (pos < code.size() && is_ident_char(code[pos]))
                    ++pos;
                out.insert(code.substr(start, pos - start));
            } else {
                ++pos;
            }
        }
    }
    return out;
}

bool is_test_name(std::string_view name)
{
    return name.starts_with("test") || name.starts_with("Test");
}

bool is_fixture(const Statement& stmt)
{
    if (stmt.kind != StmtKind::FunctionDef)
        return false;
    for (const auto& d : stmt.decorators)
        if (d.starts_with("pytest.fixture") || d.starts_with("fixture"))
            return true;
    static const std::set<std::string> hooks = {
        "setup_method", "teardown_method", "setup_class", "teardown_class", "setup_function",
        "teardown_function", "setup_module", "teardown_module", "setUp", "tearDown", "setUpClass",
        "tearDownClass", "setup", "teardown",
    };
    return hooks.contains(stmt.name);
}

std::set<std::string> import_bindings(const Module& mod, const Statement& stmt)
{
    std::string code;
    for (int i = stmt.header_line; i <= stmt.last_line; ++i)
        code += mod.code[static_cast<size_t>(i - 1)] + ' ';
    std::string cleaned;
    for (char c : code)
        cleaned += (c == '(' || c == ')' || c == '\n' || c == '\r' || c == '\t') ? ' ' : c;

    // Tokenize into words and commas.
    std::vector<std::string> toks;
    std::string cur;
    for (char c : cleaned) {
        if (c == ',' || c == ' ' || c == ';') {
            if (!cur.empty())
                toks.push_back(cur);
            cur.clear();
            if (c == ',')
                toks.push_back(",");
        } else {
            cur += c;
        }
    }
    if (!cur.empty())
        toks.push_back(cur);

    std::set<std::string> out;
    auto parse_items = [&](size_t k, const std::string& module) {
        while (k < toks.size()) {
            if (toks[k] == ",") {
                ++k;
                continue;
            }
            std::string name = toks[k++];
            std::string alias;
            if (k + 1 < toks.size() && toks[k] == "as") {
                alias = toks[k + 1];
                k += 2;
            }
            out.insert(module + "|" + name + "|" + alias);
        }
    };
    if (stmt.kind == StmtKind::Import && !toks.empty()) {
        parse_items(1, "");
    } else if (stmt.kind == StmtKind::FromImport && toks.size() >= 3) {
        std::string module = toks[1];
        size_t k = 2;
        while (k < toks.size() && toks[k] != "import")
            module += toks[k++];
        parse_items(k + 1, module);
    }
    return out;
}

} // namespace covaug::py
