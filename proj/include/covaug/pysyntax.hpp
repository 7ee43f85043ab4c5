#pragma once

#include "covaug/common.hpp"

#include <set>
#include <string>
#include <string_view>
#include <vector>

// Concrete-syntax view of Python test modules: enough structure to locate imports,
// assignments, definitions and class members by line, and to splice text without
// disturbing anything else.
namespace covaug::py {

class ParseError : public Error {
public:
    ParseError(int line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what)
        , line_(line)
    {
    }
    int line() const { return line_; }

private:
    int line_;
};

enum class StmtKind { Import, FromImport, Assignment, FunctionDef, ClassDef, Other };

struct Statement {
    StmtKind kind = StmtKind::Other;
    /// def/class name; empty otherwise.
    std::string name;
    /// Simple names bound by an assignment.
    std::vector<std::string> targets;
    /// Decorator expressions without the leading '@'.
    std::vector<std::string> decorators;
    /// Text between the parentheses of a def.
    std::string params;
    bool is_async = false;

    // 1-based physical lines, inclusive. first_line includes decorators.
    int first_line = 0;
    int header_line = 0;
    int last_line = 0;
    int indent = 0;

    /// Suite of a compound statement (class members, function body). Empty for one-liners.
    std::vector<Statement> body;
    int body_indent = 0;
};

struct Module {
    /// Physical lines without their '\n'.
    std::vector<std::string> lines;
    /// Same lines with string contents and comments blanked out (column aligned).
    std::vector<std::string> code;
    /// True when the physical line begins inside a multi-line string literal.
    std::vector<bool> starts_in_string;
    std::vector<Statement> statements;
    bool trailing_newline = true;

    const Statement* find_top(std::string_view name) const;
    const Statement* find_class(std::string_view name) const;
    /// Text of lines [first, last] joined with '\n' (no trailing newline).
    std::string text(int first, int last) const;
};

Module parse_module(std::string_view source);

bool parses(std::string_view source);

/// Identifiers occurring in code (outside strings and comments) of lines [first, last].
std::set<std::string> identifiers(const Module& mod, int first, int last);

/// Column width of leading whitespace (tabs advance to the next multiple of 8).
int indent_width(std::string_view line);

bool is_test_name(std::string_view name);
/// pytest fixture or xunit-style setup/teardown hook.
bool is_fixture(const Statement& stmt);

/// Import bindings as (module, name, alias) triples rendered into canonical strings.
std::set<std::string> import_bindings(const Module& mod, const Statement& stmt);

} // namespace covaug::py
