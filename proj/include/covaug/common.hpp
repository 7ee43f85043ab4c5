#pragma once

#include <compare>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

/// A (file, line) pair addressing one post-image source line.
struct LineRef {
    std::string path;
    int line = 0;

    auto operator<=>(const LineRef&) const = default;
};

using LineSet = std::set<LineRef>;

/// Lines grouped per file; handy for JSON and for per-file annotation.
using LinesByFile = std::map<std::string, std::set<int>>;

LinesByFile group_by_file(const LineSet& lines);
LineSet flatten(const LinesByFile& lines);

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input artifacts that violate their schema or are otherwise unusable.
class InputError : public Error {
public:
    using Error::Error;
};

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

/// Split on '\n'. A trailing newline does not produce an empty final element.
std::vector<std::string> split_lines(std::string_view text);

std::string sha256_hex(std::string_view data);

} // namespace covaug
