#pragma once

#include <nlohmann/json_fwd.hpp>

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace covaug {

/// Dynamic call graph recorded while running tests under a profiler.
struct CallTrace {
    std::vector<std::pair<std::string, std::string>> edges; // (caller, callee)
    std::set<std::string> test_roots;

    bool empty() const { return edges.empty() && test_roots.empty(); }
};

CallTrace trace_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CallTrace& trace);

} // namespace covaug
