#pragma once

#include "covaug/call_trace.hpp"
#include "covaug/common.hpp"
#include "covaug/patch_coverage.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

class WorkspaceBusy : public Error {
public:
    using Error::Error;
};

/// Failure of the execution machinery itself (not of the tests it ran).
class BackendError : public Error {
public:
    using Error::Error;
};

/// Checked-out post-PR tree. Held exclusively by one run at a time.
class Workspace {
public:
    explicit Workspace(std::filesystem::path root, std::string revision = {});

    const std::filesystem::path& root() const { return root_; }
    const std::string& revision() const { return revision_; }
    std::filesystem::path scratch_dir() const { return root_ / ".covaug_scratch"; }

    class Lease {
    public:
        explicit Lease(Workspace& ws);
        ~Lease();
        Lease(const Lease&) = delete;
        Lease& operator=(const Lease&) = delete;

    private:
        Workspace& ws_;
    };

private:
    std::filesystem::path root_;
    std::string revision_;
    std::atomic<bool> busy_{false};
};

/// SHA-256 over every regular file (relative path + bytes) beneath root.
std::string tree_hash(const std::filesystem::path& root);

struct SuiteScope {
    /// Empty means the whole suite.
    std::vector<std::string> files;

    bool all() const { return files.empty(); }
};

struct CollectFlags {
    bool coverage = false;
    bool trace = false;
};

struct ExecutionResult {
    bool passed = false;
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    std::optional<CoverageReport> coverage;
    std::optional<CallTrace> trace;
    double duration_s = 0.0;
    bool timed_out = false;
};

struct BackendOptions {
    std::chrono::seconds timeout{1800};
    /// Path prefixes excluded from coverage (outside the tracking scope).
    std::vector<std::string> scope_denylist;
};

/// Drop files outside the tracking scope; with source_only, keep only SOURCE-classified paths.
CoverageReport restrict_coverage(const CoverageReport& cov, const std::vector<std::string>& denylist, bool source_only);

class ExecutionBackend {
public:
    virtual ~ExecutionBackend() = default;

    virtual ExecutionResult run_suite(Workspace& ws, const SuiteScope& scope, CollectFlags collect) = 0;
    /// Runs one standalone test module with coverage; the workspace is left as it was found.
    virtual ExecutionResult run_candidate(Workspace& ws, std::string_view test_source) = 0;
};

/// Table-driven backend. Script format:
/// {"schema_version":1,
///  "suite":{"passed":bool,"coverage":{...},"trace":{...}},
///  "candidates":[{"when_contains":[str],"passed":bool,"exit_code":int,"stdout":str,"stderr":str,
///                 "covered":{path:[int]},"duration":s,"timeout":bool}],
///  "default_candidate":{...}}
class FakeBackend : public ExecutionBackend {
public:
    FakeBackend(nlohmann::json script, BackendOptions options = {});

    ExecutionResult run_suite(Workspace& ws, const SuiteScope& scope, CollectFlags collect) override;
    ExecutionResult run_candidate(Workspace& ws, std::string_view test_source) override;

    std::size_t suite_runs() const { return suite_runs_; }
    std::size_t candidate_runs() const { return candidate_runs_; }

private:
    nlohmann::json script_;
    BackendOptions options_;
    std::size_t suite_runs_ = 0;
    std::size_t candidate_runs_ = 0;
};

/// Real backend: shells out to an execution adapter.
///   <command> coverage --root R --out FILE --scope all|p1,p2
///   <command> trace    --root R --out FILE --scope all|p1,p2
/// Adapter exit codes: 0 tests passed, 1 tests failed, anything else is an adapter failure.
class ProcessBackend : public ExecutionBackend {
public:
    ProcessBackend(std::vector<std::string> command, BackendOptions options = {});

    ExecutionResult run_suite(Workspace& ws, const SuiteScope& scope, CollectFlags collect) override;
    ExecutionResult run_candidate(Workspace& ws, std::string_view test_source) override;

private:
    ExecutionResult invoke(Workspace& ws, std::string_view mode, const std::string& scope_arg,
                           const std::filesystem::path& out_file);

    std::vector<std::string> command_;
    BackendOptions options_;
};

struct ProcessOutput {
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
    bool timed_out = false;
    double duration_s = 0.0;
};

/// posix_spawn + poll with a wall-clock timeout; the child's process group is killed on timeout.
ProcessOutput run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout);

} // namespace covaug
