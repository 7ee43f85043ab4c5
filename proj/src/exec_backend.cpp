#include "covaug/exec_backend.hpp"

#include "covaug/change_model.hpp"
#include "covaug/pysyntax.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

extern char** environ;

namespace covaug {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- call trace JSON ---------------------------------------------------------

CallTrace trace_from_json(const json& doc)
{
    require_schema_v1(doc, "call trace");
    CallTrace trace;
    try {
        for (const auto& r : doc.value("test_roots", json::array()))
            trace.test_roots.insert(r.get<std::string>());
        for (const auto& e : doc.value("edges", json::array()))
            trace.edges.emplace_back(e.at("caller").get<std::string>(), e.at("callee").get<std::string>());
    } catch (const json::exception& e) {
        throw InputError(std::string("call trace schema error: ") + e.what());
    }
    return trace;
}

json to_json(const CallTrace& trace)
{
    json edges = json::array();
    for (const auto& [caller, callee] : trace.edges)
        edges.push_back({{"caller", caller}, {"callee", callee}});
    return {{"schema_version", 1}, {"test_roots", trace.test_roots}, {"edges", edges}};
}

// ---- workspace -----------------------------------------------------------------

Workspace::Workspace(fs::path root, std::string revision)
    : root_(std::move(root))
    , revision_(std::move(revision))
{
}

Workspace::Lease::Lease(Workspace& ws)
    : ws_(ws)
{
    bool expected = false;
    if (!ws_.busy_.compare_exchange_strong(expected, true))
        throw WorkspaceBusy("workspace " + ws_.root_.string() + " is held by another run");
}

Workspace::Lease::~Lease()
{
    ws_.busy_.store(false);
}

std::string tree_hash(const fs::path& root)
{
    std::vector<std::string> entries;
    if (!fs::exists(root))
        return sha256_hex("");
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        auto rel = fs::relative(e.path(), root).generic_string();
        if (e.is_regular_file())
            entries.push_back("F " + rel + " " + sha256_hex(read_file(e.path().string())));
        else if (e.is_directory())
            entries.push_back("D " + rel);
    }
    std::sort(entries.begin(), entries.end());
    std::string all;
    for (const auto& s : entries)
        all += s + "\n";
    return sha256_hex(all);
}

CoverageReport restrict_coverage(const CoverageReport& cov, const std::vector<std::string>& denylist, bool source_only)
{
    CoverageReport out;
    for (const auto& f : cov.files) {
        bool denied = std::any_of(denylist.begin(), denylist.end(), [&](const std::string& prefix) {
            return !prefix.empty() && f.path.starts_with(prefix);
        });
        if (denied)
            continue;
        if (source_only && classify_file(f.path) != FileKind::Source)
            continue;
        out.files.push_back(f);
    }
    return out;
}

namespace {

// Writes the candidate under the scratch directory and removes everything it created on scope exit.
class ScratchFile {
public:
    ScratchFile(const Workspace& ws, std::string_view source)
    {
        fs::path dir = ws.scratch_dir();
        created_dir_ = !fs::exists(dir);
        fs::create_directories(dir);
        dir_ = dir;
        path_ = dir / ("test_candidate_" + sha256_hex(source).substr(0, 12) + ".py");
        std::ofstream out(path_, std::ios::binary | std::ios::trunc);
        out.write(source.data(), static_cast<std::streamsize>(source.size()));
        if (!out)
            throw BackendError("cannot write scratch test " + path_.string());
    }
    ~ScratchFile()
    {
        std::error_code ec;
        fs::remove(path_, ec);
        if (created_dir_)
            fs::remove_all(dir_, ec);
    }
    ScratchFile(const ScratchFile&) = delete;
    ScratchFile& operator=(const ScratchFile&) = delete;

    const fs::path& path() const { return path_; }
    std::string relative_to(const fs::path& root) const { return fs::relative(path_, root).generic_string(); }

private:
    fs::path dir_;
    fs::path path_;
    bool created_dir_ = false;
};

} // namespace

// ---- fake backend ----------------------------------------------------------------

FakeBackend::FakeBackend(json script, BackendOptions options)
    : script_(std::move(script))
    , options_(std::move(options))
{
    require_schema_v1(script_, "fake backend script");
}

ExecutionResult FakeBackend::run_suite(Workspace& ws, const SuiteScope& scope, CollectFlags collect)
{
    Workspace::Lease lease(ws);
    ++suite_runs_;
    const json suite = script_.value("suite", json::object());
    ExecutionResult r;
    r.duration_s = suite.value("duration", 0.0);
    if (suite.value("timeout", false) || r.duration_s > static_cast<double>(options_.timeout.count())) {
        r.timed_out = true;
        r.exit_code = -1;
        r.stderr_text = "TIMEOUT after " + std::to_string(options_.timeout.count()) + " s";
        return r;
    }
    r.passed = suite.value("passed", true);
    r.exit_code = r.passed ? 0 : 1;
    r.stdout_text = suite.value("stdout", "");
    r.stderr_text = suite.value("stderr", "");
    if (collect.coverage && suite.contains("coverage"))
        r.coverage = restrict_coverage(coverage_from_json(suite.at("coverage")), options_.scope_denylist, false);
    else if (collect.coverage)
        r.coverage = CoverageReport{};
    if (collect.trace) {
        CallTrace full = suite.contains("trace") ? trace_from_json(suite.at("trace")) : CallTrace{};
        if (scope.all()) {
            r.trace = std::move(full);
        } else {
            // Keep only roots defined in the requested files.
            CallTrace t;
            t.edges = full.edges;
            for (const auto& root : full.test_roots)
                for (const auto& file : scope.files)
                    if (root.starts_with(module_name_for(file) + "."))
                        t.test_roots.insert(root);
            r.trace = std::move(t);
        }
    }
    return r;
}

ExecutionResult FakeBackend::run_candidate(Workspace& ws, std::string_view test_source)
{
    Workspace::Lease lease(ws);
    ++candidate_runs_;
    ScratchFile scratch(ws, test_source);
    const std::string rel = scratch.relative_to(ws.root());

    ExecutionResult r;
    r.coverage = CoverageReport{};
    try {
        py::parse_module(test_source);
    } catch (const py::ParseError& e) {
        r.exit_code = 2;
        r.stderr_text = "ERROR collecting " + rel + "\nSyntaxError: " + e.what() + "\n";
        return r;
    }

    static const json no_rules = json::array();
    const json& rules = script_.contains("candidates") ? script_.at("candidates") : no_rules;
    const json* rule = nullptr;
    for (const auto& cand : rules) {
        bool all = true;
        for (const auto& needle : cand.value("when_contains", json::array()))
            if (test_source.find(needle.get<std::string>()) == std::string_view::npos)
                all = false;
        if (all) {
            rule = &cand;
            break;
        }
    }
    static const json fallback = {{"passed", false},
                                  {"exit_code", 1},
                                  {"stderr", "E   AssertionError: unscripted candidate\n"}};
    if (!rule)
        rule = script_.contains("default_candidate") ? &script_.at("default_candidate") : &fallback;

    r.duration_s = rule->value("duration", 0.0);
    if (rule->value("timeout", false) || r.duration_s > static_cast<double>(options_.timeout.count())) {
        r.timed_out = true;
        r.exit_code = -1;
        r.stderr_text = "TIMEOUT after " + std::to_string(options_.timeout.count()) + " s";
        return r;
    }
    r.passed = rule->value("passed", false);
    r.exit_code = rule->value("exit_code", r.passed ? 0 : 1);
    r.passed = r.exit_code == 0;
    r.stdout_text = rule->value("stdout", "");
    r.stderr_text = rule->value("stderr", "");

    // Executable lines come from the suite report where known.
    CoverageReport suite_cov;
    if (auto s = script_.value("suite", json::object()); s.contains("coverage"))
        suite_cov = coverage_from_json(s.at("coverage"));
    CoverageReport cov;
    const json covered = rule->value("covered", json::object());
    for (const auto& [path, lines] : covered.items()) {
        FileCoverage fc;
        fc.path = path;
        for (const auto& n : lines)
            fc.covered_lines.insert(n.get<int>());
        fc.executable_lines = fc.covered_lines;
        if (const FileCoverage* known = suite_cov.find(path))
            fc.executable_lines.insert(known->executable_lines.begin(), known->executable_lines.end());
        cov.files.push_back(std::move(fc));
    }
    r.coverage = restrict_coverage(cov, options_.scope_denylist, true);
    return r;
}

// ---- process backend ----------------------------------------------------------------

ProcessOutput run_process(const std::vector<std::string>& argv, const fs::path& cwd, std::chrono::milliseconds timeout)
{
    if (argv.empty())
        throw BackendError("empty command");
    int out_pipe[2];
    int err_pipe[2];
    if (pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0)
        throw BackendError(std::string("pipe: ") + std::strerror(errno));

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    if (!cwd.empty())
        posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    const auto start = std::chrono::steady_clock::now();
    pid_t pid = 0;
    int rc = posix_spawnp(&pid, args[0], &actions, &attr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    close(out_pipe[1]);
    close(err_pipe[1]);
    if (rc != 0) {
        close(out_pipe[0]);
        close(err_pipe[0]);
        throw BackendError("cannot launch " + argv[0] + ": " + std::strerror(rc));
    }

    ProcessOutput out;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    int open_fds = 2;
    char buf[4096];
    while (open_fds > 0) {
        auto elapsed = std::chrono::steady_clock::now() - start;
        auto left = timeout - std::chrono::duration_cast<std::chrono::milliseconds>(elapsed);
        if (left.count() <= 0) {
            out.timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        int n = poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (n < 0 && errno != EINTR)
            break;
        for (int k = 0; k < 2; ++k) {
            if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR)))
                continue;
            ssize_t got = read(fds[k].fd, buf, sizeof buf);
            if (got > 0) {
                (k == 0 ? out.stdout_text : out.stderr_text).append(buf, static_cast<size_t>(got));
            } else {
                close(fds[k].fd);
                fds[k].fd = -1;
                --open_fds;
            }
        }
    }
    for (auto& f : fds)
        if (f.fd >= 0)
            close(f.fd);
    int status = 0;
    waitpid(pid, &status, 0);
    out.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.timed_out)
        out.exit_code = -1;
    else if (WIFEXITED(status))
        out.exit_code = WEXITSTATUS(status);
    else
        out.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return out;
}

ProcessBackend::ProcessBackend(std::vector<std::string> command, BackendOptions options)
    : command_(std::move(command))
    , options_(std::move(options))
{
    if (command_.empty())
        throw InputError("process backend: empty adapter command");
}

ExecutionResult ProcessBackend::invoke(Workspace& ws, std::string_view mode, const std::string& scope_arg,
                                       const fs::path& out_file)
{
    std::vector<std::string> argv = command_;
    argv.emplace_back(mode);
    argv.insert(argv.end(), {"--root", ws.root().string(), "--out", out_file.string(), "--scope", scope_arg});
    ProcessOutput p = run_process(argv, ws.root(), std::chrono::duration_cast<std::chrono::milliseconds>(options_.timeout));
    ExecutionResult r;
    r.exit_code = p.exit_code;
    r.stdout_text = std::move(p.stdout_text);
    r.stderr_text = std::move(p.stderr_text);
    r.duration_s = p.duration_s;
    if (p.timed_out) {
        r.timed_out = true;
        r.stderr_text += "\nTIMEOUT after " + std::to_string(options_.timeout.count()) + " s";
        return r;
    }
    if (p.exit_code != 0 && p.exit_code != 1)
        throw BackendError("adapter '" + std::string(mode) + "' exited with " + std::to_string(p.exit_code) + ": "
                           + r.stderr_text.substr(0, 2000));
    r.passed = p.exit_code == 0;
    return r;
}

namespace {

std::string scope_argument(const SuiteScope& scope)
{
    if (scope.all())
        return "all";
    std::string s;
    for (const auto& f : scope.files) {
        if (!s.empty())
            s += ',';
        s += f;
    }
    return s;
}

json read_json_artifact(const fs::path& p)
{
    json doc = json::parse(read_file(p.string()), nullptr, false);
    if (doc.is_discarded())
        throw BackendError("adapter artifact is not JSON: " + p.string());
    return doc;
}

class TempDir {
public:
    TempDir()
    {
        std::string tmpl = (fs::temp_directory_path() / "covaug-XXXXXX").string();
        if (!mkdtemp(tmpl.data()))
            throw BackendError("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

} // namespace

ExecutionResult ProcessBackend::run_suite(Workspace& ws, const SuiteScope& scope, CollectFlags collect)
{
    Workspace::Lease lease(ws);
    TempDir tmp;
    const std::string scope_arg = scope_argument(scope);
    ExecutionResult result;
    bool ran = false;
    if (collect.coverage || !collect.trace) {
        result = invoke(ws, "coverage", scope_arg, tmp.path() / "coverage.json");
        ran = true;
        if (result.timed_out)
            return result;
        if (collect.coverage)
            result.coverage = restrict_coverage(coverage_from_json(read_json_artifact(tmp.path() / "coverage.json")),
                                                options_.scope_denylist, false);
    }
    if (collect.trace) {
        ExecutionResult t = invoke(ws, "trace", scope_arg, tmp.path() / "trace.json");
        if (t.timed_out)
            return t;
        if (!ran) {
            auto trace = trace_from_json(read_json_artifact(tmp.path() / "trace.json"));
            result = std::move(t);
            result.trace = std::move(trace);
        } else {
            result.trace = trace_from_json(read_json_artifact(tmp.path() / "trace.json"));
            result.duration_s += t.duration_s;
        }
    }
    return result;
}

ExecutionResult ProcessBackend::run_candidate(Workspace& ws, std::string_view test_source)
{
    Workspace::Lease lease(ws);
    TempDir tmp;
    ScratchFile scratch(ws, test_source);
    ExecutionResult r = invoke(ws, "coverage", scratch.relative_to(ws.root()), tmp.path() / "coverage.json");
    if (r.timed_out)
        return r;
    if (fs::exists(tmp.path() / "coverage.json"))
        r.coverage = restrict_coverage(coverage_from_json(read_json_artifact(tmp.path() / "coverage.json")),
                                       options_.scope_denylist, true);
    else
        r.coverage = CoverageReport{};
    return r;
}

} // namespace covaug
