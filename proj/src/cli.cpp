#include "covaug/pipeline.hpp"

#include "covaug/test_integration.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <sstream>

namespace covaug {

namespace {

struct CliOptions {
    PipelineInputs in;
    std::string config;
    std::string mode;
    std::string out;
    std::string workspace;
    std::string cassette;
    std::string backend_script;
    std::string backend_command;
    std::string cache;
    bool strict = false;
    std::string log_level = "info";
};

void add_common(CLI::App* cmd, CliOptions& o)
{
    cmd->add_option("--diff", o.in.diff, "Unified diff of the pull request");
    cmd->add_option("--pr-meta", o.in.pr_meta, "PR metadata JSON");
    cmd->add_option("--coverage", o.in.coverage, "Coverage report JSON of the post-PR suite run");
    cmd->add_option("--structure", o.in.structure, "Structure index JSON of the changed sources");
    cmd->add_option("--trace", o.in.trace, "Call-trace JSON (instead of a profiler run)");
    cmd->add_option("--test-index", o.in.test_index, "Test-suite index JSON (default: scan the workspace)");
    cmd->add_option("--page", o.in.page, "Captured PR page in markdown (default: rendered from the metadata)");
    cmd->add_option("--fetch-fixtures", o.in.fetch_fixtures, "URL-to-file manifest used instead of the network");
    cmd->add_option("--config", o.config, "INI configuration file");
    cmd->add_option("--mode", o.mode, "LLM mode: live, record or replay")->check(CLI::IsMember({"live", "record", "replay"}));
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--workspace", o.workspace, "Checked-out post-PR tree");
    cmd->add_option("--cassette", o.cassette, "LLM cassette file");
    cmd->add_option("--backend-script", o.backend_script, "Fake backend script (selects the fake backend)");
    cmd->add_option("--backend-command", o.backend_command, "Execution adapter command (selects the process backend)");
    cmd->add_option("--cache", o.cache, "Test-context cache directory");
    cmd->add_flag("--strict", o.strict, "Replay only records whose request hash matches");
    cmd->add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");
}

std::vector<std::string> split_command(const std::string& s)
{
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string w;
    while (is >> w)
        out.push_back(w);
    return out;
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const ParseFailure*>(&e))
        return 2;
    if (dynamic_cast<const BackendError*>(&e) || dynamic_cast<const WorkspaceBusy*>(&e))
        return 3;
    if (dynamic_cast<const ProviderError*>(&e) || dynamic_cast<const ReplayMiss*>(&e)
        || dynamic_cast<const TransportError*>(&e))
        return 4;
    return 1;
}

int run(const std::string& stage, const CliOptions& o, const CliHooks& hooks)
{
    EnvLookup env = hooks.env ? hooks.env : system_env();
    Config cfg = load_config(o.config.empty() ? std::nullopt : std::optional<std::string>(o.config), env);
    if (!o.mode.empty())
        cfg.mode = run_mode_from_string(o.mode);
    if (!o.out.empty())
        cfg.out_dir = o.out;
    if (!o.workspace.empty())
        cfg.workspace = o.workspace;
    if (!o.cassette.empty())
        cfg.cassette = o.cassette;
    if (!o.cache.empty())
        cfg.cache = o.cache;
    if (o.strict)
        cfg.strict_replay = true;
    if (!o.backend_script.empty()) {
        cfg.backend_kind = "fake";
        cfg.backend_script = o.backend_script;
    }
    if (!o.backend_command.empty()) {
        cfg.backend_kind = "process";
        cfg.backend_command = o.backend_command;
    }
    validate(cfg);

    SystemClock system_clock;
    FixedClock fixed_clock;
    FailClosedTransport fail_closed;
    std::unique_ptr<HttpTransport> network;
    HttpTransport* transport = hooks.transport;
    if (!transport) {
        if (cfg.mode == RunMode::Replay) {
            transport = &fail_closed;
        } else {
            network = make_network_transport();
            transport = network.get();
        }
    }

    Services s;
    s.config = cfg;
    s.clock = cfg.mode == RunMode::Replay ? static_cast<Clock*>(&fixed_clock) : &system_clock;

    std::unique_ptr<Provider> base;
    std::unique_ptr<Provider> recorder;
    Cassette sink;
    if (cfg.mode == RunMode::Replay) {
        if (cfg.cassette.empty())
            throw InputError("replay mode needs a cassette (--cassette or paths.cassette)");
        nlohmann::json doc = nlohmann::json::parse(read_file(cfg.cassette), nullptr, false);
        if (doc.is_discarded())
            throw InputError("cassette " + cfg.cassette + " is not valid JSON");
        base = std::make_unique<ReplayProvider>(Cassette::from_json(doc), cfg.strict_replay);
        s.provider = base.get();
    } else {
        LiveOptions lo;
        lo.base_url = cfg.base_url;
        auto key = env(cfg.api_key_env);
        if (!key || key->empty())
            throw InputError("environment variable " + cfg.api_key_env + " holds no API key");
        lo.api_key = *key;
        base = std::make_unique<LiveProvider>(*transport, lo);
        s.provider = base.get();
        if (cfg.mode == RunMode::Record) {
            if (cfg.cassette.empty())
                throw InputError("record mode needs a cassette path (--cassette or paths.cassette)");
            bool fresh = stage == "augment" || stage == "context" || stage == "coverage";
            if (!fresh && std::filesystem::exists(cfg.cassette))
                sink = Cassette::from_json(nlohmann::json::parse(read_file(cfg.cassette)));
            recorder = std::make_unique<RecordingProvider>(*base, sink);
            s.provider = recorder.get();
        }
    }

    if (!o.in.fetch_fixtures.empty())
        s.fetcher = make_fixture_fetcher(o.in.fetch_fixtures);
    else
        s.fetcher = make_transport_fetcher(*transport);

    std::unique_ptr<ExecutionBackend> backend;
    BackendOptions bo;
    bo.timeout = std::chrono::seconds(cfg.backend_timeout_s);
    bo.scope_denylist = cfg.scope_denylist;
    s.backend = [&]() -> ExecutionBackend& {
        if (!backend) {
            if (cfg.backend_kind == "process") {
                auto cmd = split_command(cfg.backend_command);
                if (cmd.empty())
                    throw InputError("process backend needs backend.command or --backend-command");
                backend = std::make_unique<ProcessBackend>(cmd, bo);
            } else {
                if (cfg.backend_script.empty())
                    throw InputError("fake backend needs backend.script or --backend-script");
                nlohmann::json script = nlohmann::json::parse(read_file(cfg.backend_script), nullptr, false);
                if (script.is_discarded())
                    throw InputError("backend script " + cfg.backend_script + " is not valid JSON");
                backend = std::make_unique<FakeBackend>(script, bo);
            }
        }
        return *backend;
    };
    std::unique_ptr<Workspace> ws;
    if (!cfg.workspace.empty()) {
        ws = std::make_unique<Workspace>(cfg.workspace);
        s.workspace = ws.get();
    }

    auto save_cassette = [&] {
        if (recorder && (!sink.records.empty() || stage == "augment" || stage == "context"))
            write_file_atomic(cfg.cassette, sink.to_json().dump(2) + "\n");
    };
    StageStatus st;
    try {
        if (stage == "coverage")
            st = run_coverage_stage(o.in, s);
        else if (stage == "context")
            st = run_context_stage(o.in, s);
        else if (stage == "generate")
            st = run_generate_stage(o.in, s);
        else if (stage == "report")
            st = run_report_stage(o.in, s);
        else
            st = run_augment(o.in, s);
    } catch (...) {
        save_cassette();
        throw;
    }
    save_cassette();
    spdlog::debug("{} finished: {}", stage, to_string(st));
    return 0;
}

} // namespace

int cli_main(int argc, char** argv, const CliHooks& hooks)
{
    CLI::App app{"Pull-request test augmentation: patch coverage, context extraction, LLM test generation, "
                 "integration and reporting."};
    app.require_subcommand(1);
    CliOptions o;
    const std::vector<std::pair<std::string, std::string>> stages = {
        {"coverage", "Compute patch coverage and focal functions"},
        {"context", "Extract PR context and test context"},
        {"generate", "Generate and refine candidate tests"},
        {"report", "Select, merge and report accepted tests"},
        {"augment", "Run all stages"},
    };
    for (const auto& [name, help] : stages)
        add_common(app.add_subcommand(name, help), o);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    std::string stage = app.get_subcommands().front()->get_name();

    auto logger = spdlog::get("covaug");
    if (!logger)
        logger = spdlog::stderr_color_mt("covaug");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(o.log_level));
    spdlog::set_pattern("[%l] %v");

    try {
        return run(stage, o, hooks);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return exit_code_for(e);
    }
}

} // namespace covaug
