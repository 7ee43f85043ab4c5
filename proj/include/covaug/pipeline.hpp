#pragma once

#include "covaug/config.hpp"
#include "covaug/exec_backend.hpp"
#include "covaug/llm_gateway.hpp"
#include "covaug/pr_context.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace covaug {

/// Input file locations of one PR run. Empty strings mean "not supplied".
struct PipelineInputs {
    std::string diff;
    std::string pr_meta;
    std::string coverage;
    std::string structure;
    std::string trace;
    std::string test_index;
    std::string page;
    std::string fetch_fixtures;
};

/// Everything with side effects that a stage may touch.
struct Services {
    Config config;
    Clock* clock = nullptr;
    Provider* provider = nullptr;
    Fetcher fetcher;
    /// Built on first use so stages that never execute tests need no backend configuration.
    std::function<ExecutionBackend&()> backend;
    Workspace* workspace = nullptr;
};

enum class StageStatus { Done, Filtered, FullyCovered, Skipped };

std::string_view to_string(StageStatus s);

std::filesystem::path pr_dir(const Config& cfg, const std::string& pr_id);

StageStatus run_coverage_stage(const PipelineInputs& in, Services& s);
StageStatus run_context_stage(const PipelineInputs& in, Services& s);
StageStatus run_generate_stage(const PipelineInputs& in, Services& s);
StageStatus run_report_stage(const PipelineInputs& in, Services& s);
/// All four stages in order; stops early on a filtered or fully covered PR.
StageStatus run_augment(const PipelineInputs& in, Services& s);

/// Test seam for the command-line entry point.
struct CliHooks {
    /// Replaces the network transport (live/record mode) and the replay-mode fail-closed transport.
    HttpTransport* transport = nullptr;
    /// Replaces the process environment for configuration and API keys.
    EnvLookup env;
};

/// Exit codes: 0 success or clean no-op, 1 other errors, 2 input/schema errors, 3 backend failure,
/// 4 LLM provider failure.
int cli_main(int argc, char** argv, const CliHooks& hooks = {});

} // namespace covaug
