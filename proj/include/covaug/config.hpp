#pragma once

#include "covaug/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace covaug {

enum class RunMode { Live, Record, Replay };

std::string_view to_string(RunMode m);
RunMode run_mode_from_string(std::string_view s);

struct Config {
    // [llm]
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    double price_prompt_per_mtok = 0.15;
    double price_completion_per_mtok = 0.60;
    RunMode mode = RunMode::Replay;
    bool strict_replay = false;

    // [generation]
    int tests_per_pr = 6;
    int max_feedback_rounds = 3;

    // [context]
    int max_links = 3;
    int jaccard_top_k = 10;
    int max_page_chars = 20000;

    // [paths]
    std::string workspace;
    std::string cache;
    std::string out_dir = "out";
    std::string cassette;

    // [filter]
    std::vector<std::string> exclusion_keywords = {"DOC", "backport"};
    std::vector<std::string> scope_denylist;
    int max_code_files = 5;

    // [backend]
    std::string backend_kind = "fake";
    std::string backend_script;
    std::string backend_command;
    int backend_timeout_s = 1800;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

/// Process environment.
EnvLookup system_env();

/// Defaults, then the INI file (if any), then COVAUG_<SECTION>_<KEY> variables. Validates the result.
Config load_config(const std::optional<std::string>& path, const EnvLookup& env = system_env());

/// Same, from INI text.
Config parse_config(const std::string& ini_text, const EnvLookup& env = system_env());

/// Throws ConfigError unless counts are >= 1 and temperature is in [0, 2].
void validate(const Config& c);

std::vector<std::string> split_list(const std::string& s);

} // namespace covaug
