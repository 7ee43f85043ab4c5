#include "covaug/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

namespace covaug {

namespace pt = boost::property_tree;

std::string_view to_string(RunMode m)
{
    switch (m) {
    case RunMode::Live: return "live";
    case RunMode::Record: return "record";
    case RunMode::Replay: return "replay";
    }
    return "replay";
}

RunMode run_mode_from_string(std::string_view s)
{
    if (s == "live")
        return RunMode::Live;
    if (s == "record")
        return RunMode::Record;
    if (s == "replay")
        return RunMode::Replay;
    throw ConfigError("unknown mode '" + std::string(s) + "' (expected live, record or replay)");
}

EnvLookup system_env()
{
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str()))
            return std::string(v);
        return std::nullopt;
    };
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos)
            out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

namespace {

class Layers {
public:
    Layers(const pt::ptree& tree, const EnvLookup& env)
        : tree_(tree)
        , env_(env)
    {
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const
    {
        std::string var = "COVAUG_" + upper(section) + "_" + upper(key);
        if (auto v = env_(var))
            return v;
        if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(section + "." + key, '.')))
            return *v;
        return std::nullopt;
    }

    void str(const char* section, const char* key, std::string& out) const
    {
        if (auto v = get(section, key))
            out = *v;
    }

    void integer(const char* section, const char* key, int& out) const
    {
        if (auto v = get(section, key))
            out = parse<int>(section, key, *v);
    }

    void real(const char* section, const char* key, double& out) const
    {
        if (auto v = get(section, key))
            out = parse<double>(section, key, *v);
    }

    void boolean(const char* section, const char* key, bool& out) const
    {
        if (auto v = get(section, key)) {
            std::string s = lower(*v);
            if (s == "1" || s == "true" || s == "yes" || s == "on")
                out = true;
            else if (s == "0" || s == "false" || s == "no" || s == "off")
                out = false;
            else
                throw ConfigError(std::string(section) + "." + key + ": not a boolean: " + *v);
        }
    }

    void list(const char* section, const char* key, std::vector<std::string>& out) const
    {
        if (auto v = get(section, key))
            out = split_list(*v);
    }

private:
    template <typename T>
    static T parse(const char* section, const char* key, const std::string& v)
    {
        std::istringstream is(v);
        T value{};
        is >> value;
        if (is.fail() || !(is >> std::ws).eof())
            throw ConfigError(std::string(section) + "." + key + ": invalid value '" + v + "'");
        return value;
    }

    static std::string upper(std::string s)
    {
        for (auto& c : s)
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }

    static std::string lower(std::string s)
    {
        for (auto& c : s)
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    }

    const pt::ptree& tree_;
    const EnvLookup& env_;
};

Config build(const pt::ptree& tree, const EnvLookup& env)
{
    Config c;
    Layers l(tree, env);
    l.str("llm", "model", c.model);
    l.real("llm", "temperature", c.temperature);
    l.str("llm", "base_url", c.base_url);
    l.str("llm", "api_key_env", c.api_key_env);
    l.real("llm", "price_prompt_per_mtok", c.price_prompt_per_mtok);
    l.real("llm", "price_completion_per_mtok", c.price_completion_per_mtok);
    if (auto m = l.get("llm", "mode"))
        c.mode = run_mode_from_string(*m);
    l.boolean("llm", "strict_replay", c.strict_replay);

    l.integer("generation", "tests_per_pr", c.tests_per_pr);
    l.integer("generation", "max_feedback_rounds", c.max_feedback_rounds);

    l.integer("context", "max_links", c.max_links);
    l.integer("context", "jaccard_top_k", c.jaccard_top_k);
    l.integer("context", "max_page_chars", c.max_page_chars);

    l.str("paths", "workspace", c.workspace);
    l.str("paths", "cache", c.cache);
    l.str("paths", "out_dir", c.out_dir);
    l.str("paths", "cassette", c.cassette);

    l.list("filter", "exclusion_keywords", c.exclusion_keywords);
    l.list("filter", "scope_denylist", c.scope_denylist);
    l.integer("filter", "max_code_files", c.max_code_files);

    l.str("backend", "kind", c.backend_kind);
    l.str("backend", "script", c.backend_script);
    l.str("backend", "command", c.backend_command);
    l.integer("backend", "timeout_s", c.backend_timeout_s);
    validate(c);
    return c;
}

} // namespace

void validate(const Config& c)
{
    auto positive = [](const char* name, int v) {
        if (v < 1)
            throw ConfigError(std::string(name) + " must be at least 1");
    };
    positive("generation.tests_per_pr", c.tests_per_pr);
    positive("generation.max_feedback_rounds", c.max_feedback_rounds);
    positive("context.max_links", c.max_links);
    positive("context.jaccard_top_k", c.jaccard_top_k);
    positive("context.max_page_chars", c.max_page_chars);
    positive("filter.max_code_files", c.max_code_files);
    positive("backend.timeout_s", c.backend_timeout_s);
    if (!(c.temperature >= 0.0 && c.temperature <= 2.0))
        throw ConfigError("llm.temperature must be within [0, 2]");
    if (c.price_prompt_per_mtok < 0 || c.price_completion_per_mtok < 0)
        throw ConfigError("llm prices must not be negative");
    if (c.backend_kind != "fake" && c.backend_kind != "process")
        throw ConfigError("backend.kind must be fake or process");
}

Config parse_config(const std::string& ini_text, const EnvLookup& env)
{
    pt::ptree tree;
    std::istringstream is(ini_text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return build(tree, env);
}

Config load_config(const std::optional<std::string>& path, const EnvLookup& env)
{
    if (!path)
        return build(pt::ptree{}, env);
    std::string text;
    try {
        text = read_file(*path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text, env);
}

} // namespace covaug
