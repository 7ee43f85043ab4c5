#include "covaug/llm_gateway.hpp"

#include <array>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace covaug {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<PromptRole, std::string_view>, 11> kRoles = {{
    {PromptRole::SummarizePr, "SUMMARIZE_PR"},
    {PromptRole::SelectLink, "SELECT_LINK"},
    {PromptRole::PickTestFiles, "PICK_TEST_FILES"},
    {PromptRole::PickTestFunction, "PICK_TEST_FUNCTION"},
    {PromptRole::SummarizeUncovered, "SUMMARIZE_UNCOVERED"},
    {PromptRole::GenTest, "GEN_TEST"},
    {PromptRole::FixError, "FIX_ERROR"},
    {PromptRole::FixPreserveCoverage, "FIX_PRESERVE_COVERAGE"},
    {PromptRole::IncreaseCoverage, "INCREASE_COVERAGE"},
    {PromptRole::IntegrationMode, "INTEGRATION_MODE"},
    {PromptRole::SelectBest, "SELECT_BEST"},
}};

} // namespace

std::string_view to_string(PromptRole role)
{
    for (const auto& [r, tag] : kRoles)
        if (r == role)
            return tag;
    return "UNKNOWN";
}

std::optional<PromptRole> role_from_string(std::string_view tag)
{
    for (const auto& [r, t] : kRoles)
        if (t == tag)
            return r;
    return std::nullopt;
}

const std::vector<PromptRole>& role_catalog()
{
    static const std::vector<PromptRole> catalog = [] {
        std::vector<PromptRole> out;
        for (const auto& [r, tag] : kRoles)
            out.push_back(r);
        return out;
    }();
    return catalog;
}

std::string CompletionRequest::hash() const
{
    json doc = {{"role", to_string(role)}, {"model", model}, {"messages", json::array()}};
    for (const auto& m : messages)
        doc["messages"].push_back({{"speaker", m.speaker}, {"text", m.text}});
    return sha256_hex(doc.dump());
}

// ---- transports -------------------------------------------------------------

HttpResponse FailClosedTransport::post(const HttpRequest& req)
{
    ++attempts_;
    throw TransportError("network access disabled (POST " + req.url + ")");
}

HttpResponse FailClosedTransport::get(const std::string& url, std::chrono::seconds)
{
    ++attempts_;
    throw TransportError("network access disabled (GET " + url + ")");
}

// ---- live provider ------------------------------------------------------------

LiveProvider::LiveProvider(HttpTransport& transport, LiveOptions options)
    : transport_(transport)
    , options_(std::move(options))
{
    if (!options_.sleep)
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Completion LiveProvider::complete(const CompletionRequest& req)
{
    json body = {{"model", req.model}, {"temperature", req.temperature}, {"messages", json::array()}};
    for (const auto& m : req.messages)
        body["messages"].push_back({{"role", m.speaker}, {"content", m.text}});

    HttpRequest http;
    std::string base = options_.base_url;
    while (!base.empty() && base.back() == '/')
        base.pop_back();
    http.url = base + "/chat/completions";
    http.headers = {{"Content-Type", "application/json"}};
    if (!options_.api_key.empty())
        http.headers.emplace_back("Authorization", "Bearer " + options_.api_key);
    http.body = body.dump();

    std::string last_error;
    auto backoff = options_.initial_backoff;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        try {
            HttpResponse resp = transport_.post(http);
            if (resp.status == 200) {
                json doc = json::parse(resp.body, nullptr, false);
                if (doc.is_discarded())
                    throw ProviderError("provider returned invalid JSON");
                Completion out;
                try {
                    out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
                } catch (const json::exception& e) {
                    throw ProviderError(std::string("unexpected completion payload: ") + e.what());
                }
                if (auto u = doc.find("usage"); u != doc.end() && u->is_object()) {
                    out.tokens.prompt = u->value("prompt_tokens", std::int64_t{0});
                    out.tokens.completion = u->value("completion_tokens", std::int64_t{0});
                }
                return out;
            }
            last_error = "HTTP " + std::to_string(resp.status);
            if (resp.status != 429 && resp.status < 500)
                throw ProviderError("provider rejected request: " + last_error + ": " + resp.body.substr(0, 500));
        } catch (const TransportError& e) {
            last_error = e.what();
        }
        if (attempt < options_.max_attempts) {
            options_.sleep(backoff);
            backoff *= 2;
        }
    }
    throw ProviderError("provider failed after " + std::to_string(options_.max_attempts) + " attempts: " + last_error);
}

// ---- cassettes ---------------------------------------------------------------

Cassette Cassette::from_json(const json& doc)
{
    if (!doc.is_object() || doc.value("schema_version", 0) != 1)
        throw InputError("cassette: expected an object with schema_version 1");
    Cassette c;
    try {
        for (const auto& r : doc.at("records")) {
            CassetteRecord rec;
            std::string tag = r.at("role").get<std::string>();
            auto role = role_from_string(tag);
            if (!role)
                throw InputError("cassette: unknown role '" + tag + "'");
            rec.role = *role;
            rec.response = r.at("response").get<std::string>();
            rec.tokens.prompt = r.value("prompt_tokens", std::int64_t{0});
            rec.tokens.completion = r.value("completion_tokens", std::int64_t{0});
            rec.request_sha256 = r.value("request_sha256", "");
            c.records.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("cassette schema error: ") + e.what());
    }
    return c;
}

json Cassette::to_json() const
{
    json recs = json::array();
    for (const auto& r : records) {
        json j = {{"role", to_string(r.role)},
                  {"response", r.response},
                  {"prompt_tokens", r.tokens.prompt},
                  {"completion_tokens", r.tokens.completion}};
        if (!r.request_sha256.empty())
            j["request_sha256"] = r.request_sha256;
        recs.push_back(std::move(j));
    }
    return {{"schema_version", 1}, {"records", recs}};
}

ReplayProvider::ReplayProvider(Cassette cassette, bool strict)
    : cassette_(std::move(cassette))
    , strict_(strict)
{
}

Completion ReplayProvider::complete(const CompletionRequest& req)
{
    std::lock_guard lock(mutex_);
    std::size_t& ordinal = cursor_[req.role];
    std::size_t seen = 0;
    for (const auto& rec : cassette_.records) {
        if (rec.role != req.role)
            continue;
        if (seen++ != ordinal)
            continue;
        if (strict_ && rec.request_sha256 != req.hash())
            throw ReplayMiss("strict replay: request hash mismatch for " + std::string(to_string(req.role)) + " #"
                             + std::to_string(ordinal));
        ++ordinal;
        return Completion{rec.response, rec.tokens, {}};
    }
    throw ReplayMiss("cassette exhausted for role " + std::string(to_string(req.role)) + " at ordinal "
                     + std::to_string(ordinal));
}

std::size_t ReplayProvider::remaining() const
{
    std::lock_guard lock(mutex_);
    std::size_t consumed = 0;
    for (const auto& [role, n] : cursor_)
        consumed += n;
    return cassette_.records.size() - consumed;
}

RecordingProvider::RecordingProvider(Provider& inner, Cassette& sink)
    : inner_(inner)
    , sink_(sink)
{
}

Completion RecordingProvider::complete(const CompletionRequest& req)
{
    Completion out = inner_.complete(req);
    std::lock_guard lock(mutex_);
    sink_.records.push_back({req.role, out.text, out.tokens, req.hash()});
    return out;
}

void ScriptedProvider::push(PromptRole role, std::string response, TokenCounts tokens)
{
    queue_[role].emplace_back(std::move(response), tokens);
}

Completion ScriptedProvider::complete(const CompletionRequest& req)
{
    requests_.push_back(req);
    auto& q = queue_[req.role];
    std::size_t& i = cursor_[req.role];
    if (i >= q.size())
        throw ReplayMiss("scripted provider has no response left for " + std::string(to_string(req.role)));
    auto [text, tokens] = q[i++];
    return Completion{text, tokens, {}};
}

std::size_t ScriptedProvider::calls(PromptRole role) const
{
    auto it = cursor_.find(role);
    return it == cursor_.end() ? 0 : it->second;
}

// ---- provenance ---------------------------------------------------------------

std::string SystemClock::now_iso8601()
{
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

ProvenanceLog::ProvenanceLog(Clock& clock, std::string path)
    : clock_(clock)
    , path_(std::move(path))
{
    if (path_.empty() || !std::filesystem::exists(path_))
        return;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
            throw InputError("corrupt provenance log " + path_);
        records_.push_back(std::move(rec));
    }
}

json ProvenanceLog::append(json record)
{
    std::lock_guard lock(mutex_);
    record["ts"] = clock_.now_iso8601();
    if (!path_.empty()) {
        std::filesystem::path p(path_);
        if (p.has_parent_path())
            std::filesystem::create_directories(p.parent_path());
        std::ofstream out(path_, std::ios::app);
        out << record.dump() << '\n';
        if (!out)
            throw Error("cannot append to provenance log " + path_);
    }
    records_.push_back(record);
    return record;
}

std::vector<json> ProvenanceLog::records() const
{
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t ProvenanceLog::count(std::string_view kind) const
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& r : records_)
        if (r.value("kind", "") == kind)
            ++n;
    return n;
}

std::string ProvenanceLog::now()
{
    return clock_.now_iso8601();
}

void CostLedger::add(const TokenCounts& tokens, const Pricing& pricing)
{
    prompt_tokens += tokens.prompt;
    completion_tokens += tokens.completion;
    usd += static_cast<double>(tokens.prompt) * pricing.prompt_per_mtok / 1e6
        + static_cast<double>(tokens.completion) * pricing.completion_per_mtok / 1e6;
}

CostLedger ledger_from_log(const std::vector<json>& records, const Pricing& pricing)
{
    CostLedger ledger;
    for (const auto& r : records) {
        if (r.value("kind", "") != "llm")
            continue;
        ledger.add({r.value("prompt_tokens", std::int64_t{0}), r.value("completion_tokens", std::int64_t{0})}, pricing);
    }
    return ledger;
}

// ---- gateway ------------------------------------------------------------------

Gateway::Gateway(Provider& provider, ProvenanceLog& log, GatewayOptions options)
    : provider_(provider)
    , log_(log)
    , options_(std::move(options))
{
    if (options_.temperature < 0.0 || options_.temperature > 2.0)
        throw InputError("temperature must lie in [0, 2]");
    auto existing = log_.records();
    ledger_ = ledger_from_log(existing, options_.pricing);
    next_id_ = log_.count("llm") + 1;
}

Completion Gateway::complete(PromptRole role, std::vector<Message> messages)
{
    CompletionRequest req;
    req.role = role;
    req.messages = std::move(messages);
    req.temperature = options_.temperature;
    req.model = options_.model;

    Completion out = provider_.complete(req);

    std::lock_guard lock(mutex_);
    std::ostringstream id;
    id << "llm-" << std::setw(4) << std::setfill('0') << next_id_++;
    out.call_id = id.str();
    ledger_.add(out.tokens, options_.pricing);
    ++per_role_[role];
    log_.append({{"kind", "llm"},
                 {"id", out.call_id},
                 {"role", to_string(role)},
                 {"model", req.model},
                 {"prompt_tokens", out.tokens.prompt},
                 {"completion_tokens", out.tokens.completion},
                 {"request_sha256", req.hash()},
                 {"response_sha256", sha256_hex(out.text)}});
    return out;
}

CostLedger Gateway::cost() const
{
    std::lock_guard lock(mutex_);
    return ledger_;
}

std::size_t Gateway::calls() const
{
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [r, c] : per_role_)
        n += c;
    return n;
}

std::size_t Gateway::calls(PromptRole role) const
{
    std::lock_guard lock(mutex_);
    auto it = per_role_.find(role);
    return it == per_role_.end() ? 0 : it->second;
}

} // namespace covaug
