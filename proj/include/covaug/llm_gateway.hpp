#pragma once

#include "covaug/common.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace covaug {

/// The fixed set of structured prompts the pipeline issues.
enum class PromptRole {
    SummarizePr,
    SelectLink,
    PickTestFiles,
    PickTestFunction,
    SummarizeUncovered,
    GenTest,
    FixError,
    FixPreserveCoverage,
    IncreaseCoverage,
    IntegrationMode,
    SelectBest,
};

std::string_view to_string(PromptRole role);
std::optional<PromptRole> role_from_string(std::string_view tag);
const std::vector<PromptRole>& role_catalog();

struct Message {
    std::string speaker; // "system", "user" or "assistant"
    std::string text;
};

struct CompletionRequest {
    PromptRole role = PromptRole::GenTest;
    std::vector<Message> messages;
    double temperature = 0.7;
    std::string model;

    /// SHA-256 over role, model and messages; temperature is excluded.
    std::string hash() const;
};

struct TokenCounts {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
};

struct Completion {
    std::string text;
    TokenCounts tokens;
    std::string call_id;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

class ReplayMiss : public Error {
public:
    using Error::Error;
};

class Provider {
public:
    virtual ~Provider() = default;
    /// Returns the response text and token counts; call ids are assigned by the Gateway.
    virtual Completion complete(const CompletionRequest& req) = 0;
};

// ---- HTTP transport -------------------------------------------------------

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::chrono::seconds timeout{120};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& req) = 0;
    virtual HttpResponse get(const std::string& url, std::chrono::seconds timeout) = 0;
};

/// Transport that refuses every request. Installed whenever the pipeline must stay offline.
class FailClosedTransport : public HttpTransport {
public:
    HttpResponse post(const HttpRequest& req) override;
    HttpResponse get(const std::string& url, std::chrono::seconds timeout) override;
    std::size_t attempts() const { return attempts_; }

private:
    std::size_t attempts_ = 0;
};

/// cpp-httplib backed transport (HTTPS via OpenSSL).
std::unique_ptr<HttpTransport> make_network_transport();

// ---- providers --------------------------------------------------------------

struct LiveOptions {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::function<void(std::chrono::milliseconds)> sleep;
};

/// OpenAI-style chat-completions provider.
class LiveProvider : public Provider {
public:
    LiveProvider(HttpTransport& transport, LiveOptions options);
    Completion complete(const CompletionRequest& req) override;

private:
    HttpTransport& transport_;
    LiveOptions options_;
};

struct CassetteRecord {
    PromptRole role = PromptRole::GenTest;
    std::string response;
    TokenCounts tokens;
    /// Only consulted in strict mode.
    std::string request_sha256;
};

struct Cassette {
    std::vector<CassetteRecord> records;

    static Cassette from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

/// Serves cassette records by (role, ordinal). Never falls through to a live call.
class ReplayProvider : public Provider {
public:
    explicit ReplayProvider(Cassette cassette, bool strict = false);
    Completion complete(const CompletionRequest& req) override;
    std::size_t remaining() const;

private:
    Cassette cassette_;
    bool strict_;
    std::map<PromptRole, std::size_t> cursor_;
    mutable std::mutex mutex_;
};

/// Forwards to another provider and appends every exchange to a cassette.
class RecordingProvider : public Provider {
public:
    RecordingProvider(Provider& inner, Cassette& sink);
    Completion complete(const CompletionRequest& req) override;

private:
    Provider& inner_;
    Cassette& sink_;
    std::mutex mutex_;
};

/// Scripted in-memory provider: a queue of responses per role.
class ScriptedProvider : public Provider {
public:
    void push(PromptRole role, std::string response, TokenCounts tokens = {10, 10});
    Completion complete(const CompletionRequest& req) override;
    const std::vector<CompletionRequest>& requests() const { return requests_; }
    std::size_t calls(PromptRole role) const;

private:
    std::map<PromptRole, std::vector<std::pair<std::string, TokenCounts>>> queue_;
    std::map<PromptRole, std::size_t> cursor_;
    std::vector<CompletionRequest> requests_;
};

// ---- provenance and accounting ---------------------------------------------

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::string now_iso8601() = 0;
};

class SystemClock : public Clock {
public:
    std::string now_iso8601() override;
};

/// Constant timestamps; used in replay mode so artifacts are byte-stable.
class FixedClock : public Clock {
public:
    explicit FixedClock(std::string stamp = "1970-01-01T00:00:00Z")
        : stamp_(std::move(stamp))
    {
    }
    std::string now_iso8601() override { return stamp_; }

private:
    std::string stamp_;
};

/// JSON-lines record of every LLM call and page fetch.
class ProvenanceLog {
public:
    explicit ProvenanceLog(Clock& clock, std::string path = {});

    /// Adds timestamp and returns the record as stored.
    nlohmann::json append(nlohmann::json record);
    std::vector<nlohmann::json> records() const;
    std::size_t count(std::string_view kind) const;
    std::string now();

private:
    Clock& clock_;
    std::string path_;
    std::vector<nlohmann::json> records_;
    mutable std::mutex mutex_;
};

struct Pricing {
    /// USD per million tokens (defaults: GPT-4o-mini list price).
    double prompt_per_mtok = 0.15;
    double completion_per_mtok = 0.60;
};

struct CostLedger {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double usd = 0.0;

    void add(const TokenCounts& tokens, const Pricing& pricing);
};

/// Ledger recomputed from the LLM records of a provenance log.
CostLedger ledger_from_log(const std::vector<nlohmann::json>& records, const Pricing& pricing);

struct GatewayOptions {
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    Pricing pricing;
};

/// Front door for every LLM call: validates requests, assigns call ids, logs provenance, accounts cost.
class Gateway {
public:
    Gateway(Provider& provider, ProvenanceLog& log, GatewayOptions options = {});

    Completion complete(PromptRole role, std::vector<Message> messages);

    CostLedger cost() const;
    std::size_t calls() const;
    std::size_t calls(PromptRole role) const;
    ProvenanceLog& log() { return log_; }
    const GatewayOptions& options() const { return options_; }

private:
    Provider& provider_;
    ProvenanceLog& log_;
    GatewayOptions options_;
    CostLedger ledger_;
    std::size_t next_id_ = 1;
    std::map<PromptRole, std::size_t> per_role_;
    mutable std::mutex mutex_;
};

} // namespace covaug
