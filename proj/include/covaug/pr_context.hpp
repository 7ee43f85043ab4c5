#pragma once

#include "covaug/change_model.hpp"
#include "covaug/llm_gateway.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace covaug {

enum class LinkCategory { Doc, Forum, IssueOrPr, Nav, Other };

std::string_view to_string(LinkCategory c);

struct LinkCandidate {
    std::string url;
    std::string anchor_text;
    LinkCategory category = LinkCategory::Other;
};

/// Heuristic URL classification; navigation pages of the forge are NAV.
LinkCategory categorize_link(std::string_view url);

/// Markdown links, bare URLs and (when the PR names its repository) "gh-123" / "#123" issue references, in order
/// of first appearance, followed by any PR links not seen in the page.
std::vector<LinkCandidate> extract_links(const PullRequest& pr, std::string_view page_markdown);

/// Markdown rendering of the PR page from its metadata (used when no page capture is supplied).
std::string render_pr_page(const PullRequest& pr);

struct FetchResult {
    bool ok = false;
    std::string text;
    std::string error;
};

using Fetcher = std::function<FetchResult(const std::string& url)>;

/// Serves pages from a {url: file} manifest; unknown URLs are fetch errors, never network requests.
Fetcher make_fixture_fetcher(const std::string& manifest_path);
/// GETs pages through the given transport (live mode only).
Fetcher make_transport_fetcher(HttpTransport& transport);

struct EnrichOptions {
    std::size_t max_links = 3;
    std::size_t max_page_chars = 20000;
};

struct PrContextSummary {
    std::string summary;
    std::vector<std::string> visited_urls;
    std::vector<std::string> llm_call_ids;
    std::size_t iterations = 0;
};

/// Iteratively summarize the PR, following at most max_links non-NAV links chosen by the LLM.
PrContextSummary enrich_context(const PullRequest& pr, std::string_view page_markdown, const Fetcher& fetcher,
                                Gateway& llm, const EnrichOptions& options = {});

/// Parses a link-selection answer: an index into `count` candidates, or -1 for NONE / unparseable.
int parse_link_choice(std::string_view response, std::size_t count);

nlohmann::json to_json(const PrContextSummary& s);
PrContextSummary pr_context_from_json(const nlohmann::json& doc);

} // namespace covaug
