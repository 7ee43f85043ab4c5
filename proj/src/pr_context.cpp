#include "covaug/pr_context.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <regex>
#include <set>

namespace covaug {

using nlohmann::json;

std::string_view to_string(LinkCategory c)
{
    switch (c) {
    case LinkCategory::Doc: return "DOC";
    case LinkCategory::Forum: return "FORUM";
    case LinkCategory::IssueOrPr: return "ISSUE_OR_PR";
    case LinkCategory::Nav: return "NAV";
    case LinkCategory::Other: return "OTHER";
    }
    return "OTHER";
}

namespace {

struct UrlParts {
    std::string host;
    std::vector<std::string> segments;
    std::string query;
};

UrlParts split_url(std::string_view url)
{
    UrlParts parts;
    auto scheme = url.find("://");
    std::string_view rest = scheme == std::string_view::npos ? url : url.substr(scheme + 3);
    if (auto hash = rest.find('#'); hash != std::string_view::npos)
        rest = rest.substr(0, hash);
    if (auto q = rest.find('?'); q != std::string_view::npos) {
        parts.query = std::string(rest.substr(q + 1));
        rest = rest.substr(0, q);
    }
    auto slash = rest.find('/');
    std::string host(rest.substr(0, slash));
    std::transform(host.begin(), host.end(), host.begin(), [](unsigned char c) { return std::tolower(c); });
    if (auto colon = host.find(':'); colon != std::string::npos)
        host.resize(colon);
    if (host.starts_with("www."))
        host = host.substr(4);
    parts.host = host;
    if (slash != std::string_view::npos) {
        std::string_view path = rest.substr(slash + 1);
        size_t start = 0;
        while (start <= path.size()) {
            size_t end = path.find('/', start);
            if (end == std::string_view::npos)
                end = path.size();
            if (end > start)
                parts.segments.emplace_back(path.substr(start, end - start));
            start = end + 1;
        }
    }
    return parts;
}

bool all_digits(std::string_view s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool host_is(const std::string& host, std::string_view domain)
{
    return host == domain || (host.size() > domain.size() && host.ends_with(domain) && host[host.size() - domain.size() - 1] == '.');
}

bool has_segment(const UrlParts& u, std::initializer_list<std::string_view> names)
{
    for (const auto& s : u.segments)
        for (auto n : names)
            if (s == n)
                return true;
    return false;
}

} // namespace

LinkCategory categorize_link(std::string_view url)
{
    const UrlParts u = split_url(url);
    const bool forge = host_is(u.host, "github.com") || host_is(u.host, "gitlab.com");
    if (forge) {
        static const std::set<std::string> site_pages = {
            "login", "logout", "join", "signup", "settings", "notifications", "marketplace", "explore", "features",
            "about", "pricing", "sponsors", "orgs", "topics", "search", "pulls", "issues", "new", "dashboard",
        };
        const auto& seg = u.segments;
        if (seg.size() <= 1)
            return LinkCategory::Nav;
        if (site_pages.contains(seg[0]))
            return LinkCategory::Nav;
        if (seg.size() == 2)
            return LinkCategory::Nav;
        // GitLab puts a "-" segment before the resource.
        size_t k = seg[2] == "-" && seg.size() > 3 ? 3 : 2;
        const std::string& resource = seg[k];
        static const std::set<std::string> nav_resources = {
            "pulls", "commits", "branches", "tags", "labels", "milestones", "actions", "stargazers", "network",
            "watchers", "forks", "graphs", "settings", "security", "pulse", "contributors", "activity", "projects",
        };
        if (nav_resources.contains(resource))
            return LinkCategory::Nav;
        if (resource == "issues" || resource == "pull" || resource == "merge_requests") {
            if (seg.size() > k + 1 && all_digits(seg[k + 1]))
                return LinkCategory::IssueOrPr;
            return LinkCategory::Nav;
        }
        if (resource == "discussions")
            return LinkCategory::Forum;
        if (resource == "wiki")
            return LinkCategory::Doc;
        return LinkCategory::Other;
    }
    if (host_is(u.host, "bugs.python.org") || (u.host.starts_with("bugs.") || u.host.starts_with("bugzilla.")))
        return LinkCategory::IssueOrPr;

    if (u.host.starts_with("docs.") || host_is(u.host, "readthedocs.io") || host_is(u.host, "readthedocs.org")
        || host_is(u.host, "cppreference.com") || host_is(u.host, "developer.mozilla.org")
        || host_is(u.host, "peps.python.org") || has_segment(u, {"docs", "doc", "manual", "reference"}))
        return LinkCategory::Doc;

    if (host_is(u.host, "stackoverflow.com") || host_is(u.host, "stackexchange.com") || u.host.starts_with("discuss.")
        || u.host.starts_with("discourse.") || u.host.starts_with("forum.") || u.host.starts_with("mail.")
        || host_is(u.host, "groups.google.com") || host_is(u.host, "reddit.com")
        || has_segment(u, {"forum", "forums", "discussions"}))
        return LinkCategory::Forum;

    return LinkCategory::Other;
}

std::vector<LinkCandidate> extract_links(const PullRequest& pr, std::string_view page_markdown)
{
    static const std::regex link_re(
        R"re(\[([^\]]*)\]\((https?://[^\s)]+)(?:\s+"[^"]*")?\)|<(https?://[^>\s]+)>|(https?://[^\s<>()\[\]"'`]+)|(?:^|[^\w/&])(?:gh-|GH-|#)(\d+)\b)re");
    std::vector<LinkCandidate> out;
    std::set<std::string> seen;
    auto add = [&](std::string url, std::string anchor) {
        while (!url.empty() && std::string_view(".,;:!?").find(url.back()) != std::string_view::npos)
            url.pop_back();
        if (url.empty() || !seen.insert(url).second)
            return;
        LinkCategory cat = categorize_link(url);
        out.push_back({std::move(url), std::move(anchor), cat});
    };
    // The PR's own number shows up in its title; it is not a resource worth reading.
    std::string self_number;
    for (auto it = pr.id.rbegin(); it != pr.id.rend() && std::isdigit(static_cast<unsigned char>(*it)); ++it)
        self_number.insert(self_number.begin(), *it);
    std::string page(page_markdown);
    for (auto it = std::sregex_iterator(page.begin(), page.end(), link_re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        if (m[2].matched)
            add(m[2].str(), m[1].str());
        else if (m[3].matched)
            add(m[3].str(), "");
        else if (m[4].matched)
            add(m[4].str(), "");
        else if (!pr.repo_url.empty() && m[5].str() != self_number)
            add(pr.repo_url + "/issues/" + m[5].str(), "");
    }
    for (const auto& link : pr.links)
        add(link, "");
    return out;
}

std::string render_pr_page(const PullRequest& pr)
{
    std::string page = "# " + pr.title + " (#" + pr.id + ")\n\n" + pr.body + "\n";
    for (const auto& c : pr.comments)
        page += "\n---\n**" + c.author + "** commented:\n\n" + c.text + "\n";
    return page;
}

Fetcher make_fixture_fetcher(const std::string& manifest_path)
{
    json manifest = json::parse(read_file(manifest_path), nullptr, false);
    if (!manifest.is_object())
        throw InputError("fetch fixture manifest must be a JSON object of url -> file");
    const auto base = std::filesystem::path(manifest_path).parent_path();
    std::map<std::string, std::string> pages;
    for (const auto& [url, file] : manifest.items())
        pages[url] = (base / file.get<std::string>()).string();
    return [pages = std::move(pages)](const std::string& url) -> FetchResult {
        auto it = pages.find(url);
        if (it == pages.end())
            return {false, {}, "no fixture for " + url};
        try {
            return {true, read_file(it->second), {}};
        } catch (const Error& e) {
            return {false, {}, e.what()};
        }
    };
}

Fetcher make_transport_fetcher(HttpTransport& transport)
{
    return [&transport](const std::string& url) -> FetchResult {
        try {
            HttpResponse r = transport.get(url, std::chrono::seconds(30));
            if (r.status != 200)
                return {false, {}, "HTTP " + std::to_string(r.status)};
            return {true, std::move(r.body), {}};
        } catch (const TransportError& e) {
            return {false, {}, e.what()};
        }
    };
}

int parse_link_choice(std::string_view response, std::size_t count)
{
    std::string upper(response);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    size_t first = upper.find_first_not_of(" \t\r\n`*\"'");
    if (first == std::string::npos || upper.compare(first, 4, "NONE") == 0)
        return -1;
    for (size_t i = 0; i < response.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(response[i])))
            continue;
        size_t j = i;
        long value = 0;
        while (j < response.size() && std::isdigit(static_cast<unsigned char>(response[j])) && value < 1000000)
            value = value * 10 + (response[j++] - '0');
        return value >= 0 && static_cast<std::size_t>(value) < count ? static_cast<int>(value) : -1;
    }
    return -1;
}

namespace {

std::string truncate(std::string_view text, std::size_t limit)
{
    if (text.size() <= limit)
        return std::string(text);
    return std::string(text.substr(0, limit)) + "\n[... truncated ...]\n";
}

Completion summarize(Gateway& llm, std::string_view page, std::string_view current, std::string_view linked_url,
                     std::string_view linked, const EnrichOptions& options)
{
    std::string user = "Pull request page:\n\n" + truncate(page, options.max_page_chars) + "\n\nCurrent summary:\n"
        + (current.empty() ? std::string("(none yet)") : std::string(current));
    if (!linked_url.empty())
        user += "\n\nContent of linked page " + std::string(linked_url) + ":\n\n" + truncate(linked, options.max_page_chars);
    user += "\n\nWrite an updated summary of the pull request: its intent, the behaviour it changes, and any details "
            "from linked resources that matter for writing regression tests.";
    return llm.complete(PromptRole::SummarizePr,
                        {{"system", "You summarize pull requests for developers who write regression tests."},
                         {"user", std::move(user)}});
}

} // namespace

PrContextSummary enrich_context(const PullRequest& pr, std::string_view page_markdown, const Fetcher& fetcher,
                                Gateway& llm, const EnrichOptions& options)
{
    PrContextSummary out;
    Completion first = summarize(llm, page_markdown, "", "", "", options);
    out.summary = first.text;
    out.llm_call_ids.push_back(first.call_id);

    std::vector<LinkCandidate> pool;
    for (auto& c : extract_links(pr, page_markdown))
        if (c.category != LinkCategory::Nav)
            pool.push_back(std::move(c));

    std::set<std::string> attempted;
    while (out.iterations < options.max_links) {
        std::vector<const LinkCandidate*> available;
        for (const auto& c : pool)
            if (!attempted.contains(c.url))
                available.push_back(&c);
        if (available.empty())
            break;

        std::string listing;
        for (size_t i = 0; i < available.size(); ++i) {
            listing += "[" + std::to_string(i) + "] " + available[i]->url;
            if (!available[i]->anchor_text.empty())
                listing += " \"" + available[i]->anchor_text + "\"";
            listing += " (" + std::string(to_string(available[i]->category)) + ")\n";
        }
        Completion pick = llm.complete(
            PromptRole::SelectLink,
            {{"system", "You choose which linked resource to read next to understand a pull request."},
             {"user", "Current summary:\n" + out.summary + "\n\nCandidate links:\n" + listing
                          + "\nPrefer official documentation, community forums and technical guides. Answer with "
                            "the index of the single most useful link, or NONE if no link is worth reading."}});
        out.llm_call_ids.push_back(pick.call_id);
        int choice = parse_link_choice(pick.text, available.size());
        if (choice < 0)
            break;
        const LinkCandidate& chosen = *available[static_cast<size_t>(choice)];
        attempted.insert(chosen.url);

        FetchResult page = fetcher(chosen.url);
        json rec = {{"kind", "fetch"}, {"url", chosen.url}, {"ok", page.ok}};
        if (page.ok) {
            rec["bytes"] = page.text.size();
            rec["sha256"] = sha256_hex(page.text);
        } else {
            rec["error"] = page.error;
        }
        llm.log().append(std::move(rec));
        if (!page.ok)
            continue;

        Completion upd = summarize(llm, page_markdown, out.summary, chosen.url, page.text, options);
        out.summary = upd.text;
        out.llm_call_ids.push_back(upd.call_id);
        out.visited_urls.push_back(chosen.url);
        ++out.iterations;
    }
    return out;
}

json to_json(const PrContextSummary& s)
{
    return {{"schema_version", 1},
            {"summary", s.summary},
            {"visited_urls", s.visited_urls},
            {"llm_call_ids", s.llm_call_ids},
            {"iterations", s.iterations}};
}

PrContextSummary pr_context_from_json(const json& doc)
{
    PrContextSummary s;
    try {
        s.summary = doc.at("summary").get<std::string>();
        s.visited_urls = doc.at("visited_urls").get<std::vector<std::string>>();
        s.llm_call_ids = doc.at("llm_call_ids").get<std::vector<std::string>>();
        s.iterations = doc.at("iterations").get<std::size_t>();
    } catch (const json::exception& e) {
        throw InputError(std::string("PR context schema error: ") + e.what());
    }
    return s;
}

} // namespace covaug
