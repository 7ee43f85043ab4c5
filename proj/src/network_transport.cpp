#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "covaug/llm_gateway.hpp"

namespace covaug {

namespace {

std::pair<std::string, std::string> split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw TransportError("not an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post(const HttpRequest& req) override
    {
        auto [origin, path] = split_url(req.url);
        httplib::Client client(origin);
        configure(client, req.timeout);
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : req.headers) {
            if (k == "Content-Type")
                content_type = v;
            else
                headers.emplace(k, v);
        }
        auto res = client.Post(path, headers, req.body, content_type);
        if (!res)
            throw TransportError("POST " + req.url + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }

    HttpResponse get(const std::string& url, std::chrono::seconds timeout) override
    {
        auto [origin, path] = split_url(url);
        httplib::Client client(origin);
        configure(client, timeout);
        client.set_follow_location(true);
        auto res = client.Get(path);
        if (!res)
            throw TransportError("GET " + url + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }

private:
    static void configure(httplib::Client& client, std::chrono::seconds timeout)
    {
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
    }
};

} // namespace

std::unique_ptr<HttpTransport> make_network_transport()
{
    return std::make_unique<HttplibTransport>();
}

} // namespace covaug
