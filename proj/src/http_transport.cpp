// cpp-httplib is heavy; keep it confined to this translation unit.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "insight/backend.hpp"
#include "insight/errors.hpp"

namespace insight::backend {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

Transport make_http_transport(std::chrono::seconds timeout) {
    return [timeout](const std::string& url, const std::map<std::string, std::string>& headers,
                     const std::string& body) {
        const SplitUrl parts = split_url(url);
        httplib::Client client(parts.origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                h.emplace(k, v);
            }
        }
        auto res = client.Post(parts.path, h, body, content_type);
        if (!res) {
            throw NetworkError("POST " + url + " failed: " + httplib::to_string(res.error()));
        }
        return HttpResult{res->status, res->body};
    };
}

}  // namespace insight::backend
