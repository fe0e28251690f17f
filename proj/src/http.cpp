#include "paravul/http.hpp"

#include <httplib.h>

#include "paravul/error.hpp"

namespace paravul {

namespace {

struct Url {
    std::string origin;
    std::string path;
};

Url split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
        throw Error(ErrorKind::ConfigError, "endpoint must be an http:// URL: '" + url + "'");
    }
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, std::chrono::milliseconds timeout,
                         const std::string& auth_header) {
    const auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!auth_header.empty()) {
        const auto colon = auth_header.find(':');
        if (colon == std::string::npos) {
            throw Error(ErrorKind::ConfigError, "auth header must look like 'Name: value'");
        }
        auto value = auth_header.substr(colon + 1);
        value.erase(0, value.find_first_not_of(' '));
        headers.emplace(auth_header.substr(0, colon), value);
    }

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorKind::IoError, "request to " + url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorKind::IoError, "request to " + url + " returned status " + std::to_string(res->status));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, "reply from " + url + " is not JSON: " + e.what());
    }
}

}  // namespace paravul
