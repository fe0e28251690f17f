#pragma once

#include <chrono>
#include <string>

#include <nlohmann/json.hpp>

namespace paravul {

/// POSTs a JSON body to an http:// URL and parses a JSON reply.
/// Transport failures and non-2xx statuses throw IoError; an unparsable
/// body throws ParseError. `auth_header` is "Name: value" or empty.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, std::chrono::milliseconds timeout,
                         const std::string& auth_header = {});

}  // namespace paravul
