#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

using HeaderList = std::vector<std::pair<std::string, std::string>>;

// One outbound HTTP request observed while a login was submitted.
struct CapturedRequest {
    std::string url;
    std::string method;
    HeaderList headers;
    std::string body;
    std::string destination_host;
    bool tls = false;
    std::string timestamp;  // RFC 3339, UTC

    std::optional<std::string_view> header(std::string_view name) const;
    bool operator==(const CapturedRequest&) const = default;
};

// Builds a request whose destination_host and tls flag derive from url.
CapturedRequest make_request(std::string url, std::string method, HeaderList headers,
                             std::string body, std::string timestamp);

// Lowercased host component of an absolute URL; empty when absent.
std::string host_of(std::string_view url);
std::string scheme_of(std::string_view url);

// Query string of a URL (after '?', before '#') and its offset in the URL.
std::pair<std::size_t, std::string_view> query_of(std::string_view url);

nlohmann::ordered_json to_json(const CapturedRequest& r);
// Throws SchemaError on a malformed document or an inconsistent host.
CapturedRequest request_from_json(const nlohmann::json& j);

enum class SkipReason { http_auth, captcha, existence_check, timeout, error };

std::string_view to_string(SkipReason r);
std::optional<SkipReason> skip_reason_from_string(std::string_view s);

struct SessionOutcome {
    std::string site;
    bool submitted = false;
    std::vector<CapturedRequest> requests;
    std::optional<SkipReason> skip_reason;
    std::string diagnostic;
};

std::string utc_now_rfc3339();

}  // namespace cdnexpose
