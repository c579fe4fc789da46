#include "cdnexpose/capture.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>

#include "cdnexpose/encoding.hpp"

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

}  // namespace

std::optional<std::string_view> CapturedRequest::header(std::string_view name) const {
    for (const auto& [k, v] : headers)
        if (iequals(k, name)) return std::string_view(v);
    return std::nullopt;
}

std::string scheme_of(std::string_view url) {
    auto pos = url.find("://");
    if (pos == std::string_view::npos) return {};
    std::string s(url.substr(0, pos));
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string host_of(std::string_view url) {
    auto pos = url.find("://");
    if (pos == std::string_view::npos) return {};
    std::string_view rest = url.substr(pos + 3);
    rest = rest.substr(0, rest.find_first_of("/?#"));
    if (auto at = rest.rfind('@'); at != std::string_view::npos) rest = rest.substr(at + 1);
    std::string_view host;
    if (!rest.empty() && rest.front() == '[') {
        auto close = rest.find(']');
        host = rest.substr(1, close == std::string_view::npos ? rest.size() - 1 : close - 1);
    } else {
        host = rest.substr(0, rest.find(':'));
    }
    std::string out(host);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::pair<std::size_t, std::string_view> query_of(std::string_view url) {
    auto q = url.find('?');
    if (q == std::string_view::npos) return {url.size(), {}};
    auto end = url.find('#', q);
    if (end == std::string_view::npos) end = url.size();
    return {q + 1, url.substr(q + 1, end - q - 1)};
}

CapturedRequest make_request(std::string url, std::string method, HeaderList headers,
                             std::string body, std::string timestamp) {
    CapturedRequest r;
    r.destination_host = host_of(url);
    r.tls = scheme_of(url) == "https";
    r.url = std::move(url);
    r.method = std::move(method);
    r.headers = std::move(headers);
    r.body = std::move(body);
    r.timestamp = std::move(timestamp);
    return r;
}

ordered_json to_json(const CapturedRequest& r) {
    ordered_json j;
    j["url"] = r.url;
    j["method"] = r.method;
    ordered_json headers = ordered_json::array();
    for (const auto& [k, v] : r.headers) headers.push_back({k, v});
    j["headers"] = std::move(headers);
    j["body"] = base64_encode(r.body);
    j["destination_host"] = r.destination_host;
    j["tls"] = r.tls;
    j["timestamp"] = r.timestamp;
    return j;
}

CapturedRequest request_from_json(const json& j) {
    auto str = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string())
            throw SchemaError(std::string("request: '") + key + "' must be a string");
        return it->get<std::string>();
    };
    if (!j.is_object()) throw SchemaError("request must be a JSON object");
    CapturedRequest r;
    r.url = str("url");
    r.method = str("method");
    auto headers = j.find("headers");
    if (headers == j.end() || !headers->is_array())
        throw SchemaError("request: 'headers' must be an array");
    for (const auto& h : *headers) {
        if (!h.is_array() || h.size() != 2 || !h[0].is_string() || !h[1].is_string())
            throw SchemaError("request: header entries must be [name, value] pairs");
        r.headers.emplace_back(h[0].get<std::string>(), h[1].get<std::string>());
    }
    auto body = base64_decode(str("body"));
    if (!body) throw SchemaError("request: body is not valid base64");
    r.body = std::move(*body);
    r.destination_host = str("destination_host");
    if (r.destination_host != host_of(r.url))
        throw SchemaError("request: destination_host does not match url host");
    auto tls = j.find("tls");
    if (tls == j.end() || !tls->is_boolean()) throw SchemaError("request: 'tls' must be boolean");
    r.tls = tls->get<bool>();
    r.timestamp = str("timestamp");
    return r;
}

std::string_view to_string(SkipReason r) {
    switch (r) {
        case SkipReason::http_auth: return "http_auth";
        case SkipReason::captcha: return "captcha";
        case SkipReason::existence_check: return "existence_check";
        case SkipReason::timeout: return "timeout";
        case SkipReason::error: return "error";
    }
    return "error";
}

std::optional<SkipReason> skip_reason_from_string(std::string_view s) {
    for (auto r : {SkipReason::http_auth, SkipReason::captcha, SkipReason::existence_check,
                   SkipReason::timeout, SkipReason::error})
        if (to_string(r) == s) return r;
    return std::nullopt;
}

std::string utc_now_rfc3339() {
    using namespace std::chrono;
    auto now = system_clock::now();
    std::time_t t = system_clock::to_time_t(now);
    auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(ms));
    return buf;
}

}  // namespace cdnexpose
