#include "cdnexpose/rdap.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <arpa/inet.h>
#include <httplib.h>

namespace cdnexpose {

using nlohmann::json;

namespace {

struct Cidr {
    int family = AF_INET;
    std::array<unsigned char, 16> addr{};
    int prefix = 0;
};

std::optional<std::array<unsigned char, 16>> parse_ip(const std::string& ip, int& family) {
    std::array<unsigned char, 16> out{};
    if (inet_pton(AF_INET, ip.c_str(), out.data()) == 1) {
        family = AF_INET;
        return out;
    }
    if (inet_pton(AF_INET6, ip.c_str(), out.data()) == 1) {
        family = AF_INET6;
        return out;
    }
    return std::nullopt;
}

std::optional<Cidr> parse_cidr(const std::string& text) {
    auto slash = text.find('/');
    if (slash == std::string::npos) return std::nullopt;
    Cidr c;
    auto addr = parse_ip(text.substr(0, slash), c.family);
    if (!addr) return std::nullopt;
    c.addr = *addr;
    c.prefix = std::stoi(text.substr(slash + 1));
    return c;
}

bool cidr_contains(const Cidr& c, int family, const std::array<unsigned char, 16>& addr) {
    if (c.family != family) return false;
    int bits = c.prefix;
    for (std::size_t i = 0; bits > 0; ++i, bits -= 8) {
        const unsigned char mask =
            bits >= 8 ? 0xFF : static_cast<unsigned char>(0xFF << (8 - bits));
        if ((c.addr[i] & mask) != (addr[i] & mask)) return false;
    }
    return true;
}

struct UrlParts {
    std::string origin;
    std::string path;
};

UrlParts split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("not an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

bool is_global_unicast(const std::string& ip) {
    int family = 0;
    auto addr = parse_ip(ip, family);
    if (!addr) return false;
    static const std::array<const char*, 15> v4_blocked{
        "0.0.0.0/8",     "10.0.0.0/8",     "100.64.0.0/10",   "127.0.0.0/8",
        "169.254.0.0/16", "172.16.0.0/12", "192.0.0.0/24",    "192.0.2.0/24",
        "192.168.0.0/16", "198.18.0.0/15", "198.51.100.0/24", "203.0.113.0/24",
        "224.0.0.0/4",   "240.0.0.0/4",    "255.255.255.255/32"};
    static const std::array<const char*, 7> v6_blocked{
        "::/128", "::1/128", "fc00::/7", "fe80::/10", "ff00::/8", "2001:db8::/32", "::ffff:0:0/96"};
    if (family == AF_INET) {
        for (const char* block : v4_blocked)
            if (cidr_contains(*parse_cidr(block), family, *addr)) return false;
        return true;
    }
    for (const char* block : v6_blocked)
        if (cidr_contains(*parse_cidr(block), family, *addr)) return false;
    // Global unicast space is 2000::/3.
    return ((*addr)[0] & 0xE0) == 0x20;
}

HttpRdapSource::HttpRdapSource(std::optional<std::string> base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    if (base_url_ && !base_url_->empty() && base_url_->back() != '/') *base_url_ += '/';
}

json HttpRdapSource::get_json(const std::string& url) {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(parts.path, {{"Accept", "application/rdap+json, application/json"}});
    if (!res) throw RdapUnavailable("RDAP request to " + url + " failed: " +
                                    httplib::to_string(res.error()));
    if (res->status != 200)
        throw RdapUnavailable("RDAP " + url + " returned HTTP " + std::to_string(res->status));
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw RdapUnavailable("RDAP " + url + " returned invalid JSON");
    }
}

std::optional<std::string> HttpRdapSource::select_service(const json& bootstrap,
                                                          const std::string& ip) {
    int family = 0;
    auto addr = parse_ip(ip, family);
    if (!addr) return std::nullopt;
    std::optional<std::string> best;
    int best_prefix = -1;
    for (const auto& service : bootstrap.value("services", json::array())) {
        if (!service.is_array() || service.size() < 2) continue;
        for (const auto& range : service[0]) {
            auto cidr = parse_cidr(range.get<std::string>());
            if (!cidr || !cidr_contains(*cidr, family, *addr) || cidr->prefix <= best_prefix)
                continue;
            std::optional<std::string> url;
            for (const auto& u : service[1]) {
                const auto s = u.get<std::string>();
                if (!url || s.rfind("https://", 0) == 0) url = s;
            }
            if (url) {
                best = url;
                best_prefix = cidr->prefix;
            }
        }
    }
    if (best && best->back() != '/') *best += '/';
    return best;
}

std::string HttpRdapSource::base_for(const std::string& ip) {
    if (base_url_) return *base_url_;
    const std::string registry = ip.find(':') == std::string::npos
                                     ? "https://data.iana.org/rdap/ipv4.json"
                                     : "https://data.iana.org/rdap/ipv6.json";
    json bootstrap;
    {
        std::lock_guard lock(mutex_);
        auto it = bootstrap_.find(registry);
        if (it != bootstrap_.end()) bootstrap = it->second;
    }
    if (bootstrap.is_null()) {
        bootstrap = get_json(registry);
        std::lock_guard lock(mutex_);
        bootstrap_[registry] = bootstrap;
    }
    auto base = select_service(bootstrap, ip);
    if (!base) throw RdapUnavailable("no RDAP service covers " + ip);
    return *base;
}

json HttpRdapSource::fetch(const std::string& ip) { return get_json(base_for(ip) + "ip/" + ip); }

FixtureRdapSource::FixtureRdapSource(json recorded) : recorded_(std::move(recorded)) {
    if (!recorded_.is_object()) throw SchemaError("RDAP fixture must be a JSON object");
}

FixtureRdapSource FixtureRdapSource::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open RDAP fixture " + path);
    try {
        return FixtureRdapSource(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SchemaError("RDAP fixture " + path + ": " + e.what());
    }
}

json FixtureRdapSource::fetch(const std::string& ip) {
    auto it = recorded_.find(ip);
    if (it == recorded_.end()) throw RdapUnavailable("no recorded RDAP response for " + ip);
    if (it->is_object() && it->contains("error"))
        throw RdapUnavailable("recorded RDAP error for " + ip);
    return *it;
}

json RecordingRdapSource::fetch(const std::string& ip) {
    try {
        json response = inner_.fetch(ip);
        std::lock_guard lock(mutex_);
        recorded_[ip] = response;
        return response;
    } catch (const RdapUnavailable& e) {
        std::lock_guard lock(mutex_);
        recorded_[ip] = json{{"error", e.what()}};
        throw;
    }
}

json RecordingRdapSource::recorded() const {
    std::lock_guard lock(mutex_);
    return recorded_;
}

namespace {

std::optional<std::string> vcard_name(const json& entity) {
    auto card = entity.find("vcardArray");
    if (card == entity.end() || !card->is_array() || card->size() < 2 || !(*card)[1].is_array())
        return std::nullopt;
    std::optional<std::string> fn;
    for (const auto& prop : (*card)[1]) {
        if (!prop.is_array() || prop.size() < 4 || !prop[0].is_string()) continue;
        const auto name = prop[0].get<std::string>();
        std::string value;
        if (prop[3].is_string()) value = prop[3].get<std::string>();
        else if (prop[3].is_array() && !prop[3].empty() && prop[3][0].is_string())
            value = prop[3][0].get<std::string>();
        if (value.empty()) continue;
        if (name == "org") return value;
        if (name == "fn" && !fn) fn = value;
    }
    return fn;
}

bool has_role(const json& entity, const char* role) {
    auto roles = entity.find("roles");
    if (roles == entity.end() || !roles->is_array()) return false;
    for (const auto& r : *roles)
        if (r.is_string() && r.get<std::string>() == role) return true;
    return false;
}

void collect_entities(const json& node, std::vector<const json*>& out) {
    auto entities = node.find("entities");
    if (entities == node.end() || !entities->is_array()) return;
    for (const auto& e : *entities) {
        if (!e.is_object()) continue;
        out.push_back(&e);
        collect_entities(e, out);
    }
}

}  // namespace

std::string registrant_org(const json& response) {
    if (!response.is_object()) throw NoOrgFound("RDAP response is not an object");
    std::vector<const json*> entities;
    collect_entities(response, entities);
    for (const json* e : entities)
        if (has_role(*e, "registrant"))
            if (auto name = vcard_name(*e)) return *name;
    for (const json* e : entities)
        if (auto name = vcard_name(*e)) return *name;
    throw NoOrgFound("RDAP response names no organisation");
}

std::string rdap_lookup(RdapSource& source, const std::string& ip) {
    if (!is_global_unicast(ip))
        throw PreconditionError("RDAP lookup requires a global unicast address: " + ip);
    return registrant_org(source.fetch(ip));
}

}  // namespace cdnexpose
