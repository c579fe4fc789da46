#include "cdnexpose/attribution.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>

#include "cdnexpose/log.hpp"

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string>& known_providers() {
    static const std::vector<std::string> providers{
        "Cloudflare", "Akamai", "Fastly", "Highwinds", "Edgecast",
        "Incapsula", "Quantil", "CDNetworks", "Limelight"};
    return providers;
}

std::vector<ProviderFingerprint> fingerprints_from_json(const json& doc) {
    if (!doc.is_array()) throw SchemaError("fingerprint file must be a JSON array");
    auto strings = [](const json& entry, const char* key) {
        std::vector<std::string> out;
        auto it = entry.find(key);
        if (it == entry.end() || !it->is_array())
            throw SchemaError(std::string("fingerprint: '") + key + "' must be an array");
        for (const auto& v : *it) {
            if (!v.is_string()) throw SchemaError(std::string("fingerprint: ") + key);
            out.push_back(normalize_name(v.get<std::string>()));
        }
        return out;
    };
    std::vector<ProviderFingerprint> out;
    for (const auto& entry : doc) {
        if (!entry.is_object() || !entry.contains("provider") || !entry["provider"].is_string())
            throw SchemaError("fingerprint entries need a 'provider' string");
        ProviderFingerprint fp;
        fp.provider = entry["provider"].get<std::string>();
        const auto& known = known_providers();
        if (std::find(known.begin(), known.end(), fp.provider) == known.end())
            throw InvariantError("fingerprint names unknown provider '" + fp.provider + "'");
        fp.cname_suffixes = strings(entry, "cname_suffixes");
        fp.ns_suffixes = strings(entry, "ns_suffixes");
        for (const auto& s : fp.cname_suffixes)
            if (!is_valid_hostname(s)) throw InvariantError("bad cname suffix '" + s + "'");
        for (const auto& s : fp.ns_suffixes)
            if (!is_valid_hostname(s)) throw InvariantError("bad ns suffix '" + s + "'");
        auto patterns = entry.find("rdap_org_patterns");
        if (patterns == entry.end() || !patterns->is_array())
            throw SchemaError("fingerprint: 'rdap_org_patterns' must be an array");
        for (const auto& p : *patterns) {
            std::string s = p.get<std::string>();
            for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            if (s.empty()) throw InvariantError("empty rdap_org_pattern");
            fp.rdap_org_patterns.push_back(std::move(s));
        }
        out.push_back(std::move(fp));
    }
    return out;
}

std::vector<ProviderFingerprint> load_fingerprints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fingerprint file " + path);
    try {
        return fingerprints_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SchemaError("fingerprints " + path + ": " + e.what());
    }
}

const std::vector<ProviderFingerprint>& default_fingerprints() {
    static const std::vector<ProviderFingerprint> table = [] {
        std::vector<ProviderFingerprint> t{
            {"Cloudflare", {"cdn.cloudflare.net", "cloudflare.net"}, {"cloudflare"},
             {"ns.cloudflare.com"}},
            {"Akamai",
             {"akamai.net", "akamaiedge.net", "akamaized.net", "akamaihd.net", "edgekey.net",
              "edgesuite.net", "akadns.net"},
             {"akamai"},
             {"akam.net", "akamaiedge.net"}},
            {"Fastly", {"fastly.net", "fastlylb.net", "fastly-edge.com"}, {"fastly"}, {}},
            {"Highwinds", {"hwcdn.net"}, {"highwinds"}, {}},
            {"Edgecast",
             {"edgecastcdn.net", "systemcdn.net", "transactcdn.com", "v1cdn.net", "v2cdn.net",
              "v3cdn.net", "v4cdn.net", "v5cdn.net"},
             {"edgecast"},
             {"edgecastdns.net"}},
            {"Incapsula", {"incapdns.net", "impervadns.net"}, {"incapsula"}, {}},
            {"Quantil", {"qtlcn.com", "qtlcdn.com", "qtlcdncn.com", "quantil.com"}, {"quantil"}, {}},
            {"CDNetworks", {"cdngc.net", "gccdn.net", "panthercdn.com", "cdnetworks.net"},
             {"cdnetworks"},
             {"cdnetdns.net"}},
            {"Limelight", {"llnwd.net", "lldns.net", "llnw.net", "llnwi.net"}, {"limelight"},
             {"lldns.net"}},
        };
        return t;
    }();
    return table;
}

bool suffix_match(std::string_view host, std::string_view suffix) {
    const std::string h = normalize_name(host);
    const std::string s = normalize_name(suffix);
    if (s.empty() || h.size() < s.size()) return false;
    if (h.compare(h.size() - s.size(), s.size(), s) != 0) return false;
    return h.size() == s.size() || h[h.size() - s.size() - 1] == '.';
}

std::string_view to_string(AttributionBasis b) {
    switch (b) {
        case AttributionBasis::cname: return "cname";
        case AttributionBasis::rdap: return "rdap";
        case AttributionBasis::nameserver: return "nameserver";
        case AttributionBasis::none: return "none";
    }
    return "none";
}

ordered_json to_json(const CdnAttribution& a) {
    ordered_json j;
    j["provider"] = a.provider ? ordered_json(*a.provider) : ordered_json(nullptr);
    j["basis"] = to_string(a.basis);
    j["host"] = a.host;
    j["chain"] = {{"cname_links", a.chain.cname_links},
                  {"terminal_ips", a.chain.terminal_ips},
                  {"nameservers", a.chain.nameservers}};
    j["cached"] = a.cached;
    j["diagnostics"] = a.diagnostics;
    return j;
}

// ---------------------------------------------------------------------------

LookupCache::LookupCache(std::chrono::seconds ttl, Clock clock)
    : ttl_(ttl), clock_(std::move(clock)) {}

std::optional<json> LookupCache::get(const std::string& key, const std::string& type) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key + "|" + type);
    if (it == entries_.end() || it->second.expires <= clock_()) return std::nullopt;
    return std::optional<json>(std::in_place, it->second.value);
}

void LookupCache::put(const std::string& key, const std::string& type, json value) {
    std::unique_lock lock(mutex_);
    entries_[key + "|" + type] = Entry{std::move(value), clock_() + ttl_};
}

std::size_t LookupCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void LookupCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) return;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error&) {
        log_warn("ignoring unreadable lookup cache " + path);
        return;
    }
    const auto now = clock_();
    std::unique_lock lock(mutex_);
    for (const auto& [key, entry] : doc.items()) {
        std::chrono::system_clock::time_point expires{
            std::chrono::seconds(entry.value("expires", std::int64_t{0}))};
        if (expires <= now) continue;
        entries_[key] = Entry{entry["value"], expires};
    }
}

void LookupCache::save(const std::string& path) const {
    json doc = json::object();
    {
        std::shared_lock lock(mutex_);
        for (const auto& [key, entry] : entries_) {
            doc[key] = {{"value", entry.value},
                        {"expires", std::chrono::duration_cast<std::chrono::seconds>(
                                        entry.expires.time_since_epoch())
                                        .count()}};
        }
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write lookup cache " + path);
    out << doc.dump() << '\n';
}

// ---------------------------------------------------------------------------

CdnAttributor::CdnAttributor(Resolver& resolver, RdapSource& rdap,
                             std::vector<ProviderFingerprint> fingerprints,
                             std::shared_ptr<LookupCache> cache, std::ptrdiff_t max_in_flight)
    : resolver_(resolver),
      rdap_(rdap),
      fingerprints_(std::move(fingerprints)),
      cache_(cache ? std::move(cache) : std::make_shared<LookupCache>()),
      in_flight_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)) {}

namespace {

// Releases the in-flight slot on every exit path.
class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<1024>& s_;
};

}  // namespace

DnsAnswer CdnAttributor::cached_query(const std::string& name, RecordType type, Stats& stats) {
    const std::string key = normalize_name(name);
    const std::string kind = "dns:" + std::string(to_string(type));
    if (auto hit = cache_->get(key, kind)) return answer_from_json(key, type, *hit);
    ++stats.misses;
    DnsAnswer answer;
    {
        SlotGuard slot(in_flight_);
        answer = resolver_.query(key, type);
    }
    DnsAnswer relevant{answer.rcode, {}};
    for (const auto& v : answer.values(key, type)) relevant.records.push_back({key, type, 0, v});
    cache_->put(key, kind, answer_to_json(relevant));
    return relevant;
}

std::string CdnAttributor::cached_rdap(const std::string& ip, Stats& stats) {
    if (!is_global_unicast(ip))
        throw PreconditionError("RDAP lookup requires a global unicast address: " + ip);
    if (auto hit = cache_->get(ip, "rdap")) {
        if (hit->contains("org")) return (*hit)["org"].get<std::string>();
        throw NoOrgFound("RDAP response for " + ip + " names no organisation");
    }
    ++stats.misses;
    json response;
    {
        SlotGuard slot(in_flight_);
        response = rdap_.fetch(ip);
    }
    try {
        std::string org = registrant_org(response);
        cache_->put(ip, "rdap", json{{"org", org}});
        return org;
    } catch (const NoOrgFound&) {
        cache_->put(ip, "rdap", json{{"no_org", true}});
        throw;
    }
}

std::string CdnAttributor::rdap_lookup(const std::string& ip) {
    Stats stats;
    return cached_rdap(ip, stats);
}

std::vector<std::string> CdnAttributor::zone_nameservers(const std::string& host, Stats& stats) {
    std::string domain = normalize_name(host);
    while (std::count(domain.begin(), domain.end(), '.') >= 1) {
        DnsAnswer ns = cached_query(domain, RecordType::NS, stats);
        auto values = ns.values(domain, RecordType::NS);
        if (!values.empty()) return values;
        domain = domain.substr(domain.find('.') + 1);
    }
    return {};
}

DnsChain CdnAttributor::resolve_chain(const std::string& host, Stats& stats) {
    if (!is_valid_hostname(host)) throw PreconditionError("invalid hostname '" + host + "'");
    DnsChain chain;
    chain.queried_host = normalize_name(host);
    std::set<std::string> seen{chain.queried_host};
    std::string current = chain.queried_host;
    while (true) {
        DnsAnswer answer = cached_query(current, RecordType::CNAME, stats);
        if (answer.rcode == kRcodeNxDomain) throw NxDomain(current + ": NXDOMAIN");
        if (answer.rcode != kRcodeNoError)
            throw DnsError(current + ": rcode " + std::to_string(answer.rcode));
        auto targets = answer.values(current, RecordType::CNAME);
        if (targets.empty()) break;
        if (chain.cname_links.size() == kMaxChainLinks)
            throw ChainTooLong(chain.queried_host + ": CNAME chain exceeds " +
                               std::to_string(kMaxChainLinks) + " links");
        const std::string next = normalize_name(targets.front());
        if (!seen.insert(next).second)
            throw ChainTooLong(chain.queried_host + ": CNAME loop at " + next);
        chain.cname_links.push_back(next);
        current = next;
    }
    for (auto type : {RecordType::A, RecordType::AAAA}) {
        DnsAnswer answer = cached_query(current, type, stats);
        if (answer.rcode == kRcodeNxDomain) throw NxDomain(current + ": NXDOMAIN");
        for (auto& ip : answer.values(current, type)) chain.terminal_ips.push_back(std::move(ip));
    }
    if (chain.terminal_ips.empty()) throw NxDomain(current + ": no address records");
    try {
        chain.nameservers = zone_nameservers(chain.queried_host, stats);
    } catch (const Error& e) {
        log_debug(std::string("nameserver lookup failed: ") + e.what());
    }
    return chain;
}

DnsChain CdnAttributor::resolve_chain(const std::string& host) {
    Stats stats;
    return resolve_chain(host, stats);
}

CdnAttribution CdnAttributor::attribute(const std::string& host) {
    Stats stats;
    CdnAttribution a;
    a.host = normalize_name(host);
    try {
        a.chain = resolve_chain(host, stats);
    } catch (const Error& e) {
        a.chain.queried_host = a.host;
        a.diagnostics.emplace_back(std::string("resolve: ") + e.what());
        a.cached = stats.misses == 0;
        return a;
    }

    std::optional<std::string> by_cname;
    std::vector<std::string> names{a.chain.queried_host};
    names.insert(names.end(), a.chain.cname_links.begin(), a.chain.cname_links.end());
    for (const auto& name : names) {
        for (const auto& fp : fingerprints_) {
            if (std::any_of(fp.cname_suffixes.begin(), fp.cname_suffixes.end(),
                            [&](const std::string& s) { return suffix_match(name, s); })) {
                by_cname = fp.provider;
                break;
            }
        }
        if (by_cname) break;
    }

    std::optional<std::string> by_rdap;
    for (const auto& ip : a.chain.terminal_ips) {
        std::string org;
        try {
            org = cached_rdap(ip, stats);
        } catch (const Error& e) {
            a.diagnostics.emplace_back(std::string("rdap: ") + e.what());
            continue;
        }
        std::string lowered = org;
        for (auto& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        for (const auto& fp : fingerprints_) {
            if (std::any_of(fp.rdap_org_patterns.begin(), fp.rdap_org_patterns.end(),
                            [&](const std::string& p) {
                                return lowered.find(p) != std::string::npos;
                            })) {
                by_rdap = fp.provider;
                break;
            }
        }
        if (by_rdap) break;
    }

    if (by_cname) {
        a.provider = by_cname;
        a.basis = AttributionBasis::cname;
        if (by_rdap && *by_rdap != *by_cname) {
            std::string msg = "conflict: cname says " + *by_cname + ", rdap says " + *by_rdap +
                              "; cname wins";
            log_warn(a.host + ": " + msg);
            a.diagnostics.push_back(std::move(msg));
        }
    } else if (by_rdap) {
        a.provider = by_rdap;
        a.basis = AttributionBasis::rdap;
    }
    a.cached = stats.misses == 0;
    return a;
}

std::optional<std::string> CdnAttributor::dns_provider(const std::string& registrable_domain) {
    if (!is_valid_hostname(registrable_domain))
        throw PreconditionError("invalid domain '" + registrable_domain + "'");
    Stats stats;
    const auto nameservers = zone_nameservers(registrable_domain, stats);
    for (const auto& fp : fingerprints_)
        for (const auto& ns : nameservers)
            for (const auto& suffix : fp.ns_suffixes)
                if (suffix_match(ns, suffix)) return fp.provider;
    return std::nullopt;
}

}  // namespace cdnexpose
