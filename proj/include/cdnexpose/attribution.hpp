#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/dns.hpp"
#include "cdnexpose/rdap.hpp"

namespace cdnexpose {

struct ProviderFingerprint {
    std::string provider;
    std::vector<std::string> cname_suffixes;
    std::vector<std::string> rdap_org_patterns;
    std::vector<std::string> ns_suffixes;
};

// The nine CDN providers an attribution may name.
const std::vector<std::string>& known_providers();

std::vector<ProviderFingerprint> fingerprints_from_json(const nlohmann::json& doc);
std::vector<ProviderFingerprint> load_fingerprints(const std::string& path);
// Built-in table; identical to data/fingerprints.json.
const std::vector<ProviderFingerprint>& default_fingerprints();

// host equals suffix or ends with "." + suffix (case-insensitive).
bool suffix_match(std::string_view host, std::string_view suffix);

struct DnsChain {
    std::string queried_host;
    std::vector<std::string> cname_links;
    std::vector<std::string> terminal_ips;
    std::vector<std::string> nameservers;
};

enum class AttributionBasis { cname, rdap, nameserver, none };

std::string_view to_string(AttributionBasis b);

struct CdnAttribution {
    std::string host;
    std::optional<std::string> provider;
    AttributionBasis basis = AttributionBasis::none;
    DnsChain chain;
    bool cached = false;
    // Resolver failures and cname/rdap conflicts.
    std::vector<std::string> diagnostics;

    bool is_cdn() const { return provider.has_value(); }
};

nlohmann::ordered_json to_json(const CdnAttribution& a);

// Lookup results keyed by (host or ip, lookup type) with a fixed TTL.
// Concurrent readers, exclusive writers.
class LookupCache {
public:
    using Clock = std::function<std::chrono::system_clock::time_point()>;

    explicit LookupCache(std::chrono::seconds ttl = std::chrono::hours(24),
                         Clock clock = [] { return std::chrono::system_clock::now(); });

    std::optional<nlohmann::json> get(const std::string& key, const std::string& type) const;
    void put(const std::string& key, const std::string& type, nlohmann::json value);
    std::size_t size() const;

    // On-disk store: JSON object of entries with absolute expiry seconds.
    void load(const std::string& path);
    void save(const std::string& path) const;

private:
    struct Entry {
        nlohmann::json value;
        std::chrono::system_clock::time_point expires;
    };
    std::chrono::seconds ttl_;
    Clock clock_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, Entry> entries_;
};

class CdnAttributor {
public:
    static constexpr std::size_t kMaxChainLinks = 10;
    static constexpr std::ptrdiff_t kDefaultInFlight = 16;

    CdnAttributor(Resolver& resolver, RdapSource& rdap,
                  std::vector<ProviderFingerprint> fingerprints = default_fingerprints(),
                  std::shared_ptr<LookupCache> cache = std::make_shared<LookupCache>(),
                  std::ptrdiff_t max_in_flight = kDefaultInFlight);

    // Follows CNAMEs (at most 10 links), collects A/AAAA of the terminal name
    // and NS records of the closest enclosing zone with NS records.
    // Throws NxDomain, ResolveTimeout or ChainTooLong.
    DnsChain resolve_chain(const std::string& host);

    // Registrant organisation of ip; cached. Throws PreconditionError,
    // RdapUnavailable or NoOrgFound.
    std::string rdap_lookup(const std::string& ip);

    // cname evidence first, then RDAP ownership of terminal IPs, otherwise
    // no provider. Never throws for resolver failures; they end up in
    // diagnostics with basis none.
    CdnAttribution attribute(const std::string& host);

    // Provider whose nameserver suffixes match the domain's NS set.
    // Throws ResolveTimeout.
    std::optional<std::string> dns_provider(const std::string& registrable_domain);

    const std::vector<ProviderFingerprint>& fingerprints() const { return fingerprints_; }
    const std::shared_ptr<LookupCache>& cache() const { return cache_; }

private:
    struct Stats {
        int misses = 0;
    };
    DnsAnswer cached_query(const std::string& name, RecordType type, Stats& stats);
    std::string cached_rdap(const std::string& ip, Stats& stats);
    DnsChain resolve_chain(const std::string& host, Stats& stats);
    std::vector<std::string> zone_nameservers(const std::string& host, Stats& stats);

    Resolver& resolver_;
    RdapSource& rdap_;
    std::vector<ProviderFingerprint> fingerprints_;
    std::shared_ptr<LookupCache> cache_;
    std::counting_semaphore<1024> in_flight_;
};

}  // namespace cdnexpose
