#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdnexpose/attribution.hpp"
#include "cdnexpose/report.hpp"
#include "cdnexpose/session.hpp"

namespace cdnexpose {

struct RankedDomain {
    std::int64_t rank = 0;
    std::string domain;
};

// `rank,domain` lines; blank lines and a leading header are skipped.
// Throws ConfigError on malformed lines, duplicate ranks or bad names.
std::vector<RankedDomain> parse_input_list(std::istream& in);
std::vector<RankedDomain> load_input_list(const std::string& path);

enum class HttpsStatus { enabled, disabled, unresolvable };

// TLS handshake with certificate and name verification on port 443 of the
// apex, then of www. `host` receives the name that answered.
HttpsStatus https_check(const std::string& domain, std::chrono::milliseconds timeout,
                        std::string* host = nullptr);

struct ScanConfig {
    std::string input_list;
    std::string output_dir;
    int workers = 4;
    // Replay bundles and recorded lookups instead of touching the network.
    std::optional<std::string> fixtures_dir;
    std::optional<std::string> lexicon_path;
    std::optional<std::string> weights_path;
    std::optional<std::string> fingerprints_path;
    std::optional<std::string> category_map_path;
    SessionConfig session;
    std::chrono::seconds site_budget{90};
    // Live lookups: DNS server "ip[:port]" (default: resolv.conf) and a fixed
    // RDAP base URL (default: IANA bootstrap).
    std::optional<std::string> resolver;
    std::optional<std::string> rdap_base;
    // Recorded dns.json/rdap.json to use instead of live lookups.
    std::optional<std::string> lookups_dir;
    // Where to write the lookups a live scan performed.
    std::optional<std::string> record_lookups_dir;

    // Throws ConfigError.
    void validate() const;
};

// Everything a site contributed, before it is folded into a SiteRecord.
struct SiteObservation {
    RankedDomain site;
    HttpsStatus https = HttpsStatus::disabled;
    std::string landing_url;
    TrialResult trial;
    std::optional<Credentials> creds;
    std::optional<std::string> category;
    std::optional<std::string> error;
};

// Attribution, exposure classification and record assembly. Live and
// replayed observations go through the same function.
SiteRecord assemble_record(const SiteObservation& obs, CdnAttributor& attributor);

struct ScanSummary {
    std::vector<SiteRecord> records;
    std::size_t failures = 0;
    // Largest number of submissions made on any one domain.
    int max_submissions_per_site = 0;
    // Sites where the planner asked for a credential submission.
    std::size_t attempted_submissions = 0;
};

// Runs the pipeline over the input list and writes the reports into
// output_dir. Per-site problems land in the records; ConfigError aborts.
ScanSummary run_scan(const ScanConfig& config);

// Root of the bundle for domain inside a fixtures directory.
std::string bundle_path(const std::string& fixtures_dir, const std::string& domain);

}  // namespace cdnexpose
