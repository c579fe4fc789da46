#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

class RdapUnavailable : public Error {
public:
    using Error::Error;
};
class NoOrgFound : public Error {
public:
    using Error::Error;
};

// True for addresses routable on the public Internet: excludes private,
// loopback, link-local, CGNAT, multicast, documentation and reserved ranges.
bool is_global_unicast(const std::string& ip);

// Source of raw RDAP "ip network" objects (RFC 7483).
class RdapSource {
public:
    virtual ~RdapSource() = default;
    // Throws RdapUnavailable when no answer can be obtained.
    virtual nlohmann::json fetch(const std::string& ip) = 0;
};

// Queries the IANA bootstrap registry to locate the authoritative RIR, then
// fetches "<base>ip/<addr>". A fixed base URL skips the bootstrap step.
class HttpRdapSource final : public RdapSource {
public:
    explicit HttpRdapSource(std::optional<std::string> base_url = std::nullopt,
                            std::chrono::seconds timeout = std::chrono::seconds(10));

    nlohmann::json fetch(const std::string& ip) override;

    // Exposed for tests: picks the service URL for ip from a bootstrap file.
    static std::optional<std::string> select_service(const nlohmann::json& bootstrap,
                                                     const std::string& ip);

private:
    nlohmann::json get_json(const std::string& url);
    std::string base_for(const std::string& ip);

    std::optional<std::string> base_url_;
    std::chrono::seconds timeout_;
    std::mutex mutex_;
    std::map<std::string, nlohmann::json> bootstrap_;
};

// Recorded responses keyed by IP. An entry {"error": <status>} or a missing
// IP raises RdapUnavailable.
class FixtureRdapSource final : public RdapSource {
public:
    explicit FixtureRdapSource(nlohmann::json recorded);
    static FixtureRdapSource load(const std::string& path);

    nlohmann::json fetch(const std::string& ip) override;

private:
    nlohmann::json recorded_;
};

class RecordingRdapSource final : public RdapSource {
public:
    explicit RecordingRdapSource(RdapSource& inner) : inner_(inner) {}

    nlohmann::json fetch(const std::string& ip) override;
    nlohmann::json recorded() const;

private:
    RdapSource& inner_;
    mutable std::mutex mutex_;
    nlohmann::json recorded_ = nlohmann::json::object();
};

// Owner organisation of an RDAP network object: the registrant entity if one
// is present, otherwise the first named entity (searched depth-first). The
// vCard "org" property wins over "fn". Throws NoOrgFound.
std::string registrant_org(const nlohmann::json& response);

// Precondition check plus fetch plus extraction. Throws PreconditionError for
// non-global addresses.
std::string rdap_lookup(RdapSource& source, const std::string& ip);

}  // namespace cdnexpose
