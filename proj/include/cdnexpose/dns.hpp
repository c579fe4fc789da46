#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

class NxDomain : public Error {
public:
    using Error::Error;
};
class ResolveTimeout : public Error {
public:
    using Error::Error;
};
class ChainTooLong : public Error {
public:
    using Error::Error;
};
class DnsError : public Error {
public:
    using Error::Error;
};

enum class RecordType : std::uint16_t { A = 1, NS = 2, CNAME = 5, AAAA = 28 };

std::string_view to_string(RecordType t);
std::optional<RecordType> record_type_from_string(std::string_view s);

inline constexpr int kRcodeNoError = 0;
inline constexpr int kRcodeServFail = 2;
inline constexpr int kRcodeNxDomain = 3;

struct DnsRecord {
    std::string name;
    RecordType type = RecordType::A;
    std::uint32_t ttl = 0;
    // Dotted address for A/AAAA, target name for CNAME/NS.
    std::string data;
    bool operator==(const DnsRecord&) const = default;
};

struct DnsAnswer {
    int rcode = kRcodeNoError;
    std::vector<DnsRecord> records;

    // Records of the given type owned by name.
    std::vector<std::string> values(std::string_view name, RecordType type) const;
    bool operator==(const DnsAnswer&) const = default;
};

// Lowercase, no trailing dot.
std::string normalize_name(std::string_view name);

// Syntax check per RFC 1123 labels, also admitting "_" (seen in real CNAME
// targets); rejects empty labels ("a..b").
bool is_valid_hostname(std::string_view host);

namespace dns_wire {

struct Question {
    std::string name;
    std::uint16_t type = 0;
};

struct Message {
    std::uint16_t id = 0;
    bool response = false;
    bool truncated = false;
    int rcode = 0;
    std::vector<Question> questions;
    std::vector<DnsRecord> answers;
};

std::vector<std::uint8_t> encode_query(std::uint16_t id, std::string_view name, RecordType type);
std::vector<std::uint8_t> encode_response(std::uint16_t id, const Question& question,
                                          const DnsAnswer& answer);
// Throws DnsError on truncated or malformed packets. Unknown record types in
// the answer section are skipped.
Message decode(std::span<const std::uint8_t> packet);

}  // namespace dns_wire

class Resolver {
public:
    virtual ~Resolver() = default;
    // Throws ResolveTimeout when no response arrives.
    virtual DnsAnswer query(const std::string& name, RecordType type) = 0;
};

// Stub resolver speaking DNS over UDP to one recursive server.
class UdpResolver final : public Resolver {
public:
    // endpoint is "ip", "ip:port" or "[ipv6]:port".
    explicit UdpResolver(std::string endpoint,
                         std::chrono::milliseconds timeout = std::chrono::milliseconds(2000),
                         int attempts = 2);
    // First nameserver listed in /etc/resolv.conf.
    static UdpResolver system();

    DnsAnswer query(const std::string& name, RecordType type) override;
    const std::string& endpoint() const { return endpoint_; }

private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
    int attempts_;
};

// Answers from a recorded JSON map "name TYPE" -> {"rcode", "records", "ttl"}.
// A name with no entry at all is NXDOMAIN; a known name lacking the type is
// NODATA. rcode "TIMEOUT" raises ResolveTimeout.
class FixtureResolver final : public Resolver {
public:
    explicit FixtureResolver(nlohmann::json recorded);
    static FixtureResolver load(const std::string& path);

    DnsAnswer query(const std::string& name, RecordType type) override;

private:
    nlohmann::json recorded_;
    std::map<std::string, int> names_;
};

// Passes queries through and keeps every response for later replay.
class RecordingResolver final : public Resolver {
public:
    explicit RecordingResolver(Resolver& inner) : inner_(inner) {}

    DnsAnswer query(const std::string& name, RecordType type) override;
    nlohmann::json recorded() const;

private:
    Resolver& inner_;
    mutable std::mutex mutex_;
    nlohmann::json recorded_ = nlohmann::json::object();
};

nlohmann::json answer_to_json(const DnsAnswer& answer);
DnsAnswer answer_from_json(const std::string& name, RecordType type, const nlohmann::json& j);

}  // namespace cdnexpose
