#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/attribution.hpp"
#include "cdnexpose/capture.hpp"
#include "cdnexpose/credentials.hpp"

namespace cdnexpose {

// Scan order of find_password.
enum class PasswordEncoding {
    plaintext,
    url_encoded,
    base64_std,
    base64_urlsafe,
    base64_nopad,
    json_embedded,
};

inline constexpr PasswordEncoding kAllEncodings[] = {
    PasswordEncoding::plaintext,      PasswordEncoding::url_encoded,
    PasswordEncoding::base64_std,     PasswordEncoding::base64_urlsafe,
    PasswordEncoding::base64_nopad,   PasswordEncoding::json_embedded,
};

std::string_view to_string(PasswordEncoding e);
std::optional<PasswordEncoding> password_encoding_from_string(std::string_view s);

// Reporting bucket: plaintext-like or base64-like.
enum class EncodingBucket { plaintext, base64 };
EncodingBucket bucket_of(PasswordEncoding e);

enum class EvidenceLocation { body, url };

struct ExposureEvidence {
    std::size_t request_index = 0;
    PasswordEncoding encoding = PasswordEncoding::plaintext;
    EvidenceLocation location = EvidenceLocation::body;
    std::size_t byte_offset = 0;
    std::size_t length = 0;
    std::optional<std::string> matched_field;

    bool operator==(const ExposureEvidence&) const = default;
};

// Encoded form of the password as it is written in the request, e.g. the
// base64 text. Used to produce test bodies and fixtures.
std::string encode_password(std::string_view password, PasswordEncoding encoding);

// Decodes the matched bytes back to the password per the evidence encoding;
// nullopt when the bytes are not a valid instance of the encoding.
std::optional<std::string> decode_evidence(PasswordEncoding encoding, std::string_view matched);

// The bytes an evidence object points at inside its request.
std::string_view evidence_bytes(const CapturedRequest& request, const ExposureEvidence& evidence);

// Searches the body (part by part for multipart/form-data) and then the URL
// query string for the password under each encoding in scan order; the first
// hit wins. Base64 matches cover only the encoding of the whole password.
std::optional<ExposureEvidence> find_password(const CapturedRequest& request,
                                              std::string_view password,
                                              std::size_t request_index = 0);
std::optional<ExposureEvidence> find_password(const CapturedRequest& request,
                                              const Credentials& creds,
                                              std::size_t request_index = 0);

enum class VerdictKind { PasswordExposed, PasswordEncrypted, LoginNotFound, NoHTTPS, NotCdnTerminated };

std::string_view to_string(VerdictKind k);
std::optional<VerdictKind> verdict_kind_from_string(std::string_view s);

struct SiteVerdict {
    VerdictKind kind = VerdictKind::LoginNotFound;
    std::optional<ExposureEvidence> evidence;
    std::optional<std::string> attributed_provider;
    // Set when a failure, not an observation, produced the verdict.
    std::optional<std::string> error;

    bool operator==(const SiteVerdict&) const = default;
};

nlohmann::ordered_json to_json(const SiteVerdict& v);
SiteVerdict verdict_from_json(const nlohmann::json& j);

class MissingAttribution : public Error {
public:
    using Error::Error;
};

using AttributionMap = std::map<std::string, CdnAttribution>;

// A request counts as credential-bearing when it carries the password in
// any encoding, carries the account identifier, or is a non-GET request with
// a body.
bool is_credential_bearing(const CapturedRequest& request, const Credentials& creds);

SiteVerdict classify_site(const SessionOutcome& outcome, const AttributionMap& attributions,
                          bool https, const Credentials& creds);

}  // namespace cdnexpose
