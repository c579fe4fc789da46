#include "cdnexpose/exposure.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "cdnexpose/encoding.hpp"

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(PasswordEncoding e) {
    switch (e) {
        case PasswordEncoding::plaintext: return "plaintext";
        case PasswordEncoding::url_encoded: return "url-encoded";
        case PasswordEncoding::base64_std: return "base64-std";
        case PasswordEncoding::base64_urlsafe: return "base64-urlsafe";
        case PasswordEncoding::base64_nopad: return "base64-nopad";
        case PasswordEncoding::json_embedded: return "json-embedded";
    }
    return "?";
}

std::optional<PasswordEncoding> password_encoding_from_string(std::string_view s) {
    for (auto e : kAllEncodings)
        if (to_string(e) == s) return e;
    return std::nullopt;
}

EncodingBucket bucket_of(PasswordEncoding e) {
    switch (e) {
        case PasswordEncoding::base64_std:
        case PasswordEncoding::base64_urlsafe:
        case PasswordEncoding::base64_nopad: return EncodingBucket::base64;
        default: return EncodingBucket::plaintext;
    }
}

std::string encode_password(std::string_view password, PasswordEncoding encoding) {
    switch (encoding) {
        case PasswordEncoding::plaintext: return std::string(password);
        case PasswordEncoding::url_encoded: return form_encode(password);
        case PasswordEncoding::base64_std: return base64_encode(password);
        case PasswordEncoding::base64_urlsafe:
            return base64_encode(password, Base64Alphabet::url_safe);
        case PasswordEncoding::base64_nopad:
            return base64_encode(password, Base64Alphabet::standard, false);
        case PasswordEncoding::json_embedded: return json_escape(password);
    }
    return std::string(password);
}

std::optional<std::string> decode_evidence(PasswordEncoding encoding, std::string_view matched) {
    switch (encoding) {
        case PasswordEncoding::plaintext: return std::string(matched);
        case PasswordEncoding::url_encoded: return percent_decode(matched, true);
        case PasswordEncoding::base64_std:
        case PasswordEncoding::base64_urlsafe:
        case PasswordEncoding::base64_nopad: {
            auto text = percent_decode(matched, false);
            if (!text) return std::nullopt;
            return base64_decode(*text);
        }
        case PasswordEncoding::json_embedded: return json_unescape(matched);
    }
    return std::nullopt;
}

std::string_view evidence_bytes(const CapturedRequest& request, const ExposureEvidence& evidence) {
    std::string_view source = evidence.location == EvidenceLocation::body
                                  ? std::string_view(request.body)
                                  : std::string_view(request.url);
    if (evidence.byte_offset > source.size()) return {};
    return source.substr(evidence.byte_offset, evidence.length);
}

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

enum class RegionSyntax { form, json, opaque };

struct Region {
    EvidenceLocation location = EvidenceLocation::body;
    std::size_t offset = 0;
    std::string_view data;
    std::optional<std::string> field;
    RegionSyntax syntax = RegionSyntax::opaque;
};

struct Match {
    std::size_t start = 0;
    std::size_t length = 0;
};

// Matches `expected` at data[i..] where any byte may also appear as a %XX
// escape. With form semantics '+' stands for a space and literal '+'/'%' are
// rejected so the span decodes unambiguously.
std::optional<std::size_t> match_percent(std::string_view data, std::size_t i,
                                         std::string_view expected, bool form, int& escapes) {
    std::size_t j = i;
    escapes = 0;
    for (char want : expected) {
        if (j >= data.size()) return std::nullopt;
        const char c = data[j];
        if (c == '%') {
            if (j + 2 >= data.size()) return std::nullopt;
            int hi = hex_value(data[j + 1]);
            int lo = hex_value(data[j + 2]);
            if (hi < 0 || lo < 0 || static_cast<char>(hi * 16 + lo) != want) return std::nullopt;
            j += 3;
            ++escapes;
        } else if (form && c == '+') {
            if (want != ' ') return std::nullopt;
            ++j;
            ++escapes;
        } else if (c == want) {
            ++j;
        } else {
            return std::nullopt;
        }
    }
    return j - i;
}

// Matches the password inside JSON string content, honouring escapes.
std::optional<std::size_t> match_json(std::string_view data, std::size_t i,
                                      std::string_view expected, int& escapes) {
    std::size_t j = i;
    std::size_t k = 0;
    escapes = 0;
    while (k < expected.size()) {
        if (j >= data.size()) return std::nullopt;
        const char c = data[j];
        if (c == '"') return std::nullopt;
        if (c != '\\') {
            if (c != expected[k]) return std::nullopt;
            ++j;
            ++k;
            continue;
        }
        // Decode one escape sequence (a surrogate pair counts as one).
        std::size_t len = 2;
        if (j + 1 < data.size() && data[j + 1] == 'u') {
            len = 6;
            if (j + 6 <= data.size()) {
                int hi = 0;
                for (int t = 0; t < 4; ++t) hi = hi * 16 + std::max(0, hex_value(data[j + 2 + t]));
                if (hi >= 0xD800 && hi <= 0xDBFF) len = 12;
            }
        }
        if (j + len > data.size()) return std::nullopt;
        auto decoded = json_unescape(data.substr(j, len));
        if (!decoded || decoded->empty() || expected.substr(k, decoded->size()) != *decoded)
            return std::nullopt;
        j += len;
        k += decoded->size();
        ++escapes;
    }
    return j - i;
}

std::optional<Match> search(std::string_view data, std::string_view password,
                            PasswordEncoding encoding) {
    if (password.empty()) return std::nullopt;
    switch (encoding) {
        case PasswordEncoding::plaintext: {
            auto pos = data.find(password);
            if (pos == std::string_view::npos) return std::nullopt;
            return Match{pos, password.size()};
        }
        case PasswordEncoding::url_encoded: {
            for (std::size_t i = 0; i < data.size(); ++i) {
                const char c = data[i];
                if (c != '%' && c != '+' && c != password.front()) continue;
                int escapes = 0;
                auto len = match_percent(data, i, password, true, escapes);
                if (len && escapes > 0) return Match{i, *len};
            }
            return std::nullopt;
        }
        case PasswordEncoding::base64_std:
        case PasswordEncoding::base64_urlsafe:
        case PasswordEncoding::base64_nopad: {
            std::vector<std::string> targets;
            if (encoding == PasswordEncoding::base64_std) {
                targets.push_back(base64_encode(password));
            } else if (encoding == PasswordEncoding::base64_urlsafe) {
                targets.push_back(base64_encode(password, Base64Alphabet::url_safe));
            } else {
                targets.push_back(base64_encode(password, Base64Alphabet::standard, false));
                targets.push_back(base64_encode(password, Base64Alphabet::url_safe, false));
            }
            for (const auto& target : targets) {
                for (std::size_t i = 0; i < data.size(); ++i) {
                    if (data[i] != '%' && data[i] != target.front()) continue;
                    int escapes = 0;
                    if (auto len = match_percent(data, i, target, false, escapes))
                        return Match{i, *len};
                }
            }
            return std::nullopt;
        }
        case PasswordEncoding::json_embedded: {
            for (std::size_t i = 0; i < data.size(); ++i) {
                if (data[i] != '\\' && data[i] != password.front()) continue;
                int escapes = 0;
                auto len = match_json(data, i, password, escapes);
                if (len && escapes > 0) return Match{i, *len};
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::optional<std::string> header_param(std::string_view header, std::string_view name) {
    const std::string lowered = lower(header);
    std::size_t pos = 0;
    while ((pos = lowered.find(name, pos)) != std::string::npos) {
        const std::size_t after = pos + name.size();
        const bool boundary_before =
            pos == 0 || lowered[pos - 1] == ';' || lowered[pos - 1] == ' ' || lowered[pos - 1] == '\t';
        if (boundary_before && after < header.size() && header[after] == '=') {
            std::string_view value = header.substr(after + 1);
            if (!value.empty() && value.front() == '"') {
                value.remove_prefix(1);
                return std::string(value.substr(0, value.find('"')));
            }
            return std::string(trim(value.substr(0, value.find(';'))));
        }
        pos = after;
    }
    return std::nullopt;
}

// Splits a multipart/form-data body into part contents.
std::vector<Region> multipart_regions(std::string_view body, const std::string& boundary) {
    std::vector<Region> parts;
    const std::string delimiter = "--" + boundary;
    std::size_t pos = body.find(delimiter);
    while (pos != std::string_view::npos) {
        std::size_t line_end = body.find("\r\n", pos);
        if (line_end == std::string_view::npos) break;
        if (body.substr(pos + delimiter.size(), 2) == "--") break;
        const std::size_t headers_start = line_end + 2;
        const std::size_t headers_end = body.find("\r\n\r\n", headers_start);
        if (headers_end == std::string_view::npos) break;
        const std::size_t content_start = headers_end + 4;
        std::size_t next = body.find("\r\n" + delimiter, content_start);
        if (next == std::string_view::npos) next = body.size();

        Region part;
        part.offset = content_start;
        part.data = body.substr(content_start, next - content_start);
        std::string_view headers = body.substr(headers_start, headers_end - headers_start);
        std::size_t h = 0;
        while (h < headers.size()) {
            std::size_t eol = headers.find("\r\n", h);
            if (eol == std::string_view::npos) eol = headers.size();
            std::string_view line = headers.substr(h, eol - h);
            if (lower(line).rfind("content-disposition:", 0) == 0)
                part.field = header_param(line, "name");
            h = eol + 2;
        }
        parts.push_back(std::move(part));
        pos = next == body.size() ? std::string_view::npos : next + 2;
    }
    return parts;
}

std::optional<std::string> form_field_for(std::string_view data, std::size_t start,
                                          std::size_t length) {
    std::size_t seg_start = data.rfind('&', start == 0 ? 0 : start - 1);
    seg_start = (seg_start == std::string_view::npos || seg_start >= start) ? 0 : seg_start + 1;
    if (start > 0 && data[start - 1] == '&') seg_start = start;
    std::size_t seg_end = data.find('&', seg_start);
    if (seg_end == std::string_view::npos) seg_end = data.size();
    if (start + length > seg_end) return std::nullopt;
    const std::size_t eq = data.find('=', seg_start);
    if (eq == std::string_view::npos || eq >= start) return std::nullopt;
    auto name = percent_decode(data.substr(seg_start, eq - seg_start), true);
    if (!name || name->empty()) return std::nullopt;
    return name;
}

std::optional<std::string> json_field_for(std::string_view data, std::size_t start) {
    std::optional<std::pair<std::size_t, std::size_t>> last_string;
    bool colon_after_last = false;
    std::size_t i = 0;
    while (i < data.size()) {
        const char c = data[i];
        if (c == '"') {
            const std::size_t open = i++;
            while (i < data.size() && data[i] != '"') i += data[i] == '\\' ? 2 : 1;
            const std::size_t close = std::min(i, data.size());
            if (start > open && start < close) {
                if (colon_after_last && last_string) {
                    auto key = json_unescape(
                        data.substr(last_string->first, last_string->second - last_string->first));
                    if (key) return key;
                }
                return std::nullopt;
            }
            last_string = {open + 1, close};
            colon_after_last = false;
            ++i;
            continue;
        }
        if (c == ':') colon_after_last = true;
        else if (c == ',' || c == '{' || c == '}' || c == '[' || c == ']') colon_after_last = false;
        ++i;
    }
    return std::nullopt;
}

std::vector<Region> regions_of(const CapturedRequest& request) {
    std::vector<Region> regions;
    const std::string content_type = lower(request.header("content-type").value_or(""));
    std::string_view body = request.body;
    if (content_type.find("multipart/form-data") != std::string::npos) {
        auto boundary = header_param(request.header("content-type").value_or(""), "boundary");
        if (boundary && !boundary->empty()) {
            regions = multipart_regions(body, *boundary);
            for (auto& r : regions) r.syntax = RegionSyntax::opaque;
        }
    }
    if (regions.empty() && !body.empty()) {
        Region r;
        r.data = body;
        const auto trimmed = trim(body);
        if (content_type.find("json") != std::string::npos ||
            (!trimmed.empty() && (trimmed.front() == '{' || trimmed.front() == '[')))
            r.syntax = RegionSyntax::json;
        else if (content_type.find("x-www-form-urlencoded") != std::string::npos ||
                 body.find('=') != std::string_view::npos)
            r.syntax = RegionSyntax::form;
        regions.push_back(r);
    }
    auto [offset, query] = query_of(request.url);
    if (!query.empty()) {
        Region r;
        r.location = EvidenceLocation::url;
        r.offset = offset;
        r.data = query;
        r.syntax = RegionSyntax::form;
        regions.push_back(r);
    }
    return regions;
}

}  // namespace

std::optional<ExposureEvidence> find_password(const CapturedRequest& request,
                                              std::string_view password,
                                              std::size_t request_index) {
    if (password.empty()) return std::nullopt;
    const auto regions = regions_of(request);
    for (auto encoding : kAllEncodings) {
        for (const auto& region : regions) {
            auto match = search(region.data, password, encoding);
            if (!match) continue;
            ExposureEvidence ev;
            ev.request_index = request_index;
            ev.encoding = encoding;
            ev.location = region.location;
            ev.byte_offset = region.offset + match->start;
            ev.length = match->length;
            if (region.field) ev.matched_field = region.field;
            else if (region.syntax == RegionSyntax::form)
                ev.matched_field = form_field_for(region.data, match->start, match->length);
            else if (region.syntax == RegionSyntax::json)
                ev.matched_field = json_field_for(region.data, match->start);
            return ev;
        }
    }
    return std::nullopt;
}

std::optional<ExposureEvidence> find_password(const CapturedRequest& request,
                                              const Credentials& creds,
                                              std::size_t request_index) {
    return find_password(request, creds.password(), request_index);
}

// ---------------------------------------------------------------------------

std::string_view to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::PasswordExposed: return "PasswordExposed";
        case VerdictKind::PasswordEncrypted: return "PasswordEncrypted";
        case VerdictKind::LoginNotFound: return "LoginNotFound";
        case VerdictKind::NoHTTPS: return "NoHTTPS";
        case VerdictKind::NotCdnTerminated: return "NotCdnTerminated";
    }
    return "?";
}

std::optional<VerdictKind> verdict_kind_from_string(std::string_view s) {
    for (auto k : {VerdictKind::PasswordExposed, VerdictKind::PasswordEncrypted,
                   VerdictKind::LoginNotFound, VerdictKind::NoHTTPS, VerdictKind::NotCdnTerminated})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

ordered_json to_json(const SiteVerdict& v) {
    ordered_json j;
    j["kind"] = to_string(v.kind);
    j["provider"] = v.attributed_provider ? ordered_json(*v.attributed_provider)
                                          : ordered_json(nullptr);
    if (v.evidence) {
        const auto& e = *v.evidence;
        ordered_json ev;
        ev["request_index"] = e.request_index;
        ev["encoding"] = to_string(e.encoding);
        ev["location"] = e.location == EvidenceLocation::body ? "body" : "url";
        ev["byte_offset"] = e.byte_offset;
        ev["length"] = e.length;
        ev["matched_field"] = e.matched_field ? ordered_json(*e.matched_field)
                                              : ordered_json(nullptr);
        j["evidence"] = std::move(ev);
    } else {
        j["evidence"] = nullptr;
    }
    j["error"] = v.error ? ordered_json(*v.error) : ordered_json(nullptr);
    return j;
}

SiteVerdict verdict_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw SchemaError("verdict must be an object with a 'kind' string");
    SiteVerdict v;
    auto kind = verdict_kind_from_string(j["kind"].get<std::string>());
    if (!kind) throw SchemaError("unknown verdict kind " + j["kind"].get<std::string>());
    v.kind = *kind;
    if (auto p = j.find("provider"); p != j.end() && !p->is_null())
        v.attributed_provider = p->get<std::string>();
    if (auto e = j.find("error"); e != j.end() && !e->is_null()) v.error = e->get<std::string>();
    if (auto e = j.find("evidence"); e != j.end() && !e->is_null()) {
        if (!e->is_object()) throw SchemaError("verdict evidence must be an object");
        ExposureEvidence ev;
        ev.request_index = e->at("request_index").get<std::size_t>();
        auto enc = password_encoding_from_string(e->at("encoding").get<std::string>());
        if (!enc) throw SchemaError("unknown evidence encoding");
        ev.encoding = *enc;
        ev.location = e->value("location", std::string("body")) == "url" ? EvidenceLocation::url
                                                                          : EvidenceLocation::body;
        ev.byte_offset = e->at("byte_offset").get<std::size_t>();
        ev.length = e->at("length").get<std::size_t>();
        if (auto f = e->find("matched_field"); f != e->end() && !f->is_null())
            ev.matched_field = f->get<std::string>();
        v.evidence = ev;
    }
    return v;
}

bool is_credential_bearing(const CapturedRequest& request, const Credentials& creds) {
    if (find_password(request, creds.password())) return true;
    for (const auto& id : {creds.account(), creds.email()}) {
        for (std::string_view where : {std::string_view(request.body), std::string_view(request.url)}) {
            if (where.find(id) != std::string_view::npos) return true;
            if (where.find(form_encode(id)) != std::string_view::npos) return true;
            if (where.find(base64_encode(id, Base64Alphabet::standard, false)) !=
                std::string_view::npos)
                return true;
        }
    }
    return request.method != "GET" && request.method != "HEAD" && !request.body.empty();
}

SiteVerdict classify_site(const SessionOutcome& outcome, const AttributionMap& attributions,
                          bool https, const Credentials& creds) {
    SiteVerdict verdict;
    if (!https) {
        verdict.kind = VerdictKind::NoHTTPS;
        return verdict;
    }
    if (!outcome.submitted) {
        verdict.kind = VerdictKind::LoginNotFound;
        if (outcome.skip_reason == SkipReason::error || outcome.skip_reason == SkipReason::timeout)
            verdict.error = std::string(to_string(*outcome.skip_reason)) +
                            (outcome.diagnostic.empty() ? "" : ": " + outcome.diagnostic);
        return verdict;
    }

    auto attribution_for = [&](const CapturedRequest& r) -> const CdnAttribution& {
        auto it = attributions.find(r.destination_host);
        if (it == attributions.end())
            throw MissingAttribution("no attribution for host " + r.destination_host);
        return it->second;
    };
    for (const auto& r : outcome.requests) attribution_for(r);

    bool evidence_seen = false;
    for (std::size_t i = 0; i < outcome.requests.size(); ++i) {
        const auto& r = outcome.requests[i];
        auto ev = find_password(r, creds.password(), i);
        if (!ev) continue;
        evidence_seen = true;
        const auto& attribution = attribution_for(r);
        if (attribution.is_cdn()) {
            verdict.kind = VerdictKind::PasswordExposed;
            verdict.evidence = ev;
            verdict.attributed_provider = attribution.provider;
            return verdict;
        }
    }

    bool any_bearing = false;
    std::optional<std::string> bearing_cdn;
    for (const auto& r : outcome.requests) {
        if (!is_credential_bearing(r, creds)) continue;
        any_bearing = true;
        const auto& attribution = attribution_for(r);
        if (attribution.is_cdn() && !bearing_cdn) bearing_cdn = attribution.provider;
    }
    if (evidence_seen || (any_bearing && !bearing_cdn)) {
        verdict.kind = VerdictKind::NotCdnTerminated;
        return verdict;
    }
    verdict.kind = VerdictKind::PasswordEncrypted;
    verdict.attributed_provider = bearing_cdn;
    return verdict;
}

}  // namespace cdnexpose
