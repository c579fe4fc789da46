#include <doctest.h>

#include <random>

#include "cdnexpose/encoding.hpp"
#include "cdnexpose/exposure.hpp"
#include "test_support.hpp"

using namespace cdnexpose;
namespace ts = testsupport;

namespace {

const Credentials kCreds("k3v9q0m2x7r1t8w4z6y5u0a1", "hunter2secret16!");

CapturedRequest post(const std::string& url, const std::string& body,
                     const std::string& type = "application/x-www-form-urlencoded") {
    return make_request(url, "POST", {{"Content-Type", type}}, body, "2020-10-05T09:00:00Z");
}

CdnAttribution cdn(const std::string& host, const std::string& provider) {
    CdnAttribution a;
    a.host = host;
    a.provider = provider;
    a.basis = AttributionBasis::cname;
    return a;
}

CdnAttribution origin(const std::string& host) {
    CdnAttribution a;
    a.host = host;
    return a;
}

SessionOutcome submitted(std::vector<CapturedRequest> requests) {
    SessionOutcome o;
    o.site = "shop.example";
    o.submitted = true;
    o.requests = std::move(requests);
    return o;
}

// Soundness: the evidence bytes decode back to the password.
void check_sound(const CapturedRequest& r, const ExposureEvidence& ev, std::string_view password) {
    auto bytes = evidence_bytes(r, ev);
    CHECK(bytes.size() == ev.length);
    CHECK(decode_evidence(ev.encoding, bytes) == std::string(password));
}

PasswordEncoding first_equivalent(std::string_view password, PasswordEncoding e) {
    const auto target = encode_password(password, e);
    for (auto c : kAllEncodings)
        if (encode_password(password, c) == target) return c;
    return e;
}

}  // namespace

TEST_CASE("find_password examples") {
    auto r = post("https://a.example/login", "user=x&pass=hunter2secret16");
    auto ev = find_password(r, "hunter2secret16");
    REQUIRE(ev);
    CHECK(ev->encoding == PasswordEncoding::plaintext);
    CHECK(ev->matched_field == std::string("pass"));
    CHECK(ev->byte_offset == 12);
    check_sound(r, *ev, "hunter2secret16");

    auto b = post("https://a.example/login", "{\"blob\":\"aHVudGVyMnNlY3JldDE2\"}", "application/json");
    auto bev = find_password(b, "hunter2secret16");
    REQUIRE(bev);
    CHECK(bev->encoding == PasswordEncoding::base64_std);
    CHECK(bev->matched_field == std::string("blob"));
    check_sound(b, *bev, "hunter2secret16");

    std::mt19937_64 rng(53);
    std::string hex;
    for (int i = 0; i < 256; ++i) hex += "0123456789abcdef"[rng() % 16];
    CHECK_FALSE(find_password(post("https://a.example/login", "data=" + hex), "hunter2secret16"));
}

TEST_CASE("each encoding is recognised and tagged") {
    const std::string pw = "p@ss w\"rd/+?x\\y~Z";
    for (auto e : kAllEncodings) {
        auto enc = encode_password(pw, e);
        auto r = post("https://a.example/x", "junk&f=" + enc + "&more");
        auto ev = find_password(r, pw);
        REQUIRE_MESSAGE(ev, to_string(e));
        CHECK(ev->encoding == first_equivalent(pw, e));
        check_sound(r, *ev, pw);
    }
    CHECK(to_string(PasswordEncoding::base64_std) == "base64-std");
    CHECK(to_string(PasswordEncoding::url_encoded) == "url-encoded");
    CHECK(bucket_of(PasswordEncoding::json_embedded) == EncodingBucket::plaintext);
    CHECK(bucket_of(PasswordEncoding::base64_nopad) == EncodingBucket::base64);
}

TEST_CASE("percent-encoded base64 is still found") {
    const std::string pw = "\xfb\xff\xbfqwertyuiopasdf";
    auto enc = form_encode(base64_encode(pw));
    REQUIRE(enc.find('%') != std::string::npos);
    auto r = post("https://a.example/x", "token=" + enc);
    auto ev = find_password(r, pw);
    REQUIRE(ev);
    CHECK(ev->encoding == PasswordEncoding::base64_std);
    check_sound(r, *ev, pw);
}

TEST_CASE("query string evidence points into the url") {
    auto r = make_request("https://a.example/login?u=me&p=hunter2secret16!", "GET", {}, "",
                          "2020-10-05T09:00:00Z");
    auto ev = find_password(r, kCreds);
    REQUIRE(ev);
    CHECK(ev->location == EvidenceLocation::url);
    CHECK(ev->matched_field == std::string("p"));
    check_sound(r, *ev, kCreds.password());
}

TEST_CASE("multipart bodies are searched part by part") {
    std::string body =
        "--XyZ\r\nContent-Disposition: form-data; name=\"login\"\r\n\r\nme\r\n"
        "--XyZ\r\nContent-Disposition: form-data; name=\"secret\"\r\n\r\nhunter2secret16!\r\n--XyZ--\r\n";
    auto r = post("https://a.example/x", body, "multipart/form-data; boundary=XyZ");
    auto ev = find_password(r, kCreds);
    REQUIRE(ev);
    CHECK(ev->matched_field == std::string("secret"));
    check_sound(r, *ev, kCreds.password());
}

TEST_CASE("base64 of a shifted password is a known miss") {
    // Only the encoding of the whole password is searched for.
    auto r = post("https://a.example/x", "d=" + base64_encode("x" + kCreds.password()));
    CHECK_FALSE(find_password(r, kCreds));
}

TEST_CASE("completeness on constructed bodies") {
    std::mt19937_64 rng(59);
    int found = 0;
    for (int i = 0; i < 200; ++i) {
        auto pw = ts::random_printable(rng, 16);
        for (auto e : kAllEncodings) {
            auto enc = encode_password(pw, e);
            auto body = ts::random_bytes(rng, 4096 - enc.size());
            auto at = rng() % (body.size() + 1);
            body.insert(at, enc);
            auto r = post("https://a.example/x", body, "application/octet-stream");
            auto ev = find_password(r, pw);
            if (!ev) continue;
            ++found;
            // The tag can legitimately differ when random neighbours complete
            // another form (a trailing '=' turns nopad into std), so only
            // soundness is checked here.
            check_sound(r, *ev, pw);
        }
    }
    CHECK(found == 1200);
}

TEST_CASE("no hits on password-free random bodies") {
    std::mt19937_64 rng(61);
    int hits = 0;
    for (int i = 0; i < 2000; ++i) {
        auto pw = ts::random_printable(rng, 16);
        auto r = post("https://a.example/x", ts::random_bytes(rng, 4096), "application/octet-stream");
        if (find_password(r, pw)) ++hits;
    }
    CHECK(hits == 0);
}

TEST_CASE("classify_site examples") {
    auto r = post("https://www.shop.example/login", "email=me&password=hunter2secret16%21");
    AttributionMap attr{{"www.shop.example", cdn("www.shop.example", "Cloudflare")}};

    auto exposed = classify_site(submitted({r}), attr, true, kCreds);
    CHECK(exposed.kind == VerdictKind::PasswordExposed);
    CHECK(exposed.attributed_provider == std::string("Cloudflare"));
    REQUIRE(exposed.evidence);
    CHECK(exposed.evidence->encoding == PasswordEncoding::url_encoded);

    auto enc = post("https://www.shop.example/login", "email=me&blob=8f1e2a9c77d0b3e4");
    auto encrypted = classify_site(submitted({enc}), attr, true, kCreds);
    CHECK(encrypted.kind == VerdictKind::PasswordEncrypted);
    CHECK_FALSE(encrypted.evidence);

    SessionOutcome none;
    none.site = "shop.example";
    none.skip_reason = SkipReason::captcha;
    CHECK(classify_site(none, attr, true, kCreds).kind == VerdictKind::LoginNotFound);

    CHECK(classify_site(submitted({r}), attr, false, kCreds).kind == VerdictKind::NoHTTPS);
}

TEST_CASE("password to a non-CDN host is not CDN-terminated") {
    auto r = post("https://login.shop.example/auth", "password=hunter2secret16!");
    AttributionMap attr{{"login.shop.example", origin("login.shop.example")}};
    auto v = classify_site(submitted({r}), attr, true, kCreds);
    CHECK(v.kind == VerdictKind::NotCdnTerminated);
    CHECK_FALSE(v.attributed_provider);

    // Bypass: the password goes to the origin, a follow-up to the CDN.
    auto follow = make_request("https://www.shop.example/home", "GET", {}, "", "2020-10-05T09:00:01Z");
    attr["www.shop.example"] = cdn("www.shop.example", "Akamai");
    CHECK(classify_site(submitted({r, follow}), attr, true, kCreds).kind ==
          VerdictKind::NotCdnTerminated);
}

TEST_CASE("evidence is the first exposing request") {
    auto a = post("https://api.shop.example/a", "password=hunter2secret16!");
    auto b = post("https://www.shop.example/b", "password=hunter2secret16!");
    AttributionMap attr{{"api.shop.example", origin("api.shop.example")},
                        {"www.shop.example", cdn("www.shop.example", "Fastly")}};
    auto v = classify_site(submitted({a, b}), attr, true, kCreds);
    CHECK(v.kind == VerdictKind::PasswordExposed);
    CHECK(v.evidence->request_index == 1);
    CHECK(v.attributed_provider == std::string("Fastly"));
}

TEST_CASE("missing attribution is an error") {
    auto r = post("https://www.shop.example/login", "password=x");
    CHECK_THROWS_AS(classify_site(submitted({r}), {}, true, kCreds), MissingAttribution);
}

TEST_CASE("adding a non-credential request never changes an exposed verdict") {
    std::mt19937_64 rng(67);
    auto r = post("https://www.shop.example/login", "password=hunter2secret16%21");
    AttributionMap attr{{"www.shop.example", cdn("www.shop.example", "Cloudflare")},
                        {"cdn.shop.example", cdn("cdn.shop.example", "Akamai")},
                        {"tracker.example", origin("tracker.example")}};
    const std::vector<std::string> hosts = {"www.shop.example", "cdn.shop.example", "tracker.example"};
    auto base = classify_site(submitted({r}), attr, true, kCreds);
    REQUIRE(base.kind == VerdictKind::PasswordExposed);
    for (int i = 0; i < 300; ++i) {
        std::vector<CapturedRequest> reqs = {r};
        for (int k = static_cast<int>(rng() % 5); k > 0; --k) {
            auto extra = make_request("https://" + hosts[rng() % 3] + "/asset" + std::to_string(rng() % 100),
                                      "GET", {}, "", "2020-10-05T09:00:02Z");
            reqs.insert(reqs.begin() + static_cast<long>(rng() % (reqs.size() + 1)), extra);
        }
        auto v = classify_site(submitted(reqs), attr, true, kCreds);
        CHECK(v.kind == VerdictKind::PasswordExposed);
        CHECK(v.attributed_provider == base.attributed_provider);
    }
}

TEST_CASE("credential-bearing requests") {
    CHECK(is_credential_bearing(post("https://a.example/x", "p=hunter2secret16!"), kCreds));
    CHECK(is_credential_bearing(
        make_request("https://a.example/check?u=" + kCreds.account(), "GET", {}, "", ""), kCreds));
    CHECK(is_credential_bearing(post("https://a.example/x", "opaque"), kCreds));
    CHECK_FALSE(is_credential_bearing(make_request("https://a.example/logo.png", "GET", {}, "", ""), kCreds));
}

TEST_CASE("verdict json round trip") {
    SiteVerdict v;
    v.kind = VerdictKind::PasswordExposed;
    v.attributed_provider = "Akamai";
    v.evidence = ExposureEvidence{2, PasswordEncoding::base64_urlsafe, EvidenceLocation::body, 17, 24, "pw"};
    auto j = to_json(v);
    CHECK(j["kind"] == "PasswordExposed");
    CHECK(j["provider"] == "Akamai");
    CHECK(j["evidence"]["encoding"] == "base64-urlsafe");
    CHECK(verdict_from_json(j) == v);
    CHECK(verdict_from_json(to_json(SiteVerdict{})) == SiteVerdict{});
}
