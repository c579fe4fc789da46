#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cdnexpose/capture.hpp"

typedef struct ssl_ctx_st SSL_CTX;

namespace cdnexpose {

// Scan-local root that signs per-host leaf certificates. All leaves share
// one key so a browser can trust them through a single SPKI pin.
class CertificateAuthority {
public:
    explicit CertificateAuthority(const std::string& common_name = "cdnexpose scan root");
    ~CertificateAuthority();
    CertificateAuthority(const CertificateAuthority&) = delete;
    CertificateAuthority& operator=(const CertificateAuthority&) = delete;

    std::string ca_pem() const;
    // PEM of a freshly issued leaf for host (DNS name or IP literal).
    std::string leaf_pem(const std::string& host);
    std::string leaf_key_pem() const;
    // base64(SHA-256(SubjectPublicKeyInfo)) of the shared leaf key, the form
    // Chrome's --ignore-certificate-errors-spki-list expects.
    std::string leaf_spki_sha256() const;
    // Cached TLS server context presenting the leaf for host.
    SSL_CTX* server_context(const std::string& host);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ProxyOptions {
    bool verify_upstream = true;
    // Extra trust anchor for upstream TLS (local test servers).
    std::string upstream_ca_pem;
    // host -> "address[:port]" used instead of resolving host, in the manner
    // of curl --resolve. TLS names are still checked against host.
    std::map<std::string, std::string> resolve_overrides;
    std::chrono::milliseconds io_timeout{std::chrono::seconds(15)};
};

struct ResponseInfo {
    std::string url;
    int status = 0;
    bool www_authenticate = false;
};

// HTTP forward proxy on 127.0.0.1 that records every request it relays.
// CONNECT tunnels are intercepted with certificates from the authority, so
// request bodies are seen exactly as the browser wrote them.
class CaptureProxy {
public:
    CaptureProxy(std::shared_ptr<CertificateAuthority> ca, ProxyOptions options = {});
    ~CaptureProxy();
    CaptureProxy(const CaptureProxy&) = delete;
    CaptureProxy& operator=(const CaptureProxy&) = delete;

    int port() const { return port_; }
    std::string address() const { return "127.0.0.1:" + std::to_string(port_); }
    const CertificateAuthority& authority() const { return *ca_; }

    std::size_t mark() const;
    std::vector<CapturedRequest> since(std::size_t mark) const;
    std::optional<ResponseInfo> last_response_for(const std::string& url) const;

    // Waits until no request has been in flight for `quiet` (counted from the
    // call at the earliest), or `limit` elapsed. Returns true on idle.
    bool wait_idle(std::chrono::milliseconds quiet, std::chrono::milliseconds limit) const;

    void stop();

private:
    void accept_loop();
    void serve(int fd);
    void record(CapturedRequest request);
    void record_response(ResponseInfo info);
    void touch();

    std::shared_ptr<CertificateAuthority> ca_;
    ProxyOptions options_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;

    mutable std::mutex mutex_;
    std::vector<std::thread> workers_;
    std::set<int> open_fds_;
    std::vector<CapturedRequest> requests_;
    std::vector<ResponseInfo> responses_;
    int in_flight_ = 0;
    std::chrono::steady_clock::time_point last_activity_;
};

}  // namespace cdnexpose
