#include "cdnexpose/proxy.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <tuple>

#include <openssl/bio.h>
#include <openssl/bn.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include "cdnexpose/encoding.hpp"
#include "cdnexpose/errors.hpp"
#include "cdnexpose/log.hpp"

namespace cdnexpose {

namespace {

std::string openssl_error(const std::string& what) {
    const unsigned long code = ERR_get_error();
    char buf[256] = {0};
    if (code) ERR_error_string_n(code, buf, sizeof buf);
    return what + (code ? std::string(": ") + buf : std::string());
}

struct KeyDeleter {
    void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
struct CertDeleter {
    void operator()(X509* x) const { X509_free(x); }
};
struct CtxDeleter {
    void operator()(SSL_CTX* c) const { SSL_CTX_free(c); }
};
using KeyPtr = std::unique_ptr<EVP_PKEY, KeyDeleter>;
using CertPtr = std::unique_ptr<X509, CertDeleter>;
using CtxPtr = std::unique_ptr<SSL_CTX, CtxDeleter>;

KeyPtr new_key() {
    KeyPtr key(EVP_EC_gen("P-256"));
    if (!key) throw Error(openssl_error("key generation failed"));
    return key;
}

void add_extension(X509* cert, X509* issuer, int nid, const std::string& value) {
    X509V3_CTX ctx;
    X509V3_set_ctx_nodb(&ctx);
    X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
    X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value.c_str());
    if (!ext) throw Error(openssl_error("bad certificate extension " + value));
    X509_add_ext(cert, ext, -1);
    X509_EXTENSION_free(ext);
}

CertPtr new_cert(const std::string& cn, EVP_PKEY* subject_key, X509* issuer, EVP_PKEY* issuer_key,
                 bool is_ca, const std::string& san) {
    CertPtr cert(X509_new());
    X509_set_version(cert.get(), 2);
    unsigned char serial[16];
    RAND_bytes(serial, sizeof serial);
    serial[0] &= 0x7f;
    BIGNUM* bn = BN_bin2bn(serial, sizeof serial, nullptr);
    BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert.get()));
    BN_free(bn);
    X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
    X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * (is_ca ? 365 : 30));
    X509_set_pubkey(cert.get(), subject_key);
    X509_NAME* name = X509_get_subject_name(cert.get());
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1, 0);
    X509* signer = issuer ? issuer : cert.get();
    X509_set_issuer_name(cert.get(), X509_get_subject_name(signer));
    if (is_ca) {
        add_extension(cert.get(), signer, NID_basic_constraints, "critical,CA:TRUE");
        add_extension(cert.get(), signer, NID_key_usage, "critical,keyCertSign,cRLSign");
        add_extension(cert.get(), signer, NID_subject_key_identifier, "hash");
    } else {
        add_extension(cert.get(), signer, NID_basic_constraints, "critical,CA:FALSE");
        add_extension(cert.get(), signer, NID_key_usage, "critical,digitalSignature");
        add_extension(cert.get(), signer, NID_ext_key_usage, "serverAuth");
        add_extension(cert.get(), signer, NID_subject_alt_name, san);
    }
    if (!X509_sign(cert.get(), issuer_key, EVP_sha256()))
        throw Error(openssl_error("certificate signing failed"));
    return cert;
}

std::string cert_to_pem(X509* cert) {
    BIO* bio = BIO_new(BIO_s_mem());
    PEM_write_bio_X509(bio, cert);
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    std::string out(data, static_cast<std::size_t>(len));
    BIO_free(bio);
    return out;
}

bool is_ip_literal(const std::string& host) {
    in6_addr buf{};
    return inet_pton(AF_INET, host.c_str(), &buf) == 1 || inet_pton(AF_INET6, host.c_str(), &buf) == 1;
}

}  // namespace

struct CertificateAuthority::Impl {
    KeyPtr ca_key;
    CertPtr ca_cert;
    KeyPtr leaf_key;
    std::mutex mutex;
    std::map<std::string, CtxPtr> contexts;
};

CertificateAuthority::CertificateAuthority(const std::string& common_name)
    : impl_(std::make_unique<Impl>()) {
    impl_->ca_key = new_key();
    impl_->ca_cert = new_cert(common_name, impl_->ca_key.get(), nullptr, impl_->ca_key.get(), true, "");
    impl_->leaf_key = new_key();
}

CertificateAuthority::~CertificateAuthority() = default;

std::string CertificateAuthority::ca_pem() const { return cert_to_pem(impl_->ca_cert.get()); }

std::string CertificateAuthority::leaf_pem(const std::string& host) {
    const std::string san = (is_ip_literal(host) ? "IP:" : "DNS:") + host;
    auto cert = new_cert(host, impl_->leaf_key.get(), impl_->ca_cert.get(), impl_->ca_key.get(),
                         false, san);
    return cert_to_pem(cert.get());
}

std::string CertificateAuthority::leaf_key_pem() const {
    BIO* bio = BIO_new(BIO_s_mem());
    PEM_write_bio_PrivateKey(bio, impl_->leaf_key.get(), nullptr, nullptr, 0, nullptr, nullptr);
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    std::string out(data, static_cast<std::size_t>(len));
    BIO_free(bio);
    return out;
}

std::string CertificateAuthority::leaf_spki_sha256() const {
    unsigned char* der = nullptr;
    const int len = i2d_PUBKEY(impl_->leaf_key.get(), &der);
    if (len <= 0) throw Error(openssl_error("SPKI encoding failed"));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    EVP_Digest(der, static_cast<std::size_t>(len), digest, &digest_len, EVP_sha256(), nullptr);
    OPENSSL_free(der);
    return base64_encode(std::string_view(reinterpret_cast<char*>(digest), digest_len));
}

SSL_CTX* CertificateAuthority::server_context(const std::string& host) {
    std::lock_guard lock(impl_->mutex);
    auto& slot = impl_->contexts[host];
    if (slot) return slot.get();
    const std::string san = (is_ip_literal(host) ? "IP:" : "DNS:") + host;
    auto cert = new_cert(host, impl_->leaf_key.get(), impl_->ca_cert.get(), impl_->ca_key.get(),
                         false, san);
    CtxPtr ctx(SSL_CTX_new(TLS_server_method()));
    if (!ctx) throw Error(openssl_error("SSL_CTX_new failed"));
    SSL_CTX_set_min_proto_version(ctx.get(), TLS1_2_VERSION);
    if (SSL_CTX_use_certificate(ctx.get(), cert.get()) != 1 ||
        SSL_CTX_use_PrivateKey(ctx.get(), impl_->leaf_key.get()) != 1 ||
        SSL_CTX_add1_chain_cert(ctx.get(), impl_->ca_cert.get()) != 1)
        throw Error(openssl_error("cannot install leaf certificate"));
    slot = std::move(ctx);
    return slot.get();
}

// ---------------------------------------------------------------------------

namespace {

// Socket, optionally wrapped in TLS, with a read buffer.
class Stream {
public:
    explicit Stream(int fd) : fd_(fd) {}
    ~Stream() { close(); }
    Stream(const Stream&) = delete;
    Stream& operator=(const Stream&) = delete;

    int fd() const { return fd_; }

    bool accept_tls(SSL_CTX* ctx) {
        ssl_ = SSL_new(ctx);
        SSL_set_fd(ssl_, fd_);
        if (!buffer_.empty()) return false;  // client spoke before the handshake
        return SSL_accept(ssl_) == 1;
    }

    bool connect_tls(SSL_CTX* ctx, const std::string& host) {
        ssl_ = SSL_new(ctx);
        SSL_set_fd(ssl_, fd_);
        if (!is_ip_literal(host)) SSL_set_tlsext_host_name(ssl_, host.c_str());
        SSL_set1_host(ssl_, host.c_str());
        return SSL_connect(ssl_) == 1;
    }

    long read_some(char* out, std::size_t n) {
        if (ssl_) {
            const int r = SSL_read(ssl_, out, static_cast<int>(std::min<std::size_t>(n, 1 << 20)));
            return r > 0 ? r : -1;
        }
        const ssize_t r = ::recv(fd_, out, n, 0);
        return r > 0 ? r : -1;
    }

    bool write_all(std::string_view data) {
        while (!data.empty()) {
            long w;
            if (ssl_) w = SSL_write(ssl_, data.data(), static_cast<int>(data.size()));
            else w = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
            if (w <= 0) return false;
            data.remove_prefix(static_cast<std::size_t>(w));
        }
        return true;
    }

    bool fill() {
        char buf[16384];
        const long r = read_some(buf, sizeof buf);
        if (r <= 0) return false;
        buffer_.append(buf, static_cast<std::size_t>(r));
        return true;
    }

    std::optional<std::string> read_head(std::size_t limit = 1 << 16) {
        for (;;) {
            const auto pos = buffer_.find("\r\n\r\n");
            if (pos != std::string::npos) {
                std::string head = buffer_.substr(0, pos + 4);
                buffer_.erase(0, pos + 4);
                return head;
            }
            if (buffer_.size() > limit || !fill()) return std::nullopt;
        }
    }

    std::optional<std::string> read_exact(std::size_t n) {
        while (buffer_.size() < n)
            if (!fill()) return std::nullopt;
        std::string out = buffer_.substr(0, n);
        buffer_.erase(0, n);
        return out;
    }

    std::optional<std::string> read_line() {
        for (;;) {
            const auto pos = buffer_.find("\r\n");
            if (pos != std::string::npos) {
                std::string line = buffer_.substr(0, pos);
                buffer_.erase(0, pos + 2);
                return line;
            }
            if (!fill()) return std::nullopt;
        }
    }

    std::optional<std::string> read_chunked() {
        std::string body;
        for (;;) {
            auto line = read_line();
            if (!line) return std::nullopt;
            const std::size_t size = std::strtoul(line->c_str(), nullptr, 16);
            if (size == 0) {
                // Trailers until the empty line.
                while (auto t = read_line())
                    if (t->empty()) return body;
                return std::nullopt;
            }
            auto chunk = read_exact(size + 2);
            if (!chunk) return std::nullopt;
            body.append(*chunk, 0, size);
        }
    }

    std::string take_buffer() { return std::exchange(buffer_, {}); }

    void close() {
        if (ssl_) {
            SSL_shutdown(ssl_);
            SSL_free(ssl_);
            ssl_ = nullptr;
        }
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    SSL* ssl_ = nullptr;
    std::string buffer_;
};

struct Head {
    std::string first_line;
    HeaderList headers;

    std::optional<std::string> get(std::string_view name) const {
        for (const auto& [k, v] : headers)
            if (k.size() == name.size() &&
                std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) {
                    return std::tolower(static_cast<unsigned char>(a)) ==
                           std::tolower(static_cast<unsigned char>(b));
                }))
                return v;
        return std::nullopt;
    }
};

Head parse_head(const std::string& raw) {
    Head head;
    std::size_t pos = raw.find("\r\n");
    head.first_line = raw.substr(0, pos);
    while (pos != std::string::npos && pos + 2 < raw.size()) {
        const std::size_t start = pos + 2;
        pos = raw.find("\r\n", start);
        if (pos == std::string::npos || pos == start) break;
        std::string line = raw.substr(start, pos - start);
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string value = line.substr(colon + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
        head.headers.emplace_back(line.substr(0, colon), value);
    }
    return head;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::optional<std::string> read_body(Stream& s, const Head& head) {
    if (auto te = head.get("transfer-encoding"); te && lower(*te).find("chunked") != std::string::npos)
        return s.read_chunked();
    if (auto cl = head.get("content-length")) {
        const std::size_t n = std::strtoul(cl->c_str(), nullptr, 10);
        return s.read_exact(n);
    }
    return std::string();
}

std::pair<std::string, int> split_authority(const std::string& authority, int default_port) {
    if (!authority.empty() && authority.front() == '[') {
        const auto close = authority.find(']');
        std::string host = authority.substr(1, close - 1);
        int port = default_port;
        if (close + 1 < authority.size() && authority[close + 1] == ':')
            port = std::atoi(authority.c_str() + close + 2);
        return {host, port};
    }
    const auto colon = authority.rfind(':');
    if (colon == std::string::npos) return {authority, default_port};
    return {authority.substr(0, colon), std::atoi(authority.c_str() + colon + 1)};
}

int connect_to(const std::string& host, int port, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_family = AF_UNSPEC;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (auto* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        timeval tv{static_cast<time_t>(timeout.count() / 1000),
                   static_cast<suseconds_t>((timeout.count() % 1000) * 1000)};
        setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(res);
    return fd;
}

bool hop_by_hop(const std::string& name) {
    const auto n = lower(name);
    return n == "connection" || n == "proxy-connection" || n == "keep-alive" ||
           n == "transfer-encoding" || n == "content-length" || n == "proxy-authorization" ||
           n == "te" || n == "upgrade";
}

}  // namespace

CaptureProxy::CaptureProxy(std::shared_ptr<CertificateAuthority> ca, ProxyOptions options)
    : ca_(std::move(ca)), options_(std::move(options)), last_activity_(std::chrono::steady_clock::now()) {
    if (!ca_) ca_ = std::make_shared<CertificateAuthority>();
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("proxy socket failed");
    int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 64) != 0) {
        ::close(listen_fd_);
        throw IoError("proxy bind failed");
    }
    socklen_t len = sizeof addr;
    getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

CaptureProxy::~CaptureProxy() { stop(); }

void CaptureProxy::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

void CaptureProxy::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 100) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        timeval tv{static_cast<time_t>(options_.io_timeout.count() / 1000),
                   static_cast<suseconds_t>((options_.io_timeout.count() % 1000) * 1000)};
        setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        std::lock_guard lock(mutex_);
        open_fds_.insert(fd);
        workers_.emplace_back([this, fd] { serve(fd); });
    }
}

void CaptureProxy::touch() {
    std::lock_guard lock(mutex_);
    last_activity_ = std::chrono::steady_clock::now();
}

void CaptureProxy::record(CapturedRequest request) {
    std::lock_guard lock(mutex_);
    requests_.push_back(std::move(request));
    last_activity_ = std::chrono::steady_clock::now();
}

void CaptureProxy::record_response(ResponseInfo info) {
    std::lock_guard lock(mutex_);
    responses_.push_back(std::move(info));
}

std::size_t CaptureProxy::mark() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

std::vector<CapturedRequest> CaptureProxy::since(std::size_t mark) const {
    std::lock_guard lock(mutex_);
    if (mark >= requests_.size()) return {};
    return {requests_.begin() + static_cast<std::ptrdiff_t>(mark), requests_.end()};
}

std::optional<ResponseInfo> CaptureProxy::last_response_for(const std::string& url) const {
    std::lock_guard lock(mutex_);
    for (auto it = responses_.rbegin(); it != responses_.rend(); ++it)
        if (it->url == url) return *it;
    return std::nullopt;
}

bool CaptureProxy::wait_idle(std::chrono::milliseconds quiet, std::chrono::milliseconds limit) const {
    const auto start = std::chrono::steady_clock::now();
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        {
            std::lock_guard lock(mutex_);
            if (in_flight_ == 0 && now - std::max(last_activity_, start) >= quiet) return true;
        }
        if (now - start >= limit) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

void CaptureProxy::serve(int fd) {
    struct Done {
        CaptureProxy* self;
        int fd;
        ~Done() {
            std::lock_guard lock(self->mutex_);
            self->open_fds_.erase(fd);
        }
    } done{this, fd};

    Stream client(fd);
    auto raw_head = client.read_head();
    if (!raw_head) return;
    Head head = parse_head(*raw_head);

    std::string method, target;
    {
        const auto sp1 = head.first_line.find(' ');
        const auto sp2 = head.first_line.find(' ', sp1 + 1);
        if (sp1 == std::string::npos || sp2 == std::string::npos) return;
        method = head.first_line.substr(0, sp1);
        target = head.first_line.substr(sp1 + 1, sp2 - sp1 - 1);
    }

    std::string scheme = "http";
    std::string authority;
    if (method == "CONNECT") {
        authority = target;
        const auto [host, port] = split_authority(authority, 443);
        if (!client.write_all("HTTP/1.1 200 Connection Established\r\n\r\n")) return;
        SSL_CTX* ctx = nullptr;
        try {
            ctx = ca_->server_context(host);
        } catch (const Error& e) {
            log_warn(std::string("proxy: ") + e.what());
            return;
        }
        if (!client.accept_tls(ctx)) {
            log_debug("proxy: TLS handshake with client failed for " + host);
            return;
        }
        scheme = "https";
        raw_head = client.read_head();
        if (!raw_head) return;
        head = parse_head(*raw_head);
        const auto sp1 = head.first_line.find(' ');
        const auto sp2 = head.first_line.find(' ', sp1 + 1);
        if (sp1 == std::string::npos || sp2 == std::string::npos) return;
        method = head.first_line.substr(0, sp1);
        target = head.first_line.substr(sp1 + 1, sp2 - sp1 - 1);
        (void)port;
    } else {
        const auto sep = target.find("://");
        if (sep == std::string::npos) {
            client.write_all("HTTP/1.1 400 Bad Request\r\nConnection: close\r\nContent-Length: 0\r\n\r\n");
            return;
        }
        scheme = lower(target.substr(0, sep));
        const auto path_start = target.find('/', sep + 3);
        authority = target.substr(sep + 3, path_start == std::string::npos ? std::string::npos
                                                                             : path_start - sep - 3);
        target = path_start == std::string::npos ? "/" : target.substr(path_start);
    }

    auto body = read_body(client, head);
    if (!body) return;

    const int default_port = scheme == "https" ? 443 : 80;
    const auto [host, port] = split_authority(authority, default_port);
    std::string url_authority = lower(host);
    if (url_authority.find(':') != std::string::npos) url_authority = "[" + url_authority + "]";
    if (port != default_port) url_authority += ":" + std::to_string(port);
    const std::string url = scheme + "://" + url_authority + target;

    {
        std::lock_guard lock(mutex_);
        ++in_flight_;
        last_activity_ = std::chrono::steady_clock::now();
    }
    struct InFlight {
        CaptureProxy* self;
        ~InFlight() {
            std::lock_guard lock(self->mutex_);
            --self->in_flight_;
            self->last_activity_ = std::chrono::steady_clock::now();
        }
    } in_flight{this};

    record(make_request(url, method, head.headers, *body, utc_now_rfc3339()));

    auto bad_gateway = [&](const std::string& why) {
        log_debug("proxy: upstream " + url + ": " + why);
        client.write_all("HTTP/1.1 502 Bad Gateway\r\nConnection: close\r\nContent-Length: 0\r\n\r\n");
        record_response({url, 502, false});
    };

    auto [connect_host, connect_port] = std::pair{host, port};
    if (auto it = options_.resolve_overrides.find(lower(host)); it != options_.resolve_overrides.end())
        std::tie(connect_host, connect_port) = split_authority(it->second, port);
    const int upstream_fd = connect_to(connect_host, connect_port, options_.io_timeout);
    if (upstream_fd < 0) return bad_gateway("connect failed");
    Stream upstream(upstream_fd);
    CtxPtr client_ctx;
    if (scheme == "https") {
        client_ctx.reset(SSL_CTX_new(TLS_client_method()));
        SSL_CTX_set_min_proto_version(client_ctx.get(), TLS1_2_VERSION);
        if (options_.verify_upstream) {
            SSL_CTX_set_verify(client_ctx.get(), SSL_VERIFY_PEER, nullptr);
            SSL_CTX_set_default_verify_paths(client_ctx.get());
            if (!options_.upstream_ca_pem.empty()) {
                BIO* bio = BIO_new_mem_buf(options_.upstream_ca_pem.data(),
                                           static_cast<int>(options_.upstream_ca_pem.size()));
                while (X509* extra = PEM_read_bio_X509(bio, nullptr, nullptr, nullptr)) {
                    X509_STORE_add_cert(SSL_CTX_get_cert_store(client_ctx.get()), extra);
                    X509_free(extra);
                }
                ERR_clear_error();
                BIO_free(bio);
            }
        }
        if (!upstream.connect_tls(client_ctx.get(), host)) return bad_gateway("TLS handshake failed");
    }

    std::string out = method + " " + target + " HTTP/1.1\r\n";
    for (const auto& [k, v] : head.headers)
        if (!hop_by_hop(k)) out += k + ": " + v + "\r\n";
    if (!body->empty() || method == "POST" || method == "PUT" || method == "PATCH")
        out += "Content-Length: " + std::to_string(body->size()) + "\r\n";
    out += "Connection: close\r\n\r\n";
    out += *body;
    if (!upstream.write_all(out)) return bad_gateway("write failed");

    auto response_head = upstream.read_head();
    if (!response_head) return bad_gateway("no response");
    Head rhead = parse_head(*response_head);
    ResponseInfo info{url, 0, rhead.get("www-authenticate").has_value()};
    {
        const auto sp = rhead.first_line.find(' ');
        if (sp != std::string::npos) info.status = std::atoi(rhead.first_line.c_str() + sp + 1);
    }
    record_response(info);

    // The client connection is not reused; announce that and relay the rest.
    std::string relay = rhead.first_line + "\r\n";
    for (const auto& [k, v] : rhead.headers)
        if (lower(k) != "connection" && lower(k) != "keep-alive") relay += k + ": " + v + "\r\n";
    relay += "Connection: close\r\n\r\n";
    relay += upstream.take_buffer();
    if (!client.write_all(relay)) return;
    char buf[16384];
    for (;;) {
        const long r = upstream.read_some(buf, sizeof buf);
        if (r <= 0) break;
        touch();
        if (!client.write_all(std::string_view(buf, static_cast<std::size_t>(r)))) break;
    }
}

}  // namespace cdnexpose
