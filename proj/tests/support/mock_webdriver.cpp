#include "mock_webdriver.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>

#include <openssl/pem.h>
#include <openssl/ssl.h>

#include "cdnexpose/encoding.hpp"
#include "cdnexpose/session.hpp"
#include "test_support.hpp"

using nlohmann::json;

namespace testsupport {

namespace {

constexpr const char* kElementKey = "element-6066-11e4-a52e-4f735466cecf";
constexpr const char* kEnter = "\xEE\x80\x87";

struct Url {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string target;
};

Url parse_url(const std::string& u) {
    Url out;
    const auto sep = u.find("://");
    out.scheme = u.substr(0, sep);
    const auto rest = u.substr(sep + 3);
    const auto slash = rest.find_first_of("/?");
    const auto authority = rest.substr(0, slash);
    out.target = slash == std::string::npos ? "/" : rest.substr(slash);
    if (out.target.front() == '?') out.target = "/" + out.target;
    const auto colon = authority.rfind(':');
    out.host = authority.substr(0, colon);
    out.port = colon == std::string::npos ? (out.scheme == "https" ? 443 : 80)
                                          : std::stoi(authority.substr(colon + 1));
    return out;
}

std::string resolve(const std::string& base, const std::string& ref) {
    if (ref.find("://") != std::string::npos) return ref;
    const auto sep = base.find("://");
    const auto path_start = base.find('/', sep + 3);
    const std::string origin = base.substr(0, path_start);
    if (!ref.empty() && ref.front() == '/') return origin + ref;
    std::string dir = path_start == std::string::npos ? "/" : base.substr(path_start);
    dir = dir.substr(0, dir.rfind('/') + 1);
    return origin + dir + ref;
}

std::pair<std::string, int> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    return {address.substr(0, colon), std::stoi(address.substr(colon + 1))};
}

std::optional<std::string> attr(const json& node, const std::string& name) {
    for (const auto& kv : node.value("attrs", json::array()))
        if (kv[0] == name) return kv[1].get<std::string>();
    return std::nullopt;
}

json blank_doc(const std::string& url) {
    return {{"url", url},
            {"viewport", {{"width", 1920}, {"height", 1080}}},
            {"nodes",
             {{{"id", 1},
               {"tag", "html"},
               {"attrs", json::array()},
               {"text", ""},
               {"bbox", {0, 0, 1920, 1080}},
               {"visible", true},
               {"interactive", false},
               {"children", json::array()}}}}};
}

struct WdError {
    int status;
    std::string error;
    std::string message;
};

int sni_callback(SSL* ssl, int*, void* arg) {
    auto* ca = static_cast<cdnexpose::CertificateAuthority*>(arg);
    if (const char* name = SSL_get_servername(ssl, TLSEXT_NAMETYPE_host_name))
        SSL_set_SSL_CTX(ssl, ca->server_context(name));
    return SSL_TLSEXT_ERR_OK;
}

bool use_pem(SSL_CTX& ctx, const std::string& cert_pem, const std::string& key_pem) {
    BIO* cb = BIO_new_mem_buf(cert_pem.data(), static_cast<int>(cert_pem.size()));
    X509* cert = PEM_read_bio_X509(cb, nullptr, nullptr, nullptr);
    BIO_free(cb);
    BIO* kb = BIO_new_mem_buf(key_pem.data(), static_cast<int>(key_pem.size()));
    EVP_PKEY* key = PEM_read_bio_PrivateKey(kb, nullptr, nullptr, nullptr);
    BIO_free(kb);
    const bool ok = cert && key && SSL_CTX_use_certificate(&ctx, cert) == 1 &&
                    SSL_CTX_use_PrivateKey(&ctx, key) == 1;
    X509_free(cert);
    EVP_PKEY_free(key);
    return ok;
}

double wall_now() {
    using namespace std::chrono;
    return duration_cast<duration<double>>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

json without_capture_time(json doc) {
    if (doc.is_object()) {
        doc.erase("captured_at");
        for (auto& [_, v] : doc.items()) v = without_capture_time(v);
    } else if (doc.is_array()) {
        for (auto& v : doc) v = without_capture_time(v);
    }
    return doc;
}

// ---------------------------------------------------------------------------

OriginServer::OriginServer() : ca_(std::make_shared<cdnexpose::CertificateAuthority>("mock origin root")) {
    auto* ca = ca_.get();
    server_ = std::make_unique<httplib::SSLServer>([ca](SSL_CTX& ctx) {
        if (!use_pem(ctx, ca->leaf_pem("localhost"), ca->leaf_key_pem())) return false;
        SSL_CTX_set_tlsext_servername_callback(&ctx, sni_callback);
        SSL_CTX_set_tlsext_servername_arg(&ctx, ca);
        return true;
    });
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::string host = req.get_header_value("Host");
        if (auto colon = host.rfind(':'); colon != std::string::npos) host = host.substr(0, colon);
        const std::string url = "https://" + host + req.target;
        std::lock_guard lock(mutex_);
        log_.push_back({req.method, url, req.body});
        auto it = routes_.find(url);
        if (it != routes_.end()) {
            res.status = it->second.status;
            for (const auto& [k, v] : it->second.headers) res.set_header(k, v);
            res.set_content(it->second.body, "application/json");
        } else if (req.method == "POST") {
            res.status = 303;
            res.set_header("Location", "/welcome");
        } else {
            res.status = 404;
            res.set_content("not found", "text/plain");
        }
    };
    server_->Get(".*", handler);
    server_->Post(".*", handler);
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

OriginServer::~OriginServer() {
    server_->stop();
    thread_.join();
}

std::string OriginServer::ca_pem() const { return ca_->ca_pem(); }

void OriginServer::serve_page(const json& doc) { serve(doc["url"].get<std::string>(), 200, doc.dump()); }

void OriginServer::serve(const std::string& url, int status, const std::string& body,
                         cdnexpose::HeaderList headers) {
    std::lock_guard lock(mutex_);
    routes_[url] = Route{status, body, std::move(headers)};
}

std::vector<LoggedRequest> OriginServer::log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t OriginServer::log_size() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

// ---------------------------------------------------------------------------

struct MockWebDriver::Session {
    std::string proxy;
    std::string url;
    json doc;
    int gen = 0;
    long frame = 0;  // 0 = top-level document
    std::map<std::string, std::string> values;
    json perf = json::array();

    json& context() {
        if (frame == 0) return doc;
        for (auto& n : doc["nodes"])
            if (n["id"] == frame && n.contains("frame")) return n["frame"];
        throw WdError{404, "no such frame", "frame " + std::to_string(frame) + " is gone"};
    }
};

struct MockWebDriver::Fetched {
    int status = 0;
    std::string body;
    std::string location;
};

MockWebDriver::MockWebDriver() : server_(std::make_unique<httplib::Server>()) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        json body = json::object();
        if (!req.body.empty()) body = json::parse(req.body, nullptr, false);
        int status = 200;
        json reply;
        {
            std::lock_guard lock(mutex_);
            reply = handle(req.method, req.path, body, status);
        }
        res.status = status;
        res.set_content(reply.dump(), "application/json");
    };
    server_->Get(".*", handler);
    server_->Post(".*", handler);
    server_->Delete(".*", handler);
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

MockWebDriver::~MockWebDriver() {
    server_->stop();
    thread_.join();
}

void MockWebDriver::route(const std::string& host, const std::string& address) {
    std::lock_guard lock(mutex_);
    routes_[host] = address;
}

void MockWebDriver::on_click(const std::string& page_url, long node, json doc) {
    std::lock_guard lock(mutex_);
    scripted_[{page_url, node}] = std::move(doc);
}

int MockWebDriver::sessions_created() const {
    std::lock_guard lock(mutex_);
    return sessions_created_;
}

int MockWebDriver::enter_presses() const {
    std::lock_guard lock(mutex_);
    return enter_presses_;
}

MockWebDriver::Fetched MockWebDriver::fetch(Session& s, const std::string& method,
                                            const std::string& url, const std::string& body,
                                            const std::string& content_type, bool document) {
    const Url u = parse_url(url);
    std::string host = u.host;
    int port = u.port;
    httplib::Headers headers{{"User-Agent", "MockBrowser/1.0"}};
    if (s.proxy.empty()) {
        auto it = routes_.find(u.host);
        if (it == routes_.end())
            throw WdError{500, "unknown error", "net::ERR_NAME_NOT_RESOLVED at " + url};
        std::tie(host, port) = split_address(it->second);
        headers.emplace("Host", u.host);
    }
    std::unique_ptr<httplib::ClientImpl> client;
    if (u.scheme == "https") {
        auto tls = std::make_unique<httplib::SSLClient>(host, port);
        tls->enable_server_certificate_verification(false);
        client = std::move(tls);
    } else {
        client = std::make_unique<httplib::ClientImpl>(host, port);
    }
    if (!s.proxy.empty()) {
        auto [ph, pp] = split_address(s.proxy);
        client->set_proxy(ph, pp);
    }
    client->set_connection_timeout(5, 0);
    client->set_read_timeout(10, 0);

    json req_headers = json::object();
    for (const auto& [k, v] : headers) req_headers[k] = v;
    json request = {{"url", url}, {"method", method}, {"headers", req_headers}};
    if (!body.empty()) {
        request["postData"] = body;
        request["headers"]["Content-Type"] = content_type;
    }
    auto log_event = [&](json message) {
        s.perf.push_back({{"level", "INFO"},
                          {"timestamp", 0},
                          {"message", json{{"message", std::move(message)}, {"webview", "mock"}}.dump()}});
    };
    log_event({{"method", "Network.requestWillBeSent"},
               {"params", {{"wallTime", wall_now()}, {"request", request}}}});

    auto res = method == "GET" ? client->Get(u.target, headers)
                               : client->Post(u.target, headers, body, content_type);
    if (!res || res->status == 502)
        throw WdError{500, "unknown error", "net::ERR_CONNECTION_FAILED at " + url};

    json resp_headers = json::object();
    for (const auto& [k, v] : res->headers) resp_headers[k] = v;
    log_event({{"method", "Network.responseReceived"},
               {"params",
                {{"type", document ? "Document" : "XHR"},
                 {"response", {{"url", url}, {"status", res->status}, {"headers", resp_headers}}}}}});
    return {res->status, res->body, res->get_header_value("Location")};
}

json MockWebDriver::navigate(Session& s, const std::string& start) {
    std::string url = start;
    Fetched f;
    for (int hop = 0; hop < 5; ++hop) {
        f = fetch(s, "GET", url, "", "", true);
        if (f.status < 300 || f.status >= 400 || f.location.empty()) break;
        url = resolve(url, f.location);
    }
    json doc = json::parse(f.body, nullptr, false);
    if (!doc.is_object() || !doc.contains("nodes")) doc = blank_doc(url);
    doc["url"] = url;
    s.doc = std::move(doc);
    s.url = url;
    s.frame = 0;
    s.values.clear();
    ++s.gen;
    return nullptr;
}

json MockWebDriver::submit(Session& s, const std::string& handle) {
    int gen = 0;
    long frame = 0, node = 0;
    std::sscanf(handle.c_str(), "g%d:c%ld:n%ld", &gen, &frame, &node);
    const json& doc = s.context();
    std::map<long, long> parent;
    std::map<long, const json*> by_id;
    for (const auto& n : doc["nodes"]) {
        by_id[n["id"].get<long>()] = &n;
        for (const auto& c : n["children"]) parent[c.get<long>()] = n["id"].get<long>();
    }
    const json* form = nullptr;
    for (long at = node; parent.count(at);) {
        at = parent[at];
        if (by_id[at]->at("tag") == "form") {
            form = by_id[at];
            break;
        }
    }
    if (!form) return nullptr;
    const long form_id = form->at("id").get<long>();
    auto inside = [&](long id) {
        for (long at = id; parent.count(at);) {
            at = parent[at];
            if (at == form_id) return true;
        }
        return false;
    };

    const bool as_json = attr(*form, "data-enc") == std::string("json");
    json fields = json::object();
    std::string encoded;
    for (const auto& n : doc["nodes"]) {
        if (n["tag"] != "input" || !inside(n["id"].get<long>())) continue;
        auto name = attr(n, "name");
        auto type = attr(n, "type").value_or("text");
        if (!name || type == "submit" || type == "button") continue;
        const std::string key = "c" + std::to_string(frame) + ":n" + std::to_string(n["id"].get<long>());
        auto typed = s.values.find(key);
        const std::string value = typed != s.values.end() ? typed->second : attr(n, "value").value_or("");
        fields[*name] = value;
        if (!encoded.empty()) encoded += '&';
        encoded += cdnexpose::form_encode(*name) + "=" + cdnexpose::form_encode(value);
    }
    const std::string action = resolve(doc["url"].get<std::string>(), attr(*form, "action").value_or(""));
    std::string next;
    if (attr(*form, "method").value_or("post") == "get") {
        next = action + (action.find('?') == std::string::npos ? "?" : "&") + encoded;
    } else {
        auto f = as_json ? fetch(s, "POST", action, fields.dump(), "application/json", false)
                         : fetch(s, "POST", action, encoded, "application/x-www-form-urlencoded", false);
        next = f.status >= 300 && f.status < 400 && !f.location.empty() ? resolve(action, f.location) : "";
    }
    if (!next.empty()) navigate(s, next);
    return nullptr;
}

json MockWebDriver::handle(const std::string& method, const std::string& path, const json& body,
                           int& status) {
    try {
        std::vector<std::string> parts;
        for (std::size_t at = 1; at <= path.size();) {
            auto slash = path.find('/', at);
            if (slash == std::string::npos) slash = path.size();
            parts.push_back(path.substr(at, slash - at));
            at = slash + 1;
        }
        if (parts.empty() || parts[0] != "session") throw WdError{404, "unknown command", path};
        if (parts.size() == 1 && method == "POST") {
            const std::string id = "mock-" + std::to_string(++sessions_created_);
            auto s = std::make_unique<Session>();
            const json caps = body.value("capabilities", json::object()).value("alwaysMatch", json::object());
            if (caps.contains("proxy")) s->proxy = caps["proxy"].value("sslProxy", "");
            s->doc = blank_doc("about:blank");
            s->url = "about:blank";
            sessions_[id] = std::move(s);
            return {{"value", {{"sessionId", id}, {"capabilities", {{"browserName", "mock"}}}}}};
        }
        auto it = sessions_.find(parts.size() > 1 ? parts[1] : "");
        if (it == sessions_.end()) throw WdError{404, "invalid session id", path};
        Session& s = *it->second;
        if (parts.size() == 2 && method == "DELETE") {
            sessions_.erase(it);
            return {{"value", nullptr}};
        }
        const std::string cmd = parts.size() > 2 ? parts[2] : "";

        auto element = [&](const std::string& h) -> const json& {
            int gen = 0;
            long frame = 0, node = 0;
            if (std::sscanf(h.c_str(), "g%d:c%ld:n%ld", &gen, &frame, &node) != 3 || gen != s.gen ||
                frame != s.frame)
                throw WdError{404, "stale element reference", h};
            for (const auto& n : s.context()["nodes"])
                if (n["id"] == node) return n;
            throw WdError{404, "stale element reference", h};
        };

        if (cmd == "url") return {{"value", navigate(s, body.at("url").get<std::string>())}};
        if (cmd == "execute") {
            const auto script = body.value("script", "");
            if (script == "return document.readyState;") return {{"value", "complete"}};
            if (script == "return location.href;") return {{"value", s.frame ? s.context()["url"] : json(s.url)}};
            if (script == cdnexpose::harvest_script()) {
                json doc = s.context();
                doc.erase("captured_at");
                for (auto& n : doc["nodes"]) n.erase("frame");
                return {{"value", doc}};
            }
            throw WdError{500, "javascript error", "unsupported script"};
        }
        if (cmd == "element" && parts.size() == 3) {
            const auto selector = body.value("value", "");
            long id = 0;
            if (std::sscanf(selector.c_str(), "[data-scan-node=\"%ld\"]", &id) != 1)
                throw WdError{400, "invalid selector", selector};
            for (const auto& n : s.context()["nodes"])
                if (n["id"] == id) {
                    const std::string h = "g" + std::to_string(s.gen) + ":c" + std::to_string(s.frame) +
                                          ":n" + std::to_string(id);
                    return {{"value", {{kElementKey, h}}}};
                }
            throw WdError{404, "no such element", selector};
        }
        if (cmd == "element" && parts.size() == 5) {
            const std::string h = parts[3];
            const json& node = element(h);
            const std::string key = "c" + std::to_string(s.frame) + ":n" + std::to_string(node["id"].get<long>());
            if (parts[4] == "click") {
                if (auto href = attr(node, "href"))
                    return {{"value", navigate(s, resolve(s.context()["url"].get<std::string>(), *href))}};
                auto scripted = scripted_.find({s.context()["url"].get<std::string>(), node["id"].get<long>()});
                if (scripted != scripted_.end()) {
                    s.doc = scripted->second;
                    s.frame = 0;
                    s.values.clear();
                    ++s.gen;
                }
                return {{"value", nullptr}};
            }
            if (parts[4] == "clear") {
                s.values[key].clear();
                return {{"value", nullptr}};
            }
            if (parts[4] == "value") {
                const auto text = body.value("text", "");
                if (text == kEnter) {
                    ++enter_presses_;
                    return {{"value", submit(s, h)}};
                }
                s.values[key] += text;
                if (auto probe = attr(node, "data-probe")) {
                    const auto target = resolve(s.context()["url"].get<std::string>(),
                                                *probe + cdnexpose::form_encode(s.values[key]));
                    fetch(s, "GET", target, "", "", false);
                }
                return {{"value", nullptr}};
            }
        }
        if (cmd == "frame" && parts.size() == 3) {
            const auto h = body.at("id").value(kElementKey, "");
            const json& node = element(h);
            if (s.frame != 0 || node["tag"] != "iframe" || !node.contains("frame"))
                throw WdError{404, "no such frame", h};
            s.frame = node["id"].get<long>();
            return {{"value", nullptr}};
        }
        if (cmd == "frame" && parts.size() == 4 && parts[3] == "parent") {
            s.frame = 0;
            return {{"value", nullptr}};
        }
        if (cmd == "se" && parts.size() == 4 && parts[3] == "log") {
            json out = std::exchange(s.perf, json::array());
            return {{"value", out}};
        }
        throw WdError{404, "unknown command", method + " " + path};
    } catch (const WdError& e) {
        status = e.status;
        return {{"value", {{"error", e.error}, {"message", e.message}}}};
    } catch (const json::exception& e) {
        status = 400;
        return {{"value", {{"error", "invalid argument"}, {"message", e.what()}}}};
    }
}

LiveSite serve_corpus_site(OriginServer& origin, MockWebDriver& driver, const std::string& dir) {
    LiveSite site;
    site.manifest = json::parse(read_file(dir + "/manifest.json"));
    site.domain = site.manifest["site"].get<std::string>();
    site.url = site.manifest["url"].get<std::string>();
    site.host = cdnexpose::host_of(site.url);

    std::vector<json> docs;
    for (const auto& rel : site.manifest["snapshots"]) docs.push_back(json::parse(read_file(dir + "/" + rel.get<std::string>())));
    for (const auto& probe : site.manifest.value("account_probe", json::array())) {
        const auto at = probe["snapshot"].get<std::size_t>();
        const auto ref = cdnexpose::parse_node_ref(site.manifest["ground_truth"]["account"].get<std::string>());
        json* nodes = &docs[at]["nodes"];
        if (ref.frame)
            for (auto& n : *nodes)
                if (n["id"] == *ref.frame) nodes = &n["frame"]["nodes"];
        for (auto& n : *nodes)
            if (n["id"] == ref.node) n["attrs"].push_back({"data-probe", "/api/accounts/exists?email="});
    }
    for (const auto& t : site.manifest["transitions"]) {
        const auto& from = docs[t["from"].get<std::size_t>()];
        const auto& to = docs[t["to"].get<std::size_t>()];
        if (from["url"] == to["url"])
            driver.on_click(from["url"].get<std::string>(), std::stol(t["click"].get<std::string>()), to);
    }
    const int status = site.manifest.value("http_status", 200);
    for (const auto& doc : docs) {
        const auto url = doc["url"].get<std::string>();
        site.hosts.insert(cdnexpose::host_of(url));
        for (const auto& n : doc["nodes"])
            if (n.contains("frame")) site.hosts.insert(cdnexpose::host_of(n["frame"]["url"].get<std::string>()));
        if (site.served.count(url)) continue;
        site.served[url] = doc;
        if (url == site.url && status == 401)
            origin.serve(url, 401, doc.dump(), {{"WWW-Authenticate", "Basic realm=\"members\""}});
        else
            origin.serve_page(doc);
    }
    for (const auto& host : site.hosts) driver.route(host, origin.address());
    return site;
}

}  // namespace testsupport
