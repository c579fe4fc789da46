#include <httplib.h>

#include <cmath>
#include <ctime>
#include <thread>

#include "cdnexpose/encoding.hpp"
#include "cdnexpose/log.hpp"
#include "cdnexpose/proxy.hpp"
#include "cdnexpose/session.hpp"

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kElementKey = "element-6066-11e4-a52e-4f735466cecf";
constexpr const char* kEnterKey = "\xEE\x80\x87";  // U+E007

const char* const kHarvestScript = R"JS(
const doc = document;
const html = doc.documentElement;
let next = Number(html.getAttribute('data-scan-next') || '1');
const skip = new Set(['script', 'style', 'noscript', 'template', 'head', 'meta', 'link']);
const clickable = new Set(['a', 'button', 'input', 'select', 'textarea', 'label', 'iframe', 'summary']);
const nodes = [];
function walk(el) {
  let id = el.getAttribute('data-scan-node');
  if (!id) { id = String(next++); el.setAttribute('data-scan-node', id); }
  const tag = el.tagName.toLowerCase();
  const r = el.getBoundingClientRect();
  const cs = window.getComputedStyle(el);
  const w = r.width, h = r.height;
  const visible = w > 0 && h > 0 && cs.display !== 'none' && cs.visibility !== 'hidden' &&
      Number(cs.opacity) !== 0;
  const interactive = !el.disabled && cs.pointerEvents !== 'none' &&
      (clickable.has(tag) || el.hasAttribute('onclick') || el.getAttribute('role') === 'button' ||
       el.tabIndex >= 0);
  const attrs = [];
  for (const a of el.attributes) {
    if (a.name !== 'data-scan-node' && a.name !== 'data-scan-next') attrs.push([a.name, a.value]);
  }
  let text = (typeof el.innerText === 'string' ? el.innerText : el.textContent) || '';
  text = text.trim().slice(0, 2000);
  const children = [];
  for (const c of el.children) {
    if (!skip.has(c.tagName.toLowerCase())) children.push(walk(c));
  }
  nodes.push({id: Number(id), tag: tag, attrs: attrs, text: text,
              bbox: [r.top + window.scrollY, r.left + window.scrollX, w, h],
              visible: visible, interactive: interactive, children: children});
  return Number(id);
}
walk(html);
html.setAttribute('data-scan-next', String(next));
return {url: String(location.href), viewport: {width: window.innerWidth, height: window.innerHeight},
        nodes: nodes};
)JS";

const char* const kReadyScript = "return document.readyState;";

std::string rfc3339_from_epoch(double seconds) {
    const auto whole = static_cast<std::time_t>(std::floor(seconds));
    const int ms = static_cast<int>(std::lround((seconds - std::floor(seconds)) * 1000)) % 1000;
    std::tm tm{};
    gmtime_r(&whole, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
    return buf;
}

std::optional<ordered_json> log_message(const json& entry) {
    if (!entry.is_object() || !entry.contains("message") || !entry["message"].is_string())
        return std::nullopt;
    try {
        auto outer = ordered_json::parse(entry["message"].get<std::string>());
        if (outer.contains("message")) return outer["message"];
    } catch (const json::exception&) {
    }
    return std::nullopt;
}

}  // namespace

const std::string& harvest_script() {
    static const std::string script = kHarvestScript;
    return script;
}

std::vector<CapturedRequest> requests_from_performance_log(const json& entries) {
    std::vector<CapturedRequest> out;
    if (!entries.is_array()) return out;
    for (const auto& entry : entries) {
        auto msg = log_message(entry);
        if (!msg || msg->value("method", "") != "Network.requestWillBeSent") continue;
        const auto& params = (*msg)["params"];
        if (!params.contains("request")) continue;
        const auto& req = params["request"];
        const std::string url = req.value("url", "");
        if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0) continue;
        HeaderList headers;
        if (req.contains("headers") && req["headers"].is_object())
            for (const auto& [k, v] : req["headers"].items())
                headers.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
        std::string body;
        if (req.contains("postDataEntries") && req["postDataEntries"].is_array()) {
            for (const auto& part : req["postDataEntries"])
                if (part.contains("bytes"))
                    body += base64_decode(part["bytes"].get<std::string>()).value_or("");
        } else if (req.contains("postData") && req["postData"].is_string()) {
            body = req["postData"].get<std::string>();
        }
        const double wall = params.value("wallTime", 0.0);
        out.push_back(make_request(url, req.value("method", "GET"), std::move(headers),
                                   std::move(body),
                                   wall > 0 ? rfc3339_from_epoch(wall) : utc_now_rfc3339()));
    }
    return out;
}

std::optional<std::pair<int, bool>> document_status_from_performance_log(const json& entries,
                                                                         const std::string& url) {
    std::optional<std::pair<int, bool>> found;
    if (!entries.is_array()) return found;
    for (const auto& entry : entries) {
        auto msg = log_message(entry);
        if (!msg || msg->value("method", "") != "Network.responseReceived") continue;
        const auto& params = (*msg)["params"];
        if (params.value("type", "") != "Document" || !params.contains("response")) continue;
        const auto& resp = params["response"];
        if (resp.value("url", "") != url) continue;
        bool auth = false;
        if (resp.contains("headers") && resp["headers"].is_object())
            for (const auto& [k, v] : resp["headers"].items()) {
                std::string name = k;
                for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                if (name == "www-authenticate") auth = true;
            }
        found = std::make_pair(resp.value("status", 0), auth);
    }
    return found;
}

// ---------------------------------------------------------------------------

struct WebDriverClient::Impl {
    explicit Impl(const std::string& endpoint) : client(endpoint) {}
    httplib::Client client;
};

WebDriverClient::WebDriverClient(std::string endpoint, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(endpoint)) {
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout).count() + 5;
    impl_->client.set_connection_timeout(5, 0);
    impl_->client.set_read_timeout(static_cast<time_t>(secs), 0);
    impl_->client.set_write_timeout(static_cast<time_t>(secs), 0);
}

WebDriverClient::~WebDriverClient() {
    try {
        delete_session();
    } catch (const std::exception& e) {
        log_debug(std::string("webdriver: session cleanup failed: ") + e.what());
    }
}

json WebDriverClient::command(const std::string& method, const std::string& path, const json& body) {
    httplib::Result res;
    if (method == "GET") res = impl_->client.Get(path);
    else if (method == "DELETE") res = impl_->client.Delete(path);
    else res = impl_->client.Post(path, body.dump(), "application/json");
    if (!res) throw DriverError("webdriver " + method + " " + path + ": " + httplib::to_string(res.error()));
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception&) {
        throw DriverError("webdriver returned non-JSON for " + path);
    }
    json value = reply.contains("value") ? reply["value"] : json();
    if (res->status != 200 || (value.is_object() && value.contains("error"))) {
        const std::string error = value.is_object() ? value.value("error", "unknown error") : "unknown error";
        const std::string message = value.is_object() ? value.value("message", "") : "";
        const std::string text = error + (message.empty() ? "" : ": " + message);
        if (error == "timeout" || error == "script timeout" ||
            message.find("net::ERR_") != std::string::npos)
            throw NavigationTimeout(text);
        if (error == "no such element" || error == "stale element reference" ||
            error == "no such frame" || error == "element not interactable")
            throw ElementGone(text);
        throw DriverError(text);
    }
    return value;
}

void WebDriverClient::new_session(const json& capabilities) {
    json value = command("POST", "/session", json{{"capabilities", capabilities}});
    if (!value.contains("sessionId")) throw DriverError("webdriver did not return a session id");
    session_id_ = value["sessionId"].get<std::string>();
}

void WebDriverClient::delete_session() {
    if (session_id_.empty()) return;
    const std::string id = std::exchange(session_id_, {});
    command("DELETE", "/session/" + id);
}

void WebDriverClient::navigate(const std::string& url) {
    command("POST", "/session/" + session_id_ + "/url", json{{"url", url}});
}

json WebDriverClient::execute_script(const std::string& script, const json& args) {
    return command("POST", "/session/" + session_id_ + "/execute/sync",
                   json{{"script", script}, {"args", args}});
}

std::string WebDriverClient::find_css(const std::string& selector) {
    json value = command("POST", "/session/" + session_id_ + "/element",
                         json{{"using", "css selector"}, {"value", selector}});
    if (!value.contains(kElementKey)) throw ElementGone("no element for " + selector);
    return value[kElementKey].get<std::string>();
}

void WebDriverClient::click(const std::string& element) {
    command("POST", "/session/" + session_id_ + "/element/" + element + "/click");
}

void WebDriverClient::send_keys(const std::string& element, const std::string& text) {
    command("POST", "/session/" + session_id_ + "/element/" + element + "/value", json{{"text", text}});
}

void WebDriverClient::clear(const std::string& element) {
    command("POST", "/session/" + session_id_ + "/element/" + element + "/clear");
}

void WebDriverClient::switch_to_frame(const std::string& element) {
    command("POST", "/session/" + session_id_ + "/frame",
            json{{"id", json{{kElementKey, element}}}});
}

void WebDriverClient::switch_to_parent() {
    command("POST", "/session/" + session_id_ + "/frame/parent");
}

json WebDriverClient::logs(const std::string& type) {
    return command("POST", "/session/" + session_id_ + "/se/log", json{{"type", type}});
}

// ---------------------------------------------------------------------------

LiveSession::LiveSession(std::string site, const SessionConfig& config, EthicsLedger& ledger,
                         std::shared_ptr<CertificateAuthority> ca)
    : site_(std::move(site)), config_(config), ledger_(ledger) {
    config_.validate();
    json chrome_args = json::array({"--headless=new", "--disable-gpu", "--no-first-run",
                                    "--window-size=" + std::to_string(config_.viewport_width) + "," +
                                        std::to_string(config_.viewport_height)});
    json caps = {{"browserName", "chrome"},
                 {"pageLoadStrategy", "normal"},
                 {"timeouts",
                  {{"pageLoad", config_.page_load_timeout.count()},
                   {"script", config_.action_timeout.count()},
                   {"implicit", 0}}}};
    if (config_.capture_mode == CaptureMode::proxy) {
        ProxyOptions options;
        options.upstream_ca_pem = config_.upstream_ca_pem;
        options.resolve_overrides = config_.resolve_overrides;
        proxy_ = std::make_unique<CaptureProxy>(ca ? ca : std::make_shared<CertificateAuthority>(), options);
        caps["proxy"] = {{"proxyType", "manual"},
                         {"httpProxy", proxy_->address()},
                         {"sslProxy", proxy_->address()}};
        chrome_args.push_back("--ignore-certificate-errors-spki-list=" +
                              proxy_->authority().leaf_spki_sha256());
        chrome_args.push_back("--proxy-bypass-list=<-loopback>");
    } else {
        caps["goog:loggingPrefs"] = {{"performance", "ALL"}};
        caps["goog:chromeOptions"]["perfLoggingPrefs"] = {{"enableNetwork", true}};
    }
    caps["goog:chromeOptions"]["args"] = chrome_args;
    driver_ = std::make_unique<WebDriverClient>(config_.webdriver_endpoint,
                                                std::max(config_.page_load_timeout, config_.action_timeout));
    driver_->new_session(json{{"alwaysMatch", caps}});
}

LiveSession::~LiveSession() {
    driver_.reset();
    if (proxy_) proxy_->stop();
}

void LiveSession::leave_frame() {
    if (!in_frame_) return;
    driver_->switch_to_parent();
    in_frame_ = false;
}

std::string LiveSession::element_for(const NodeRef& ref) {
    leave_frame();
    if (ref.frame) {
        const auto frame = driver_->find_css("[data-scan-node=\"" + std::to_string(*ref.frame) + "\"]");
        driver_->switch_to_frame(frame);
        in_frame_ = true;
    }
    return driver_->find_css("[data-scan-node=\"" + std::to_string(ref.node) + "\"]");
}

void LiveSession::wait_ready() {
    const auto deadline = std::chrono::steady_clock::now() + config_.page_load_timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        try {
            if (driver_->execute_script(kReadyScript) == "complete") return;
        } catch (const DriverError&) {
            // The page may be between documents.
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    throw NavigationTimeout("page did not finish loading after click");
}

PageSnapshot LiveSession::snapshot_now() {
    leave_frame();
    json doc = driver_->execute_script(harvest_script());
    if (!doc.is_object() || !doc.contains("nodes")) throw DriverError("harvest script returned no snapshot");
    for (auto& node : doc["nodes"]) {
        if (node.value("tag", "") != "iframe") continue;
        try {
            const auto frame = driver_->find_css("[data-scan-node=\"" + std::to_string(node["id"].get<NodeId>()) + "\"]");
            driver_->switch_to_frame(frame);
            in_frame_ = true;
            json inner = driver_->execute_script(harvest_script());
            leave_frame();
            inner["captured_at"] = utc_now_rfc3339();
            node["frame"] = std::move(inner);
        } catch (const ElementGone&) {
            leave_frame();
        } catch (const DriverError& e) {
            log_debug("harvest: iframe skipped: " + std::string(e.what()));
            leave_frame();
        }
    }
    doc["captured_at"] = utc_now_rfc3339();
    return load_snapshot(doc.dump());
}

PageSnapshot LiveSession::harvest(const std::string& url) {
    driver_->navigate(url);
    if (proxy_) {
        auto info = proxy_->last_response_for(url);
        if (!info) {
            const json href = driver_->execute_script("return location.href;");
            if (href.is_string()) info = proxy_->last_response_for(href.get<std::string>());
        }
        if (info && info->status == 401 && info->www_authenticate)
            throw BlockedBySite("HTTP 401 challenge at " + url);
    } else {
        json entries = driver_->logs("performance");
        auto reqs = requests_from_performance_log(entries);
        log_requests_.insert(log_requests_.end(), reqs.begin(), reqs.end());
        auto status = document_status_from_performance_log(entries, url);
        if (status && status->first == 401 && status->second)
            throw BlockedBySite("HTTP 401 challenge at " + url);
    }
    return snapshot_now();
}

PageSnapshot LiveSession::current() { return snapshot_now(); }

std::size_t LiveSession::capture_mark() {
    if (proxy_) return proxy_->mark();
    auto reqs = requests_from_performance_log(driver_->logs("performance"));
    log_requests_.insert(log_requests_.end(), reqs.begin(), reqs.end());
    return log_requests_.size();
}

std::vector<CapturedRequest> LiveSession::captured_since(std::size_t mark) {
    if (proxy_) return proxy_->since(mark);
    auto reqs = requests_from_performance_log(driver_->logs("performance"));
    log_requests_.insert(log_requests_.end(), reqs.begin(), reqs.end());
    if (mark >= log_requests_.size()) return {};
    return {log_requests_.begin() + static_cast<std::ptrdiff_t>(mark), log_requests_.end()};
}

void LiveSession::wait_submission_window(std::size_t mark) {
    if (proxy_) {
        proxy_->wait_idle(config_.network_idle, config_.action_timeout);
        return;
    }
    const auto start = std::chrono::steady_clock::now();
    auto last_change = start;
    std::size_t seen = mark;
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        if (now - start >= config_.action_timeout || now - last_change >= config_.network_idle) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        const std::size_t count = mark + captured_since(mark).size();
        if (count != seen) {
            seen = count;
            last_change = std::chrono::steady_clock::now();
        }
    }
}

SessionOutcome LiveSession::execute(const ActionPlan& plan, const Credentials& creds) {
    SessionOutcome outcome;
    outcome.site = site_;
    bool password_filled = false;
    for (const auto& step : plan.steps) {
        if (const auto* fill = std::get_if<FillStep>(&step)) {
            const std::string value = fill->role == ValueRole::password
                                          ? creds.password()
                                          : (fill->as_email ? creds.email() : creds.account());
            const bool probe = fill->role == ValueRole::account && !password_filled;
            const std::size_t mark = probe ? capture_mark() : 0;
            const auto element = element_for(fill->target);
            driver_->clear(element);
            driver_->send_keys(element, value);
            if (fill->role == ValueRole::password) password_filled = true;
            if (probe && config_.existence_probe.count() > 0) {
                std::this_thread::sleep_for(config_.existence_probe);
                if (is_existence_check(captured_since(mark), creds)) {
                    outcome.skip_reason = SkipReason::existence_check;
                    outcome.diagnostic = "account checked before password entry";
                    leave_frame();
                    return outcome;
                }
            }
        } else if (const auto* enter = std::get_if<PressEnterStep>(&step)) {
            if (has_captcha(snapshot_now())) throw CaptchaDetected("captcha widget on " + site_);
            const auto element = element_for(enter->target);
            ledger_.claim_submission(site_);
            const std::size_t mark = capture_mark();
            driver_->send_keys(element, kEnterKey);
            outcome.submitted = true;
            wait_submission_window(mark);
            outcome.requests = captured_since(mark);
            try {
                leave_frame();
            } catch (const DriverError&) {
                in_frame_ = false;
            }
        } else if (const auto* click = std::get_if<ClickStep>(&step)) {
            driver_->click(element_for(click->target));
            in_frame_ = false;
            try {
                driver_->switch_to_parent();
            } catch (const DriverError&) {
            }
            wait_ready();
        }
    }
    leave_frame();
    return outcome;
}

}  // namespace cdnexpose
