#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/capture.hpp"
#include "cdnexpose/credentials.hpp"
#include "cdnexpose/detector.hpp"
#include "cdnexpose/snapshot.hpp"

namespace cdnexpose {

class NavigationTimeout : public Error {
public:
    using Error::Error;
};
class DriverError : public Error {
public:
    using Error::Error;
};
// HTTP authentication challenge on the landing page.
class BlockedBySite : public Error {
public:
    using Error::Error;
};
class ElementGone : public Error {
public:
    using Error::Error;
};
class CaptchaDetected : public Error {
public:
    using Error::Error;
};
class BundleError : public Error {
public:
    using Error::Error;
};
class EthicsViolation : public Error {
public:
    using Error::Error;
};

enum class CaptureMode { proxy, browser_log };

std::string_view to_string(CaptureMode m);
CaptureMode capture_mode_from_string(std::string_view s);

struct SessionConfig {
    std::string webdriver_endpoint = "http://127.0.0.1:9515";
    std::chrono::milliseconds page_load_timeout{std::chrono::seconds(30)};
    std::chrono::milliseconds action_timeout{std::chrono::seconds(10)};
    // Quiet period that ends the submission window early.
    std::chrono::milliseconds network_idle{std::chrono::seconds(3)};
    // How long to watch for an account-existence request after the account
    // field is filled.
    std::chrono::milliseconds existence_probe{std::chrono::milliseconds(1500)};
    int viewport_width = 1920;
    int viewport_height = 1080;
    CaptureMode capture_mode = CaptureMode::proxy;
    // Extra PEM trust anchor for the capture proxy's upstream connections.
    std::string upstream_ca_pem;
    // Passed to the capture proxy; see ProxyOptions::resolve_overrides.
    std::map<std::string, std::string> resolve_overrides;

    // One login trial per site; not configurable.
    static constexpr int max_attempts_per_site = 1;

    // Throws ConfigError.
    void validate() const;
};

// Counts credential submissions per domain across a run and refuses a
// second one. Shared by all workers.
class EthicsLedger {
public:
    // Throws EthicsViolation if the domain already had its submission.
    void claim_submission(const std::string& domain);
    int submissions(const std::string& domain) const;
    int max_submissions() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, int> counts_;
};

// One browser (or replayed browser) bound to one site.
class SiteSession {
public:
    virtual ~SiteSession() = default;

    virtual const std::string& site() const = 0;
    // Navigates and returns the rendered page.
    virtual PageSnapshot harvest(const std::string& url) = 0;
    // The current page after clicks.
    virtual PageSnapshot current() = 0;
    // Runs the plan. submitted=true iff a PressEnter step ran.
    virtual SessionOutcome execute(const ActionPlan& plan, const Credentials& creds) = 0;
};

// reCAPTCHA, hCaptcha and Turnstile widgets, by iframe source or class.
bool has_captcha(const PageSnapshot& page);

// A request sent after only the account was filled that carries it.
bool is_existence_check(const std::vector<CapturedRequest>& requests, const Credentials& creds);

struct TrialConfig {
    KeywordLexicon lexicon = KeywordLexicon::defaults();
    ScoringWeights weights = ScoringWeights::defaults();
    int max_depth = kDefaultMaxDepth;
    // Wall-clock budget for the whole trial; checked between steps.
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct TrialResult {
    std::vector<PageSnapshot> snapshots;
    std::vector<ActionPlan> plans;
    SessionOutcome outcome;
    // The planner produced a submitting plan and it was handed to the session.
    bool attempted_submission = false;
};

// harvest, then detect/plan/execute while the plan asks to recurse. Session
// errors become skip reasons on the outcome; nothing but EthicsViolation
// escapes.
TrialResult run_login_trial(SiteSession& session, const std::string& url, const Credentials& creds,
                            const TrialConfig& config = {});

// ---------------------------------------------------------------------------
// Replay

struct ReplayTransition {
    std::size_t from = 0;
    NodeRef click;
    std::size_t to = 0;
};

struct ReplaySubmission {
    std::size_t snapshot = 0;
    NodeRef target;
    std::vector<CapturedRequest> requests;
};

struct ReplayBundle {
    std::string directory;
    std::string site;
    std::int64_t rank = 0;
    std::string url;
    bool https = true;
    int http_status = 200;
    std::optional<bool> has_login;
    std::optional<std::string> category;
    std::optional<Credentials> credentials;
    std::vector<PageSnapshot> snapshots;
    std::vector<ReplayTransition> transitions;
    // Requests observed after filling only the account on a snapshot.
    std::map<std::size_t, std::vector<CapturedRequest>> account_probe;
    std::optional<ReplaySubmission> submission;
    std::optional<nlohmann::json> expected_record;
};

// Throws BundleError for a missing or inconsistent bundle.
ReplayBundle load_bundle(const std::string& directory);

// Parses "12" or "4/12" (iframe/node).
NodeRef parse_node_ref(std::string_view text);

class ReplaySession : public SiteSession {
public:
    ReplaySession(const ReplayBundle& bundle, EthicsLedger& ledger);

    const std::string& site() const override { return bundle_.site; }
    PageSnapshot harvest(const std::string& url) override;
    PageSnapshot current() override;
    SessionOutcome execute(const ActionPlan& plan, const Credentials& creds) override;

private:
    const ReplayBundle& bundle_;
    EthicsLedger& ledger_;
    std::size_t position_ = 0;
    bool opened_ = false;
};

// The recorded snapshot sequence and the outcome of replaying the
// recorded submission as-is.
std::pair<std::vector<PageSnapshot>, SessionOutcome> replay(const std::string& bundle_dir);

// ---------------------------------------------------------------------------
// Live

class CaptureProxy;
class CertificateAuthority;

// Minimal W3C WebDriver client.
class WebDriverClient {
public:
    WebDriverClient(std::string endpoint, std::chrono::milliseconds timeout);
    ~WebDriverClient();
    WebDriverClient(const WebDriverClient&) = delete;
    WebDriverClient& operator=(const WebDriverClient&) = delete;

    void new_session(const nlohmann::json& capabilities);
    void delete_session();
    const std::string& session_id() const { return session_id_; }

    void navigate(const std::string& url);
    nlohmann::json execute_script(const std::string& script, const nlohmann::json& args = nlohmann::json::array());
    std::string find_css(const std::string& selector);
    void click(const std::string& element);
    void send_keys(const std::string& element, const std::string& text);
    void clear(const std::string& element);
    void switch_to_frame(const std::string& element);
    void switch_to_parent();
    nlohmann::json logs(const std::string& type);

    // Raw command; throws DriverError (NavigationTimeout for "timeout",
    // ElementGone for missing or stale elements).
    nlohmann::json command(const std::string& method, const std::string& path,
                           const nlohmann::json& body = nlohmann::json::object());

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string session_id_;
};

// Script run through execute/sync that tags every element with
// data-scan-node and returns the snapshot document of the current frame.
const std::string& harvest_script();

// Chrome performance-log entries to requests (Network.requestWillBeSent).
std::vector<CapturedRequest> requests_from_performance_log(const nlohmann::json& entries);
// Main-document HTTP status and WWW-Authenticate header from the same log.
std::optional<std::pair<int, bool>> document_status_from_performance_log(const nlohmann::json& entries,
                                                                         const std::string& url);

class LiveSession : public SiteSession {
public:
    // With capture_mode proxy a private proxy is started for this session.
    LiveSession(std::string site, const SessionConfig& config, EthicsLedger& ledger,
                std::shared_ptr<CertificateAuthority> ca = nullptr);
    ~LiveSession() override;

    const std::string& site() const override { return site_; }
    PageSnapshot harvest(const std::string& url) override;
    PageSnapshot current() override;
    SessionOutcome execute(const ActionPlan& plan, const Credentials& creds) override;

    CaptureProxy* proxy() { return proxy_.get(); }

private:
    std::string element_for(const NodeRef& ref);
    void leave_frame();
    PageSnapshot snapshot_now();
    void wait_ready();
    std::size_t capture_mark();
    std::vector<CapturedRequest> captured_since(std::size_t mark);
    void wait_submission_window(std::size_t mark);

    std::string site_;
    SessionConfig config_;
    EthicsLedger& ledger_;
    std::unique_ptr<CaptureProxy> proxy_;
    std::unique_ptr<WebDriverClient> driver_;
    std::vector<CapturedRequest> log_requests_;
    bool in_frame_ = false;
};

}  // namespace cdnexpose
