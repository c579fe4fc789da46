#include "cdnexpose/session.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdnexpose/encoding.hpp"
#include "cdnexpose/log.hpp"

namespace cdnexpose {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(CaptureMode m) {
    return m == CaptureMode::proxy ? "proxy" : "browser-log";
}

CaptureMode capture_mode_from_string(std::string_view s) {
    if (s == "proxy") return CaptureMode::proxy;
    if (s == "browser-log") return CaptureMode::browser_log;
    throw ConfigError("capture mode must be 'proxy' or 'browser-log', got '" + std::string(s) + "'");
}

void SessionConfig::validate() const {
    using std::chrono::milliseconds;
    if (page_load_timeout <= milliseconds(0) || action_timeout <= milliseconds(0) ||
        network_idle <= milliseconds(0) || existence_probe < milliseconds(0))
        throw ConfigError("session timeouts must be positive");
    if (viewport_width <= 0 || viewport_height <= 0) throw ConfigError("viewport must be positive");
    if (webdriver_endpoint.rfind("http://", 0) != 0)
        throw ConfigError("webdriver endpoint must be an http:// URL");
}

void EthicsLedger::claim_submission(const std::string& domain) {
    std::lock_guard lock(mutex_);
    int& n = counts_[domain];
    if (n >= SessionConfig::max_attempts_per_site)
        throw EthicsViolation("second credential submission refused for " + domain);
    ++n;
}

int EthicsLedger::submissions(const std::string& domain) const {
    std::lock_guard lock(mutex_);
    auto it = counts_.find(domain);
    return it == counts_.end() ? 0 : it->second;
}

int EthicsLedger::max_submissions() const {
    std::lock_guard lock(mutex_);
    int best = 0;
    for (const auto& [_, n] : counts_) best = std::max(best, n);
    return best;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool captcha_node(const ElementNode& node) {
    static const char* kSources[] = {"google.com/recaptcha", "recaptcha.net", "hcaptcha.com",
                                     "challenges.cloudflare.com"};
    static const char* kClasses[] = {"g-recaptcha", "h-captcha", "cf-turnstile"};
    if (auto src = node.attribute("src")) {
        const auto s = lower(*src);
        for (const char* k : kSources)
            if (s.find(k) != std::string::npos) return true;
    }
    if (auto cls = node.attribute("class")) {
        const auto c = lower(*cls);
        for (const char* k : kClasses)
            if (c.find(k) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

bool has_captcha(const PageSnapshot& page) {
    for (const auto& node : page.nodes) {
        if (captcha_node(node)) return true;
        if (node.frame && has_captcha(*node.frame)) return true;
    }
    return false;
}

bool is_existence_check(const std::vector<CapturedRequest>& requests, const Credentials& creds) {
    for (const auto& r : requests) {
        for (const auto& id : {creds.account(), creds.email()}) {
            for (std::string_view where : {std::string_view(r.body), std::string_view(r.url)}) {
                if (where.find(id) != std::string_view::npos ||
                    where.find(form_encode(id)) != std::string_view::npos ||
                    where.find(base64_encode(id, Base64Alphabet::standard, false)) !=
                        std::string_view::npos)
                    return true;
            }
        }
    }
    return false;
}

TrialResult run_login_trial(SiteSession& session, const std::string& url, const Credentials& creds,
                            const TrialConfig& config) {
    TrialResult result;
    result.outcome.site = session.site();
    auto skip = [&](SkipReason reason, const std::string& diagnostic) {
        result.outcome.submitted = false;
        result.outcome.requests.clear();
        result.outcome.skip_reason = reason;
        result.outcome.diagnostic = diagnostic;
    };
    try {
        PageSnapshot page = session.harvest(url);
        result.snapshots.push_back(page);
        bool retried = false;
        int depth = 0;
        for (;;) {
            if (config.deadline && std::chrono::steady_clock::now() > *config.deadline) {
                skip(SkipReason::timeout, "site budget exhausted");
                break;
            }
            const DetectionResult detection = detect(page, config.lexicon, config.weights);
            auto plan = plan_actions(detection, creds, depth, config.max_depth);
            if (!plan) break;
            result.plans.push_back(*plan);
            if (plan->submits()) result.attempted_submission = true;
            try {
                SessionOutcome outcome = session.execute(*plan, creds);
                if (plan->submits() || outcome.skip_reason) {
                    outcome.site = result.outcome.site;
                    result.outcome = std::move(outcome);
                    break;
                }
            } catch (const ElementGone& e) {
                if (retried) {
                    skip(SkipReason::error, std::string("element gone: ") + e.what());
                    break;
                }
                retried = true;
                page = session.current();
                result.snapshots.push_back(page);
                continue;
            }
            ++depth;
            page = session.current();
            result.snapshots.push_back(page);
        }
    } catch (const EthicsViolation&) {
        throw;
    } catch (const BlockedBySite& e) {
        skip(SkipReason::http_auth, e.what());
    } catch (const CaptchaDetected& e) {
        skip(SkipReason::captcha, e.what());
    } catch (const NavigationTimeout& e) {
        skip(SkipReason::timeout, e.what());
    } catch (const std::exception& e) {
        skip(SkipReason::error, e.what());
    }
    return result;
}

// ---------------------------------------------------------------------------

NodeRef parse_node_ref(std::string_view text) {
    auto number = [&](std::string_view s) -> NodeId {
        if (s.empty() || s.size() > 18 || !std::all_of(s.begin(), s.end(), ::isdigit))
            throw BundleError("bad node reference '" + std::string(text) + "'");
        return std::stoll(std::string(s));
    };
    NodeRef ref;
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) {
        ref.node = number(text);
    } else {
        ref.frame = number(text.substr(0, slash));
        ref.node = number(text.substr(slash + 1));
    }
    return ref;
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw BundleError("missing bundle file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw BundleError(path.string() + ": " + e.what());
    }
}

std::vector<CapturedRequest> read_requests(const fs::path& dir, const json& list) {
    if (!list.is_array()) throw BundleError("request list must be an array");
    std::vector<CapturedRequest> out;
    for (const auto& item : list) {
        if (!item.is_string()) throw BundleError("request entries must be paths");
        try {
            out.push_back(request_from_json(read_json(dir / item.get<std::string>())));
        } catch (const SchemaError& e) {
            throw BundleError(item.get<std::string>() + ": " + e.what());
        }
    }
    return out;
}

bool has_node(const PageSnapshot& page, const NodeRef& ref) {
    if (!ref.frame) return page.find(ref.node) != nullptr;
    const auto* frame = page.find(*ref.frame);
    return frame && frame->frame && frame->frame->find(ref.node);
}

}  // namespace

ReplayBundle load_bundle(const std::string& directory) {
    const fs::path dir(directory);
    if (!fs::is_directory(dir)) throw BundleError("not a bundle directory: " + directory);
    if (!fs::exists(dir / "manifest.json")) throw BundleError("bundle has no manifest.json: " + directory);
    const json manifest = read_json(dir / "manifest.json");
    ReplayBundle b;
    b.directory = directory;
    try {
        b.site = manifest.at("site").get<std::string>();
        b.rank = manifest.value("rank", std::int64_t{0});
        b.https = manifest.value("https", true);
        b.url = manifest.value("url", "https://" + b.site + "/");
        b.http_status = manifest.value("http_status", 200);
        if (manifest.contains("has_login")) b.has_login = manifest["has_login"].get<bool>();
        if (manifest.contains("category") && !manifest["category"].is_null())
            b.category = manifest["category"].get<std::string>();
        if (manifest.contains("credentials")) {
            const auto& c = manifest["credentials"];
            b.credentials = Credentials(c.at("account").get<std::string>(),
                                        c.at("password").get<std::string>());
        }
        const auto& snapshots = manifest.at("snapshots");
        if (!snapshots.is_array() || snapshots.empty())
            throw BundleError("bundle lists no snapshots: " + directory);
        for (const auto& s : snapshots) {
            try {
                b.snapshots.push_back(load_snapshot(read_text(dir / s.get<std::string>())));
            } catch (const SchemaError& e) {
                throw BundleError(s.get<std::string>() + ": " + e.what());
            } catch (const InvariantError& e) {
                throw BundleError(s.get<std::string>() + ": " + e.what());
            }
        }
        if (manifest.contains("node_counts")) {
            const auto& counts = manifest["node_counts"];
            if (counts.size() != b.snapshots.size())
                throw BundleError("node_counts does not match the snapshot list");
            for (std::size_t i = 0; i < counts.size(); ++i)
                if (counts[i].get<std::size_t>() != b.snapshots[i].nodes.size())
                    throw BundleError("snapshot " + std::to_string(i) + " node count differs from manifest");
        }
        const auto in_range = [&](std::size_t i) {
            if (i >= b.snapshots.size()) throw BundleError("snapshot index out of range");
            return i;
        };
        for (const auto& t : manifest.value("transitions", json::array())) {
            ReplayTransition tr;
            tr.from = in_range(t.at("from").get<std::size_t>());
            tr.click = parse_node_ref(t.at("click").get<std::string>());
            tr.to = in_range(t.at("to").get<std::size_t>());
            if (!has_node(b.snapshots[tr.from], tr.click))
                throw BundleError("transition clicks a node absent from its snapshot");
            b.transitions.push_back(tr);
        }
        for (const auto& p : manifest.value("account_probe", json::array())) {
            const auto at = in_range(p.at("snapshot").get<std::size_t>());
            b.account_probe[at] = read_requests(dir, p.at("requests"));
        }
        if (manifest.contains("submission") && !manifest["submission"].is_null()) {
            const auto& s = manifest["submission"];
            ReplaySubmission sub;
            sub.snapshot = in_range(s.at("snapshot").get<std::size_t>());
            sub.target = parse_node_ref(s.at("target").get<std::string>());
            sub.requests = read_requests(dir, s.value("requests", json::array()));
            b.submission = std::move(sub);
        }
    } catch (const json::exception& e) {
        throw BundleError(directory + "/manifest.json: " + e.what());
    } catch (const InvariantError& e) {
        throw BundleError(directory + "/manifest.json: " + e.what());
    }
    if (fs::exists(dir / "expected" / "site_record.json"))
        b.expected_record = read_json(dir / "expected" / "site_record.json");
    return b;
}

ReplaySession::ReplaySession(const ReplayBundle& bundle, EthicsLedger& ledger)
    : bundle_(bundle), ledger_(ledger) {}

PageSnapshot ReplaySession::harvest(const std::string& url) {
    (void)url;
    if (bundle_.http_status == 401) throw BlockedBySite("HTTP 401 challenge at " + bundle_.url);
    position_ = 0;
    opened_ = true;
    return bundle_.snapshots.front();
}

PageSnapshot ReplaySession::current() {
    if (!opened_) throw PreconditionError("replay session used before harvest");
    return bundle_.snapshots[position_];
}

SessionOutcome ReplaySession::execute(const ActionPlan& plan, const Credentials& creds) {
    if (!opened_) throw PreconditionError("replay session used before harvest");
    SessionOutcome outcome;
    outcome.site = bundle_.site;
    bool password_filled = false;
    for (const auto& step : plan.steps) {
        const PageSnapshot& page = bundle_.snapshots[position_];
        if (const auto* fill = std::get_if<FillStep>(&step)) {
            if (!has_node(page, fill->target)) throw ElementGone("no node " + to_string(fill->target));
            if (fill->role == ValueRole::password) {
                password_filled = true;
            } else if (!password_filled) {
                auto probe = bundle_.account_probe.find(position_);
                if (probe != bundle_.account_probe.end() && is_existence_check(probe->second, creds)) {
                    outcome.skip_reason = SkipReason::existence_check;
                    outcome.diagnostic = "account checked before password entry";
                    return outcome;
                }
            }
        } else if (const auto* enter = std::get_if<PressEnterStep>(&step)) {
            if (!has_node(page, enter->target)) throw ElementGone("no node " + to_string(enter->target));
            if (has_captcha(page)) throw CaptchaDetected("captcha widget on " + page.url);
            ledger_.claim_submission(bundle_.site);
            const auto& sub = bundle_.submission;
            if (!sub || sub->snapshot != position_ || sub->target != enter->target) {
                outcome.skip_reason = SkipReason::error;
                outcome.diagnostic = "submission on " + to_string(enter->target) +
                                     " was not recorded in the bundle";
                return outcome;
            }
            outcome.submitted = true;
            outcome.requests = sub->requests;
        } else if (const auto* click = std::get_if<ClickStep>(&step)) {
            if (!has_node(page, click->target)) throw ElementGone("no node " + to_string(click->target));
            for (const auto& t : bundle_.transitions)
                if (t.from == position_ && t.click == click->target) {
                    position_ = t.to;
                    break;
                }
        }
    }
    return outcome;
}

std::pair<std::vector<PageSnapshot>, SessionOutcome> replay(const std::string& bundle_dir) {
    ReplayBundle b = load_bundle(bundle_dir);
    SessionOutcome outcome;
    outcome.site = b.site;
    if (b.submission) {
        outcome.submitted = true;
        outcome.requests = b.submission->requests;
    }
    return {std::move(b.snapshots), std::move(outcome)};
}

}  // namespace cdnexpose
