#include "cdnexpose/scan.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/err.h>
#include <openssl/ssl.h>

#include "cdnexpose/log.hpp"
#include "cdnexpose/proxy.hpp"

namespace cdnexpose {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<RankedDomain> parse_input_list(std::istream& in) {
    std::vector<RankedDomain> out;
    std::set<std::int64_t> ranks;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        if (number == 1 && line.rfind("rank", 0) == 0) continue;
        const auto comma = line.find(',');
        const auto where = "input line " + std::to_string(number);
        if (comma == std::string::npos) throw ConfigError(where + ": expected rank,domain");
        RankedDomain d;
        try {
            std::size_t used = 0;
            d.rank = std::stoll(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ConfigError(where + ": rank is not an integer");
        }
        if (d.rank < 1) throw ConfigError(where + ": rank must be positive");
        d.domain = normalize_name(line.substr(comma + 1));
        if (!is_valid_hostname(d.domain)) throw ConfigError(where + ": invalid domain '" + d.domain + "'");
        if (!ranks.insert(d.rank).second) throw ConfigError(where + ": duplicate rank");
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<RankedDomain> load_input_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input list " + path);
    return parse_input_list(in);
}

namespace {

enum class Handshake { ok, failed, unresolvable };

Handshake tls_handshake(const std::string& host, std::chrono::milliseconds timeout) {
    addrinfo hints{};
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), "443", &hints, &res) != 0 || !res) return Handshake::unresolvable;
    Handshake result = Handshake::failed;
    SSL_CTX* ctx = SSL_CTX_new(TLS_client_method());
    SSL_CTX_set_verify(ctx, SSL_VERIFY_PEER, nullptr);
    SSL_CTX_set_default_verify_paths(ctx);
    for (auto* ai = res; ai && result != Handshake::ok; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        const int flags = fcntl(fd, F_GETFL, 0);
        fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        bool connected = ::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0;
        if (!connected && errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            int err = 0;
            socklen_t len = sizeof err;
            connected = ::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1 &&
                        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0;
        }
        if (connected) {
            fcntl(fd, F_SETFL, flags);
            timeval tv{static_cast<time_t>(timeout.count() / 1000),
                       static_cast<suseconds_t>((timeout.count() % 1000) * 1000)};
            setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
            setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
            SSL* ssl = SSL_new(ctx);
            SSL_set_fd(ssl, fd);
            SSL_set_tlsext_host_name(ssl, host.c_str());
            SSL_set1_host(ssl, host.c_str());
            if (SSL_connect(ssl) == 1) {
                result = Handshake::ok;
                SSL_shutdown(ssl);
            }
            SSL_free(ssl);
        }
        ::close(fd);
    }
    ERR_clear_error();
    SSL_CTX_free(ctx);
    freeaddrinfo(res);
    return result;
}

}  // namespace

HttpsStatus https_check(const std::string& domain, std::chrono::milliseconds timeout, std::string* host) {
    bool resolved = false;
    for (const std::string& candidate : {domain, "www." + domain}) {
        const auto r = tls_handshake(candidate, timeout);
        if (r != Handshake::unresolvable) resolved = true;
        if (r == Handshake::ok) {
            if (host) *host = candidate;
            return HttpsStatus::enabled;
        }
    }
    return resolved ? HttpsStatus::disabled : HttpsStatus::unresolvable;
}

void ScanConfig::validate() const {
    if (workers < 1) throw ConfigError("--workers must be at least 1");
    if (input_list.empty()) throw ConfigError("--input is required");
    if (output_dir.empty()) throw ConfigError("--out is required");
    if (site_budget.count() <= 0) throw ConfigError("site budget must be positive");
    if (fixtures_dir && !fs::is_directory(*fixtures_dir))
        throw ConfigError("fixtures directory not found: " + *fixtures_dir);
    if (lookups_dir && !fs::is_directory(*lookups_dir))
        throw ConfigError("lookups directory not found: " + *lookups_dir);
    if (!fixtures_dir) session.validate();
}

std::string bundle_path(const std::string& fixtures_dir, const std::string& domain) {
    return (fs::path(fixtures_dir) / "sites" / domain).string();
}

SiteRecord assemble_record(const SiteObservation& obs, CdnAttributor& attributor) {
    SiteRecord r;
    r.domain = obs.site.domain;
    r.rank = obs.site.rank;
    r.category = obs.category;
    r.https = obs.https == HttpsStatus::enabled;
    if (obs.error) {
        r.verdict.kind = r.https ? VerdictKind::LoginNotFound : VerdictKind::NoHTTPS;
        r.verdict.error = obs.error;
        return r;
    }
    if (!r.https) {
        r.verdict.kind = VerdictKind::NoHTTPS;
        if (obs.https == HttpsStatus::unresolvable) r.verdict.error = "domain does not resolve";
        return r;
    }

    const SessionOutcome& outcome = obs.trial.outcome;
    r.login_detected = outcome.submitted;

    std::string landing = obs.landing_url.empty() ? "https://" + r.domain + "/" : obs.landing_url;
    if (!obs.trial.snapshots.empty()) landing = obs.trial.snapshots.front().url;
    const std::string landing_host = host_of(landing);

    AttributionMap attributions;
    auto attribute = [&](const std::string& host) -> const CdnAttribution& {
        auto it = attributions.find(host);
        if (it == attributions.end()) it = attributions.emplace(host, attributor.attribute(host)).first;
        return it->second;
    };
    if (!landing_host.empty()) {
        const auto& a = attribute(landing_host);
        if (a.provider) r.cdn_providers.insert(*a.provider);
    }
    for (const auto& req : outcome.requests) {
        const auto& a = attribute(req.destination_host);
        if (a.provider && obs.creds && is_credential_bearing(req, *obs.creds))
            r.cdn_providers.insert(*a.provider);
    }

    if (outcome.submitted && !obs.creds) {
        r.verdict.kind = VerdictKind::LoginNotFound;
        r.verdict.error = "submission without credentials";
    } else {
        r.verdict = classify_site(outcome, attributions, true,
                                  obs.creds ? *obs.creds : Credentials::generate());
    }

    try {
        r.dns_provider = attributor.dns_provider(r.domain);
    } catch (const Error& e) {
        log_debug(r.domain + ": dns provider lookup failed: " + e.what());
    }
    return r;
}

namespace {

struct Environment {
    TrialConfig trial;
    CategoryMap categories;
    std::vector<ProviderFingerprint> fingerprints;
};

template <typename F>
auto as_config_error(const std::string& what, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

Environment load_environment(const ScanConfig& config) {
    Environment env;
    if (config.lexicon_path)
        env.trial.lexicon = as_config_error("lexicon", [&] { return KeywordLexicon::load(*config.lexicon_path); });
    if (config.weights_path)
        env.trial.weights = as_config_error("weights", [&] { return ScoringWeights::load(*config.weights_path); });
    env.fingerprints = config.fingerprints_path
                           ? as_config_error("fingerprints", [&] { return load_fingerprints(*config.fingerprints_path); })
                           : default_fingerprints();
    if (config.category_map_path)
        env.categories = as_config_error("categories", [&] { return load_category_map(*config.category_map_path); });
    return env;
}

SiteObservation observe_fixture(const RankedDomain& site, const ScanConfig& config, const Environment& env,
                                EthicsLedger& ledger) {
    SiteObservation obs;
    obs.site = site;
    const std::string dir = bundle_path(*config.fixtures_dir, site.domain);
    if (!fs::is_directory(dir)) {
        obs.https = HttpsStatus::unresolvable;
        return obs;
    }
    ReplayBundle bundle;
    try {
        bundle = load_bundle(dir);
    } catch (const BundleError& e) {
        obs.error = std::string("bundle: ") + e.what();
        return obs;
    }
    obs.category = bundle.category;
    obs.https = bundle.https ? HttpsStatus::enabled : HttpsStatus::disabled;
    if (!bundle.https) return obs;
    obs.landing_url = bundle.url;
    obs.creds = bundle.credentials ? *bundle.credentials : Credentials::generate();
    ReplaySession session(bundle, ledger);
    TrialConfig trial = env.trial;
    trial.deadline = std::chrono::steady_clock::now() + config.site_budget;
    obs.trial = run_login_trial(session, bundle.url, *obs.creds, trial);
    return obs;
}

SiteObservation observe_live(const RankedDomain& site, const ScanConfig& config, const Environment& env,
                             EthicsLedger& ledger, const std::shared_ptr<CertificateAuthority>& ca) {
    SiteObservation obs;
    obs.site = site;
    const auto deadline = std::chrono::steady_clock::now() + config.site_budget;
    std::string host;
    obs.https = https_check(site.domain, std::chrono::seconds(10), &host);
    if (obs.https != HttpsStatus::enabled) return obs;
    obs.landing_url = "https://" + host + "/";
    obs.creds = Credentials::generate();
    try {
        LiveSession session(site.domain, config.session, ledger, ca);
        TrialConfig trial = env.trial;
        trial.deadline = deadline;
        obs.trial = run_login_trial(session, obs.landing_url, *obs.creds, trial);
    } catch (const EthicsViolation&) {
        throw;
    } catch (const std::exception& e) {
        obs.trial.outcome.site = site.domain;
        obs.trial.outcome.skip_reason = SkipReason::error;
        obs.trial.outcome.diagnostic = e.what();
    }
    return obs;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace

ScanSummary run_scan(const ScanConfig& config) {
    config.validate();
    const Environment env = load_environment(config);
    const auto sites = load_input_list(config.input_list);

    std::unique_ptr<Resolver> base_resolver;
    std::unique_ptr<RdapSource> base_rdap;
    const std::optional<std::string> recorded_dir = config.fixtures_dir ? config.fixtures_dir : config.lookups_dir;
    if (recorded_dir) {
        base_resolver = std::make_unique<FixtureResolver>(as_config_error(
            "dns fixture", [&] { return FixtureResolver::load((fs::path(*recorded_dir) / "dns.json").string()); }));
        base_rdap = std::make_unique<FixtureRdapSource>(as_config_error(
            "rdap fixture", [&] { return FixtureRdapSource::load((fs::path(*recorded_dir) / "rdap.json").string()); }));
    } else {
        base_resolver = std::make_unique<UdpResolver>(
            as_config_error("resolver", [&] { return config.resolver ? UdpResolver(*config.resolver) : UdpResolver::system(); }));
        base_rdap = std::make_unique<HttpRdapSource>(config.rdap_base);
    }
    std::unique_ptr<RecordingResolver> recording_resolver;
    std::unique_ptr<RecordingRdapSource> recording_rdap;
    Resolver* resolver = base_resolver.get();
    RdapSource* rdap = base_rdap.get();
    if (config.record_lookups_dir) {
        recording_resolver = std::make_unique<RecordingResolver>(*base_resolver);
        recording_rdap = std::make_unique<RecordingRdapSource>(*base_rdap);
        resolver = recording_resolver.get();
        rdap = recording_rdap.get();
    }
    CdnAttributor attributor(*resolver, *rdap, env.fingerprints);

    EthicsLedger ledger;
    std::shared_ptr<CertificateAuthority> ca;
    if (!config.fixtures_dir && config.session.capture_mode == CaptureMode::proxy)
        ca = std::make_shared<CertificateAuthority>();

    std::vector<SiteRecord> records(sites.size());
    std::vector<char> attempted(sites.size(), 0);
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next++;
            if (i >= sites.size()) return;
            const auto& site = sites[i];
            try {
                SiteObservation obs = config.fixtures_dir ? observe_fixture(site, config, env, ledger)
                                                          : observe_live(site, config, env, ledger, ca);
                if (auto it = env.categories.find(site.domain); it != env.categories.end())
                    obs.category = it->second;
                attempted[i] = obs.trial.attempted_submission;
                records[i] = assemble_record(obs, attributor);
            } catch (const EthicsViolation&) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                next = sites.size();
                return;
            } catch (const std::exception& e) {
                SiteRecord& r = records[i];
                r = SiteRecord{};
                r.domain = site.domain;
                r.rank = site.rank;
                r.verdict.kind = VerdictKind::LoginNotFound;
                r.verdict.error = e.what();
            }
            log_info("scanned " + site.domain + ": " + std::string(to_string(records[i].verdict.kind)));
        }
    };
    const std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(config.workers),
                                                   std::max<std::size_t>(sites.size(), 1));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    ScanSummary summary;
    summary.records = std::move(records);
    std::sort(summary.records.begin(), summary.records.end(),
              [](const SiteRecord& a, const SiteRecord& b) { return a.rank < b.rank; });
    for (const auto& r : summary.records)
        if (r.verdict.error) ++summary.failures;
    for (char a : attempted) summary.attempted_submissions += a ? 1 : 0;
    summary.max_submissions_per_site = ledger.max_submissions();

    emit_all(summary.records, config.output_dir);
    if (config.record_lookups_dir) {
        fs::create_directories(*config.record_lookups_dir);
        write_json(fs::path(*config.record_lookups_dir) / "dns.json", recording_resolver->recorded());
        write_json(fs::path(*config.record_lookups_dir) / "rdap.json", recording_rdap->recorded());
    }
    return summary;
}

}  // namespace cdnexpose
