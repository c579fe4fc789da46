#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "cdnexpose/attribution.hpp"
#include "cdnexpose/detector.hpp"
#include "cdnexpose/report.hpp"
#include "cdnexpose/scan.hpp"

namespace fs = std::filesystem;
using namespace cdnexpose;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;

int cmd_scan(const ScanConfig& config) {
    const ScanSummary summary = run_scan(config);
    std::cerr << "scanned " << summary.records.size() << " sites, " << summary.failures
              << " with errors; reports in " << config.output_dir << "\n";
    return summary.failures > 0 ? kExitPartial : kExitOk;
}

int cmd_detect(const std::string& snapshot, const std::optional<std::string>& lexicon_path,
               const std::optional<std::string>& weights_path) {
    const PageSnapshot page = load_snapshot_file(snapshot);
    const auto lexicon = lexicon_path ? KeywordLexicon::load(*lexicon_path) : KeywordLexicon::defaults();
    const auto weights = weights_path ? ScoringWeights::load(*weights_path) : ScoringWeights::defaults();
    std::cout << to_json(detect(page, lexicon, weights)).dump(2) << "\n";
    return kExitOk;
}

int cmd_attribute(const std::string& hostname, const std::optional<std::string>& fixtures,
                  const std::optional<std::string>& resolver_endpoint,
                  const std::optional<std::string>& rdap_base,
                  const std::optional<std::string>& fingerprints_path) {
    const std::string host = normalize_name(hostname);
    if (!is_valid_hostname(host)) throw ConfigError("invalid hostname '" + hostname + "'");
    std::unique_ptr<Resolver> resolver;
    std::unique_ptr<RdapSource> rdap;
    if (fixtures) {
        resolver = std::make_unique<FixtureResolver>(FixtureResolver::load((fs::path(*fixtures) / "dns.json").string()));
        rdap = std::make_unique<FixtureRdapSource>(FixtureRdapSource::load((fs::path(*fixtures) / "rdap.json").string()));
    } else {
        resolver = std::make_unique<UdpResolver>(resolver_endpoint ? UdpResolver(*resolver_endpoint)
                                                                   : UdpResolver::system());
        rdap = std::make_unique<HttpRdapSource>(rdap_base);
    }
    CdnAttributor attributor(*resolver, *rdap,
                             fingerprints_path ? load_fingerprints(*fingerprints_path) : default_fingerprints());
    std::cout << to_json(attributor.attribute(host)).dump() << "\n";
    return kExitOk;
}

int cmd_report(const std::string& records_path, const std::string& out,
               const std::optional<std::string>& categories_path) {
    auto records = load_records_jsonl(records_path);
    if (categories_path) {
        const auto map = load_category_map(*categories_path);
        for (auto& r : records)
            if (auto it = map.find(r.domain); it != map.end()) r.category = it->second;
    }
    emit_all(records, out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measures password exposure to CDNs on login pages"};
    app.require_subcommand(1);

    ScanConfig scan;
    std::string capture = "proxy";
    int page_load_s = 30, action_s = 10, budget_s = 90;
    std::optional<std::string> fixtures, lexicon, weights, fingerprints, categories, resolver, rdap_base,
        lookups, record_lookups;
    auto* scan_cmd = app.add_subcommand("scan", "Scan a ranked domain list");
    scan_cmd->add_option("--input", scan.input_list, "rank,domain CSV")->required();
    scan_cmd->add_option("--out", scan.output_dir, "Output directory")->required();
    scan_cmd->add_option("--workers", scan.workers, "Concurrent sites")->capture_default_str();
    scan_cmd->add_option("--fixtures", fixtures, "Replay bundles and recorded lookups from this directory");
    scan_cmd->add_option("--lexicon", lexicon, "Keyword lexicon JSON");
    scan_cmd->add_option("--weights", weights, "Scoring weights JSON");
    scan_cmd->add_option("--fingerprints", fingerprints, "CDN fingerprint JSON");
    scan_cmd->add_option("--categories", categories, "domain,category CSV");
    scan_cmd->add_option("--webdriver", scan.session.webdriver_endpoint, "WebDriver endpoint URL")
        ->capture_default_str();
    scan_cmd->add_option("--capture", capture, "Request capture backend: proxy or browser-log")
        ->capture_default_str();
    scan_cmd->add_option("--page-load-timeout", page_load_s, "Seconds")->capture_default_str();
    scan_cmd->add_option("--action-timeout", action_s, "Seconds")->capture_default_str();
    scan_cmd->add_option("--site-budget", budget_s, "Seconds per site")->capture_default_str();
    scan_cmd->add_option("--resolver", resolver, "DNS server ip[:port]");
    scan_cmd->add_option("--rdap-base", rdap_base, "Fixed RDAP base URL");
    scan_cmd->add_option("--lookups", lookups, "Directory with recorded dns.json and rdap.json");
    scan_cmd->add_option("--record-lookups", record_lookups, "Write performed lookups here");

    std::string snapshot;
    auto* detect_cmd = app.add_subcommand("detect", "Run the login detector on a snapshot");
    detect_cmd->add_option("--snapshot", snapshot, "Snapshot JSON")->required();
    detect_cmd->add_option("--lexicon", lexicon, "Keyword lexicon JSON");
    detect_cmd->add_option("--weights", weights, "Scoring weights JSON");

    std::string hostname;
    auto* attribute_cmd = app.add_subcommand("attribute", "Attribute a hostname to a CDN");
    attribute_cmd->add_option("hostname", hostname, "Host name")->required();
    attribute_cmd->add_option("--fixtures", fixtures, "Use recorded dns.json and rdap.json");
    attribute_cmd->add_option("--resolver", resolver, "DNS server ip[:port]");
    attribute_cmd->add_option("--rdap-base", rdap_base, "Fixed RDAP base URL");
    attribute_cmd->add_option("--fingerprints", fingerprints, "CDN fingerprint JSON");

    std::string records, out;
    auto* report_cmd = app.add_subcommand("report", "Rebuild reports from site records");
    report_cmd->add_option("--records", records, "JSONL site records")->required();
    report_cmd->add_option("--out", out, "Output directory")->required();
    report_cmd->add_option("--categories", categories, "domain,category CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*scan_cmd) {
            scan.fixtures_dir = fixtures;
            scan.lexicon_path = lexicon;
            scan.weights_path = weights;
            scan.fingerprints_path = fingerprints;
            scan.category_map_path = categories;
            scan.resolver = resolver;
            scan.rdap_base = rdap_base;
            scan.lookups_dir = lookups;
            scan.record_lookups_dir = record_lookups;
            scan.session.capture_mode = capture_mode_from_string(capture);
            scan.session.page_load_timeout = std::chrono::seconds(page_load_s);
            scan.session.action_timeout = std::chrono::seconds(action_s);
            scan.site_budget = std::chrono::seconds(budget_s);
            return cmd_scan(scan);
        }
        if (*detect_cmd) return cmd_detect(snapshot, lexicon, weights);
        if (*attribute_cmd) return cmd_attribute(hostname, fixtures, resolver, rdap_base, fingerprints);
        if (*report_cmd) return cmd_report(records, out, categories);
    } catch (const SchemaError& e) {
        std::cerr << "SchemaError: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvariantError& e) {
        std::cerr << "SchemaError: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
