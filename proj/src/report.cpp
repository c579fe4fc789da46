#include "cdnexpose/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

ordered_json to_json(const SiteRecord& r) {
    ordered_json j;
    j["domain"] = r.domain;
    j["rank"] = r.rank;
    j["https"] = r.https;
    j["login_detected"] = r.login_detected;
    j["cdn_providers"] = ordered_json::array();
    for (const auto& p : r.cdn_providers) j["cdn_providers"].push_back(p);
    j["verdict"] = to_json(r.verdict);
    j["dns_provider"] = r.dns_provider ? ordered_json(*r.dns_provider) : ordered_json(nullptr);
    j["category"] = r.category ? ordered_json(*r.category) : ordered_json(nullptr);
    return j;
}

namespace {

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(std::string("site record lacks '") + key + "'");
    return *it;
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    const auto& v = require(j, key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) throw SchemaError(std::string("'") + key + "' must be a string or null");
    return v.get<std::string>();
}

}  // namespace

SiteRecord record_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("site record must be a JSON object");
    SiteRecord r;
    const auto& domain = require(j, "domain");
    const auto& rank = require(j, "rank");
    const auto& https = require(j, "https");
    const auto& login = require(j, "login_detected");
    const auto& providers = require(j, "cdn_providers");
    if (!domain.is_string() || domain.get<std::string>().empty())
        throw SchemaError("'domain' must be a non-empty string");
    if (!rank.is_number_integer() || rank.get<std::int64_t>() < 1)
        throw SchemaError("'rank' must be a positive integer");
    if (!https.is_boolean() || !login.is_boolean())
        throw SchemaError("'https' and 'login_detected' must be booleans");
    if (!providers.is_array()) throw SchemaError("'cdn_providers' must be an array");
    r.domain = domain.get<std::string>();
    r.rank = rank.get<std::int64_t>();
    r.https = https.get<bool>();
    r.login_detected = login.get<bool>();
    for (const auto& p : providers) {
        if (!p.is_string()) throw SchemaError("'cdn_providers' entries must be strings");
        r.cdn_providers.insert(p.get<std::string>());
    }
    try {
        r.verdict = verdict_from_json(require(j, "verdict"));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("bad verdict: ") + e.what());
    }
    r.dns_provider = optional_string(j, "dns_provider");
    r.category = optional_string(j, "category");
    if (r.verdict.kind == VerdictKind::PasswordExposed && r.cdn_providers.empty())
        throw SchemaError("PasswordExposed record without CDN providers: " + r.domain);
    return r;
}

std::string to_jsonl_line(const SiteRecord& r) { return to_json(r).dump(); }

std::vector<SiteRecord> read_records_jsonl(std::istream& in) {
    std::vector<SiteRecord> out;
    std::set<std::int64_t> ranks;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(number) + ": " + e.what());
        } catch (const SchemaError& e) {
            throw SchemaError("line " + std::to_string(number) + ": " + e.what());
        }
        if (!ranks.insert(out.back().rank).second)
            throw SchemaError("line " + std::to_string(number) + ": duplicate rank " +
                              std::to_string(out.back().rank));
    }
    return out;
}

std::vector<SiteRecord> load_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_records_jsonl(in);
}

// ---------------------------------------------------------------------------

std::int64_t interval_of(std::int64_t rank) {
    if (rank < 1) throw PreconditionError("rank must be >= 1");
    return (rank + kIntervalWidth - 1) / kIntervalWidth;
}

std::optional<std::int64_t> percent_round(std::int64_t num, std::int64_t den) {
    if (den == 0) return std::nullopt;
    return (200 * num + den) / (2 * den);
}

std::optional<std::int64_t> permille_round(std::int64_t num, std::int64_t den) {
    if (den == 0) return std::nullopt;
    return (2000 * num + den) / (2 * den);
}

std::vector<IntervalStat> interval_percentages(const std::vector<SiteRecord>& records) {
    std::int64_t last = 0;
    for (const auto& r : records) {
        const auto j = interval_of(r.rank);
        if (j > kMaxIntervals) throw PreconditionError("rank beyond the last interval");
        last = std::max(last, j);
    }
    std::vector<IntervalStat> stats(static_cast<std::size_t>(last));
    for (std::int64_t j = 1; j <= last; ++j) {
        auto& s = stats[static_cast<std::size_t>(j - 1)];
        s.interval = j;
        s.rank_lo = 1 + kIntervalWidth * (j - 1);
        s.rank_hi = kIntervalWidth * j;
    }
    for (const auto& r : records) {
        if (!r.is_cdn_enabled()) continue;
        auto& s = stats[static_cast<std::size_t>(interval_of(r.rank) - 1)];
        ++s.cdn_enabled;
        if (r.verdict.kind == VerdictKind::PasswordExposed) ++s.exposed;
        if (r.verdict.kind == VerdictKind::PasswordEncrypted) ++s.encrypted;
    }
    for (auto& s : stats) {
        s.pct_exposed = percent_round(s.exposed, s.cdn_enabled);
        s.pct_encrypted = percent_round(s.encrypted, s.cdn_enabled);
    }
    return stats;
}

std::vector<CdfPoint> cdf_series(const std::vector<SiteRecord>& records) {
    std::vector<std::int64_t> ranks;
    for (const auto& r : records)
        if (r.login_detected) ranks.push_back(r.rank);
    std::sort(ranks.begin(), ranks.end());
    std::vector<CdfPoint> out;
    out.reserve(ranks.size());
    const double total = static_cast<double>(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        // Equal ranks collapse into their last point.
        if (i + 1 < ranks.size() && ranks[i + 1] == ranks[i]) continue;
        out.push_back({ranks[i], i + 1 == ranks.size() ? 1.0 : static_cast<double>(i + 1) / total});
    }
    return out;
}

namespace {

std::vector<TableRow> sorted_rows(const std::map<std::string, TableRow>& rows) {
    std::vector<TableRow> out;
    for (const auto& [_, row] : rows) out.push_back(row);
    std::stable_sort(out.begin(), out.end(), [](const TableRow& a, const TableRow& b) {
        return a.cdn_enabled > b.cdn_enabled;
    });
    return out;
}

}  // namespace

std::vector<TableRow> provider_table(const std::vector<SiteRecord>& records) {
    std::map<std::string, TableRow> rows;
    for (const auto& r : records) {
        if (!r.is_cdn_enabled()) continue;
        for (const auto& p : r.cdn_providers) {
            auto& row = rows[p];
            row.name = p;
            ++row.cdn_enabled;
            // A multi-CDN site is exposed only to the provider that received the password.
            if (r.verdict.kind == VerdictKind::PasswordExposed &&
                r.verdict.attributed_provider.value_or(p) == p)
                ++row.exposed;
        }
    }
    return sorted_rows(rows);
}

std::vector<TableRow> category_table(const std::vector<SiteRecord>& records,
                                     const CategoryMap& category_map) {
    std::map<std::string, TableRow> rows;
    for (const auto& r : records) {
        if (!r.is_cdn_enabled()) continue;
        std::optional<std::string> category = r.category;
        if (auto it = category_map.find(r.domain); it != category_map.end()) category = it->second;
        if (!category || category->empty()) continue;
        auto& row = rows[*category];
        row.name = *category;
        ++row.cdn_enabled;
        if (r.verdict.kind == VerdictKind::PasswordExposed) ++row.exposed;
    }
    std::erase_if(rows, [](const auto& kv) { return kv.second.cdn_enabled < kMinCategorySize; });
    return sorted_rows(rows);
}

CategoryMap load_category_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    CategoryMap map;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (number == 1 && line.rfind("domain", 0) == 0)) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 == line.size())
            throw SchemaError(path + ":" + std::to_string(number) + ": expected domain,category");
        map[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return map;
}

std::string EncryptionShare::percent_text() const {
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

EncryptionShare encryption_share(const std::vector<SiteRecord>& records) {
    EncryptionShare share;
    for (const auto& r : records) {
        if (!r.is_cdn_enabled()) continue;
        ++share.cdn_enabled;
        if (r.verdict.kind == VerdictKind::PasswordEncrypted) ++share.count;
    }
    share.tenths = permille_round(share.count, share.cdn_enabled).value_or(0);
    return share;
}

// ---------------------------------------------------------------------------

namespace {

std::string opt(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }

std::string fraction(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string table_csv(const char* header, const std::vector<TableRow>& rows) {
    std::string out = header;
    for (const auto& row : rows)
        out += row.name + "," + std::to_string(row.cdn_enabled) + "," +
               std::to_string(row.exposed) + "," + std::to_string(row.percent()) + "\n";
    return out;
}

std::vector<SiteRecord> by_rank(std::vector<SiteRecord> records) {
    std::sort(records.begin(), records.end(), [](const SiteRecord& a, const SiteRecord& b) {
        return std::tie(a.rank, a.domain) < std::tie(b.rank, b.domain);
    });
    return records;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string intervals_csv(const std::vector<SiteRecord>& records) {
    std::string out = "interval,rank_lo,rank_hi,cdn_enabled,exposed,encrypted,pct_exposed,pct_encrypted\n";
    for (const auto& s : interval_percentages(records))
        out += std::to_string(s.interval) + "," + std::to_string(s.rank_lo) + "," +
               std::to_string(s.rank_hi) + "," + std::to_string(s.cdn_enabled) + "," +
               std::to_string(s.exposed) + "," + std::to_string(s.encrypted) + "," +
               opt(s.pct_exposed) + "," + opt(s.pct_encrypted) + "\n";
    return out;
}

std::string providers_csv(const std::vector<SiteRecord>& records) {
    return table_csv("provider,cdn_enabled,exposed,pct\n", provider_table(records));
}

std::string categories_csv(const std::vector<SiteRecord>& records) {
    return table_csv("category,cdn_enabled,exposed,pct\n", category_table(records));
}

std::string cdf_csv(const std::vector<SiteRecord>& records) {
    std::string out = "rank,cum_fraction\n";
    for (const auto& p : cdf_series(records))
        out += std::to_string(p.rank) + "," + fraction(p.cum_fraction) + "\n";
    return out;
}

std::string records_jsonl(const std::vector<SiteRecord>& records) {
    std::string out;
    for (const auto& r : by_rank(records)) out += to_jsonl_line(r) + "\n";
    return out;
}

void emit_report(const std::vector<SiteRecord>& records, ReportFormat format,
                 const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const fs::path dir(out_dir);
    switch (format) {
        case ReportFormat::csv:
            write_file(dir / "intervals.csv", intervals_csv(records));
            write_file(dir / "providers.csv", providers_csv(records));
            write_file(dir / "categories.csv", categories_csv(records));
            write_file(dir / "cdf.csv", cdf_csv(records));
            break;
        case ReportFormat::jsonl:
            write_file(dir / "records.jsonl", records_jsonl(records));
            break;
        case ReportFormat::plotdata: {
            std::string cdf = "# rank cum_fraction\n";
            for (const auto& p : cdf_series(records))
                cdf += std::to_string(p.rank) + " " + fraction(p.cum_fraction) + "\n";
            std::string exposed = "# interval label pct_exposed (NaN: no CDN-enabled sites)\n";
            std::string encrypted = "# interval label pct_encrypted (NaN: no CDN-enabled sites)\n";
            for (const auto& s : interval_percentages(records)) {
                const std::string label = std::to_string(s.interval) + " I_" + std::to_string(s.interval) + " ";
                exposed += label + (s.pct_exposed ? std::to_string(*s.pct_exposed) : "NaN") + "\n";
                encrypted += label + (s.pct_encrypted ? std::to_string(*s.pct_encrypted) : "NaN") + "\n";
            }
            write_file(dir / "fig1a_cdf.dat", cdf);
            write_file(dir / "fig1b_exposed.dat", exposed);
            write_file(dir / "fig2_encrypted.dat", encrypted);
            break;
        }
    }
}

void emit_all(const std::vector<SiteRecord>& records, const std::string& out_dir) {
    for (auto f : {ReportFormat::csv, ReportFormat::jsonl, ReportFormat::plotdata})
        emit_report(records, f, out_dir);
}

// ---------------------------------------------------------------------------

namespace {

struct Count {
    const char* name;
    std::int64_t cdn_enabled;
    std::int64_t exposed;
};

constexpr Count kProviders[] = {
    {"Cloudflare", 6356, 2803}, {"Akamai", 3280, 818},  {"Fastly", 1631, 291},
    {"Highwinds", 504, 26},     {"Edgecast", 241, 16},  {"Incapsula", 216, 142},
    {"Quantil", 161, 10},       {"CDNetworks", 32, 3},  {"Limelight", 30, 5},
};

// The last three stay below the 20-site threshold; their split is made up so
// that 2,010 CDN-enabled sites carry a category.
constexpr Count kCategories[] = {
    {"Retail", 304, 175},    {"Internet", 231, 69},  {"Business", 225, 72},
    {"Entertain", 213, 76},  {"News", 181, 62},      {"Finance", 159, 60},
    {"Technology", 155, 42}, {"Education", 145, 14}, {"Society", 99, 31},
    {"Travel", 79, 34},      {"Science", 50, 18},    {"Sports", 49, 15},
    {"Health", 43, 17},      {"Reference", 36, 13},  {"Government", 15, 5},
    {"Recreation", 14, 4},   {"Home", 12, 3},
};

constexpr std::int64_t kSites = 50000;
constexpr std::int64_t kHttps = 42502;
constexpr std::int64_t kLogins = 17111;
constexpr std::int64_t kEncrypted = 2057;
// Cloudflare sites whose DNS is hosted by Cloudflare: 63% of them are
// exposed, against 17% of the other Cloudflare customers.
constexpr std::int64_t kCloudflareDnsSites = 3745;
constexpr std::int64_t kCloudflareDnsExposed = 2359;

}  // namespace

std::vector<SiteRecord> published_dataset() {
    std::mt19937_64 rng(20201001);
    std::vector<std::int64_t> order(kSites);
    for (std::int64_t i = 0; i < kSites; ++i) order[static_cast<std::size_t>(i)] = i + 1;
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);

    std::vector<SiteRecord> records(kSites);
    for (std::int64_t rank = 1; rank <= kSites; ++rank) {
        auto& r = records[static_cast<std::size_t>(rank - 1)];
        char name[32];
        std::snprintf(name, sizeof name, "site%05lld.example", static_cast<long long>(rank));
        r.domain = name;
        r.rank = rank;
        r.verdict.kind = VerdictKind::NoHTTPS;
    }
    auto at = [&](std::size_t i) -> SiteRecord& {
        return records[static_cast<std::size_t>(order[i] - 1)];
    };

    std::size_t cursor = 0;
    std::vector<std::vector<std::size_t>> by_provider(std::size(kProviders));
    for (std::size_t i = 0; i < static_cast<std::size_t>(kHttps); ++i) {
        auto& r = at(i);
        r.https = true;
        r.login_detected = i < static_cast<std::size_t>(kLogins);
        r.verdict.kind = r.login_detected ? VerdictKind::NotCdnTerminated : VerdictKind::LoginNotFound;
    }
    for (std::size_t p = 0; p < std::size(kProviders); ++p)
        for (std::int64_t k = 0; k < kProviders[p].cdn_enabled; ++k) {
            at(cursor).cdn_providers.insert(kProviders[p].name);
            by_provider[p].push_back(cursor++);
        }
    std::vector<std::size_t> exposed_sites, quiet_sites;
    for (std::size_t p = 0; p < std::size(kProviders); ++p) {
        const auto& sites = by_provider[p];
        for (std::size_t k = 0; k < sites.size(); ++k) {
            auto& r = at(sites[k]);
            if (static_cast<std::int64_t>(k) < kProviders[p].exposed) {
                r.verdict.kind = VerdictKind::PasswordExposed;
                r.verdict.attributed_provider = kProviders[p].name;
                ExposureEvidence ev;
                ev.encoding = k % 10 == 9 ? PasswordEncoding::base64_std : PasswordEncoding::plaintext;
                ev.byte_offset = 9;
                ev.length = ev.encoding == PasswordEncoding::plaintext ? 16 : 24;
                ev.matched_field = "password";
                r.verdict.evidence = ev;
                exposed_sites.push_back(sites[k]);
            } else {
                quiet_sites.push_back(sites[k]);
            }
        }
    }
    std::sort(exposed_sites.begin(), exposed_sites.end());
    std::sort(quiet_sites.begin(), quiet_sites.end());

    {
        const auto& cf = by_provider[0];
        std::int64_t exposed_dns = 0, quiet_dns = 0;
        for (std::size_t k = 0; k < cf.size(); ++k) {
            auto& r = at(cf[k]);
            const bool exposed = r.verdict.kind == VerdictKind::PasswordExposed;
            if (exposed && exposed_dns < kCloudflareDnsExposed) {
                r.dns_provider = "Cloudflare";
                ++exposed_dns;
            } else if (!exposed && quiet_dns < kCloudflareDnsSites - kCloudflareDnsExposed) {
                r.dns_provider = "Cloudflare";
                ++quiet_dns;
            }
        }
    }

    for (std::size_t k = 0; k < quiet_sites.size() && k < static_cast<std::size_t>(kEncrypted); ++k) {
        auto& r = at(quiet_sites[k]);
        r.verdict.kind = VerdictKind::PasswordEncrypted;
        r.verdict.attributed_provider = *r.cdn_providers.begin();
    }

    // Categories go to the tail of each list so they overlap both the
    // encrypted and the bypassing sites.
    std::size_t e = exposed_sites.size(), q = quiet_sites.size();
    for (const auto& c : kCategories) {
        for (std::int64_t k = 0; k < c.exposed; ++k) at(exposed_sites[--e]).category = c.name;
        for (std::int64_t k = 0; k < c.cdn_enabled - c.exposed; ++k) at(quiet_sites[--q]).category = c.name;
    }
    return records;
}

}  // namespace cdnexpose
