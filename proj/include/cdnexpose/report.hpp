#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/exposure.hpp"

namespace cdnexpose {

struct SiteRecord {
    std::string domain;
    std::int64_t rank = 0;
    bool https = false;
    bool login_detected = false;
    std::set<std::string> cdn_providers;
    SiteVerdict verdict;
    std::optional<std::string> dns_provider;
    std::optional<std::string> category;

    bool is_cdn_enabled() const { return https && login_detected && !cdn_providers.empty(); }
    bool operator==(const SiteRecord&) const = default;
};

nlohmann::ordered_json to_json(const SiteRecord& r);
SiteRecord record_from_json(const nlohmann::json& j);
std::string to_jsonl_line(const SiteRecord& r);
// Throws SchemaError naming the 1-based line number of a bad line.
std::vector<SiteRecord> read_records_jsonl(std::istream& in);
std::vector<SiteRecord> load_records_jsonl(const std::string& path);

inline constexpr std::int64_t kIntervalWidth = 500;
inline constexpr std::int64_t kMaxIntervals = 100;

// ceil(rank / 500). Throws PreconditionError for rank < 1.
std::int64_t interval_of(std::int64_t rank);

// round-half-up(100 * num / den); nullopt when den == 0.
std::optional<std::int64_t> percent_round(std::int64_t num, std::int64_t den);
// Same in tenths of a percent, e.g. 165 for 16.5%.
std::optional<std::int64_t> permille_round(std::int64_t num, std::int64_t den);

struct IntervalStat {
    std::int64_t interval = 0;
    std::int64_t rank_lo = 0;
    std::int64_t rank_hi = 0;
    std::int64_t cdn_enabled = 0;
    std::int64_t exposed = 0;
    std::int64_t encrypted = 0;
    std::optional<std::int64_t> pct_exposed;
    std::optional<std::int64_t> pct_encrypted;
};

// One row per interval from 1 to the largest interval present.
// Throws PreconditionError for ranks beyond 50000.
std::vector<IntervalStat> interval_percentages(const std::vector<SiteRecord>& records);

struct CdfPoint {
    std::int64_t rank = 0;
    double cum_fraction = 0.0;
};
std::vector<CdfPoint> cdf_series(const std::vector<SiteRecord>& records);

struct TableRow {
    std::string name;
    std::int64_t cdn_enabled = 0;
    std::int64_t exposed = 0;
    std::int64_t percent() const { return percent_round(exposed, cdn_enabled).value_or(0); }
};

// Rows sorted by cdn_enabled descending, then name.
std::vector<TableRow> provider_table(const std::vector<SiteRecord>& records);

inline constexpr std::int64_t kMinCategorySize = 20;
using CategoryMap = std::map<std::string, std::string>;

// Categories from the map (falling back to each record's own category);
// rows only for categories with at least 20 CDN-enabled sites.
std::vector<TableRow> category_table(const std::vector<SiteRecord>& records,
                                     const CategoryMap& category_map = {});

// `domain,category` CSV; a header line starting with "domain" is skipped.
CategoryMap load_category_map(const std::string& path);

struct EncryptionShare {
    std::int64_t count = 0;
    std::int64_t cdn_enabled = 0;
    std::int64_t tenths = 0;  // percent * 10, round-half-up
    std::string percent_text() const;
};
EncryptionShare encryption_share(const std::vector<SiteRecord>& records);

enum class ReportFormat { csv, jsonl, plotdata };

// Writes the artifacts of one format into out_dir (created if needed).
// Output bytes do not depend on the input order. Throws IoError.
void emit_report(const std::vector<SiteRecord>& records, ReportFormat format,
                 const std::string& out_dir);
void emit_all(const std::vector<SiteRecord>& records, const std::string& out_dir);

// In-memory renderings used by emit_report.
std::string intervals_csv(const std::vector<SiteRecord>& records);
std::string providers_csv(const std::vector<SiteRecord>& records);
std::string categories_csv(const std::vector<SiteRecord>& records);
std::string cdf_csv(const std::vector<SiteRecord>& records);
std::string records_jsonl(const std::vector<SiteRecord>& records);

// 50,000 synthetic records whose aggregate counts are the published ones:
// 42,502 HTTPS, 17,111 login-detected, 12,451 CDN-enabled, 4,114 exposed,
// 2,057 encrypted, plus the per-provider and per-category tables.
std::vector<SiteRecord> published_dataset();

}  // namespace cdnexpose
